//! Region-of-interest filtering with the min-area intersection ratio.

use crate::error::{Error, Result};
use crate::types::{BBox, Detection, Frame};

#[derive(Clone, Debug, PartialEq)]
pub struct RoiConfig {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    /// Detections are kept iff their ratio against the RoI is `>=` this.
    pub threshold: f64,
    pub eps: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        RoiConfig {
            left: 0.25,
            top: 0.2,
            right: 0.75,
            bottom: 0.5,
            threshold: 0.5,
            eps: 1e-7,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.left && self.left < self.right && self.right <= 1.0) {
            return Err(Error::config("roi: need 0 <= left < right <= 1"));
        }
        if !(0.0 <= self.top && self.top < self.bottom && self.bottom <= 1.0) {
            return Err(Error::config("roi: need 0 <= top < bottom <= 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("roi.threshold must lie in [0, 1]"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("roi.eps must be positive"));
        }
        Ok(())
    }
}

/// Intersection area over the smaller of the two areas (plus `eps`).
///
/// Unlike IoU this reaches ~1 whenever one box contains the other, so a small
/// digit box fully inside a large RoI scores as valid.
pub fn i_star(r1: &BBox, r2: &BBox, eps: f64) -> f64 {
    let inter = r1.intersect(r2).map_or(0.0, |b| b.area());
    inter / (r1.area().min(r2.area()) + eps)
}

pub fn roi_for_frame(width: usize, height: usize, cfg: &RoiConfig) -> BBox {
    let (w, h) = (width as f64, height as f64);
    BBox {
        x1: cfg.left * w,
        y1: cfg.top * h,
        x2: cfg.right * w,
        y2: cfg.bottom * h,
    }
}

/// Slack on the threshold comparison. `eps` alone pulls an exact half
/// overlap to 0.49999999975, which should still count as reaching 0.5.
pub const COMPARE_SLACK: f64 = 1e-9;

/// Keeps detections whose ratio against their frame's RoI reaches the
/// threshold (within [`COMPARE_SLACK`]). Order is preserved. Detections
/// referencing a frame that is not in `frames` are dropped.
pub fn filter_by_roi(dets: &[Detection], frames: &[Frame], cfg: &RoiConfig) -> Vec<Detection> {
    dets.iter()
        .filter(|d| {
            frames.get(d.frame_index).is_some_and(|f| {
                let roi = roi_for_frame(f.width(), f.height(), cfg);
                i_star(&roi, &d.bbox, cfg.eps) >= cfg.threshold - COMPARE_SLACK
            })
        })
        .copied()
        .collect()
}
