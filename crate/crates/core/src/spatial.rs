//! Spatial-context filtering: hue signatures of detections, intra-frame
//! merging of digit boxes into whole numbers (local histogram correlation)
//! and cross-frame clustering that keeps the target player's number
//! (global histogram correlation).

use crate::error::{Error, Result};
use crate::jnl::{localize_tracklet, Detector};
use crate::roi::{filter_by_roi, RoiConfig};
use crate::types::{BBox, Detection, Frame, Tracklet};

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialContextConfig {
    pub bins: usize,
    /// Minimum correlation for two boxes in one frame to merge.
    pub lhc_tau: f64,
    /// Maximum horizontal gap, as a multiple of the pair's mean width.
    pub lhc_gap: f64,
    /// Maximum vertical center offset, as a fraction of the smaller height.
    pub lhc_voff: f64,
    /// Average-link correlation needed to join two clusters.
    pub ghc_tau: f64,
}

impl Default for SpatialContextConfig {
    fn default() -> Self {
        SpatialContextConfig {
            bins: 30,
            lhc_tau: 0.7,
            lhc_gap: 1.0,
            lhc_voff: 0.5,
            ghc_tau: 0.7,
        }
    }
}

impl SpatialContextConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::config("sc.bins must be at least 2"));
        }
        for (name, v) in [("sc.lhc_tau", self.lhc_tau), ("sc.ghc_tau", self.ghc_tau)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [-1, 1]")));
            }
        }
        if !(self.lhc_gap >= 0.0 && self.lhc_voff >= 0.0) {
            return Err(Error::config("sc.lhc_gap and sc.lhc_voff must be non-negative"));
        }
        Ok(())
    }
}

/// Normalized distribution of pixel hues over `[0, 360)` in equal bins.
#[derive(Clone, Debug, PartialEq)]
pub struct HueHistogram {
    pub bins: Vec<f64>,
    pub pixel_count: usize,
}

impl HueHistogram {
    /// No pixels: uniform bins, zero count.
    pub fn degenerate(bins: usize) -> Self {
        HueHistogram {
            bins: vec![1.0 / bins as f64; bins],
            pixel_count: 0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.pixel_count == 0
    }
}

/// Hexcone hue in degrees; achromatic pixels get 0.
pub fn rgb_to_hue(r: u8, g: u8, b: u8) -> f64 {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return 0.0;
    }
    let h = if max == r {
        60.0 * ((g - b) / d)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// Histogram over pixels whose centers fall inside `bbox` (half-open).
pub fn hue_histogram(frame: &Frame, bbox: &BBox, bins: usize) -> HueHistogram {
    let x0 = (bbox.x1 - 0.5).ceil().max(0.0) as usize;
    let y0 = (bbox.y1 - 0.5).ceil().max(0.0) as usize;
    let x1 = ((bbox.x2 - 0.5).ceil().max(0.0) as usize).min(frame.width());
    let y1 = ((bbox.y2 - 0.5).ceil().max(0.0) as usize).min(frame.height());
    let width = 360.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut n = 0usize;
    for y in y0..y1 {
        for x in x0..x1 {
            let [r, g, b] = frame.rgb(x, y);
            let bin = ((rgb_to_hue(r, g, b) / width) as usize).min(bins - 1);
            counts[bin] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return HueHistogram::degenerate(bins);
    }
    HueHistogram {
        bins: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        pixel_count: n,
    }
}

/// Pearson correlation of the bin vectors. Zero-variance inputs give 1 when
/// both are constant and 0 otherwise.
///
/// Panics if the bin counts differ.
pub fn hist_correlation(a: &HueHistogram, b: &HueHistogram) -> f64 {
    assert_eq!(a.bins.len(), b.bins.len(), "histogram bin counts differ");
    pearson(&a.bins, &b.bins)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    // normalized histograms put real spread far above this
    const FLAT: f64 = 1e-18;
    match (va <= FLAT, vb <= FLAT) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0),
    }
}

fn lhc_mergeable(
    a: &Detection,
    ha: &HueHistogram,
    b: &Detection,
    hb: &HueHistogram,
    cfg: &SpatialContextConfig,
) -> bool {
    let gap = a.bbox.x1.max(b.bbox.x1) - a.bbox.x2.min(b.bbox.x2);
    let mean_width = 0.5 * (a.bbox.width() + b.bbox.width());
    if gap > cfg.lhc_gap * mean_width {
        return false;
    }
    let dy = (a.bbox.center().1 - b.bbox.center().1).abs();
    if dy > cfg.lhc_voff * a.bbox.height().min(b.bbox.height()) {
        return false;
    }
    hist_correlation(ha, hb) >= cfg.lhc_tau
}

fn by_left_edge(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    let key = |d: &Detection| [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2];
    key(a)
        .iter()
        .zip(key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Merges horizontally adjacent, vertically aligned, hue-similar boxes of
/// one frame into whole-number boxes. Boxes are scanned left to right and
/// the first mergeable pair is replaced by its union (max confidence) until
/// no pair qualifies.
pub fn lhc_merge(
    dets: &[Detection],
    frame: &Frame,
    cfg: &SpatialContextConfig,
) -> Vec<Detection> {
    let mut items: Vec<(Detection, HueHistogram)> = dets
        .iter()
        .map(|d| (*d, hue_histogram(frame, &d.bbox, cfg.bins)))
        .collect();
    items.sort_by(|a, b| by_left_edge(&a.0, &b.0));
    'outer: loop {
        for i in 0..items.len() {
            for j in i + 1..items.len() {
                let (a, ha) = &items[i];
                let (b, hb) = &items[j];
                if lhc_mergeable(a, ha, b, hb, cfg) {
                    let bbox = a.bbox.union(&b.bbox);
                    let merged = Detection {
                        frame_index: a.frame_index,
                        bbox,
                        confidence: a.confidence.max(b.confidence),
                    };
                    let hist = hue_histogram(frame, &bbox, cfg.bins);
                    items.remove(j);
                    items[i] = (merged, hist);
                    items.sort_by(|a, b| by_left_edge(&a.0, &b.0));
                    continue 'outer;
                }
            }
        }
        break;
    }
    items.into_iter().map(|(d, _)| d).collect()
}

/// Detections that survive cross-frame clustering and the frames they mark.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyframeResult {
    pub kept_detections: Vec<Detection>,
    /// Distinct frame indices of `kept_detections`, ascending.
    pub keyframe_indices: Vec<usize>,
}

impl KeyframeResult {
    pub fn from_detections(kept_detections: Vec<Detection>) -> Self {
        let mut keyframe_indices: Vec<usize> =
            kept_detections.iter().map(|d| d.frame_index).collect();
        keyframe_indices.sort_unstable();
        keyframe_indices.dedup();
        KeyframeResult {
            kept_detections,
            keyframe_indices,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.keyframe_indices.is_empty()
    }
}

/// Average-link agglomerative clustering under distance `1 - correlation`,
/// merging while the closest pair of clusters is within `max_distance`.
/// Returns clusters as ascending member lists, ordered by first member.
pub fn average_link_clusters(corr: &[Vec<f64>], max_distance: f64) -> Vec<Vec<usize>> {
    let n = corr.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // sum of pairwise distances between clusters, kept exact under merges
    let mut sums: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 1.0 - corr[i][j]).collect())
        .collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let size = (clusters[i].len() * clusters[j].len()) as f64;
                let d = sums[i][j] / size;
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        match best {
            Some((i, j, d)) if d <= max_distance => {
                let moved = clusters.remove(j);
                clusters[i].extend(moved);
                clusters[i].sort_unstable();
                let row_j = sums.remove(j);
                for row in sums.iter_mut() {
                    row.remove(j);
                }
                for k in 0..clusters.len() {
                    if k != i {
                        let other = if k < j { k } else { k + 1 };
                        let v = sums[i][k] + row_j[other];
                        sums[i][k] = v;
                        sums[k][i] = v;
                    }
                }
            }
            _ => break,
        }
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Mean pairwise correlation inside a cluster; 1 for singletons.
fn mean_intra_correlation(members: &[usize], corr: &[Vec<f64>]) -> f64 {
    if members.len() < 2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            sum += corr[i][j];
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Picks the cluster with the most members; ties go to the higher mean
/// intra-cluster correlation, then to the earliest frame.
pub fn select_dominant_cluster<'a>(
    clusters: &'a [Vec<usize>],
    corr: &[Vec<f64>],
    frame_of: impl Fn(usize) -> usize,
) -> Option<&'a Vec<usize>> {
    let min_frame = |c: &[usize]| c.iter().map(|&i| frame_of(i)).min().unwrap_or(usize::MAX);
    clusters.iter().min_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| {
                mean_intra_correlation(b, corr).total_cmp(&mean_intra_correlation(a, corr))
            })
            .then_with(|| min_frame(a).cmp(&min_frame(b)))
            .then_with(|| a[0].cmp(&b[0]))
    })
}

/// Clusters the hue signatures of all detections of a tracklet and keeps
/// the dominant cluster.
pub fn ghc_select(
    dets: &[Detection],
    frames: &[Frame],
    cfg: &SpatialContextConfig,
) -> KeyframeResult {
    let hists: Vec<HueHistogram> = dets
        .iter()
        .filter_map(|d| frames.get(d.frame_index).map(|f| hue_histogram(f, &d.bbox, cfg.bins)))
        .collect();
    if hists.is_empty() || hists.len() != dets.len() {
        return KeyframeResult::default();
    }
    let corr = correlation_matrix(&hists);
    let clusters = average_link_clusters(&corr, 1.0 - cfg.ghc_tau);
    let Some(best) = select_dominant_cluster(&clusters, &corr, |i| dets[i].frame_index) else {
        return KeyframeResult::default();
    };
    KeyframeResult::from_detections(best.iter().map(|&i| dets[i]).collect())
}

pub fn correlation_matrix(hists: &[HueHistogram]) -> Vec<Vec<f64>> {
    let n = hists.len();
    let mut corr = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = hist_correlation(&hists[i], &hists[j]);
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    corr
}

/// Full keyframe identification for one tracklet: localize digits, drop
/// boxes outside the RoI, merge digits per frame, keep the dominant
/// cross-frame cluster.
pub fn kfid(
    tracklet: &Tracklet,
    detector: &dyn Detector,
    roi: &RoiConfig,
    sc: &SpatialContextConfig,
) -> KeyframeResult {
    let detections = localize_tracklet(tracklet, detector);
    let in_roi = filter_by_roi(&detections, &tracklet.frames, roi);
    let mut merged = Vec::with_capacity(in_roi.len());
    let mut start = 0;
    while start < in_roi.len() {
        let frame_index = in_roi[start].frame_index;
        let end = start
            + in_roi[start..]
                .iter()
                .take_while(|d| d.frame_index == frame_index)
                .count();
        merged.extend(lhc_merge(
            &in_roi[start..end],
            &tracklet.frames[frame_index],
            sc,
        ));
        start = end;
    }
    ghc_select(&merged, &tracklet.frames, sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jnl::FileBackedDetector;
    use proptest::prelude::*;

    const RED: [u8; 3] = [255, 0, 0];
    const GREEN: [u8; 3] = [0, 255, 0];

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn one_hot(bins: usize, at: usize, count: usize) -> HueHistogram {
        let mut v = vec![0.0; bins];
        v[at] = 1.0;
        HueHistogram {
            bins: v,
            pixel_count: count,
        }
    }

    #[test]
    fn hue_examples() {
        assert_eq!(rgb_to_hue(255, 0, 0), 0.0);
        assert_eq!(rgb_to_hue(0, 255, 0), 120.0);
        assert_eq!(rgb_to_hue(0, 0, 255), 240.0);
        assert_eq!(rgb_to_hue(128, 128, 128), 0.0);
        assert_eq!(rgb_to_hue(255, 0, 255), 300.0);
        let h = rgb_to_hue(255, 0, 1);
        assert!(h > 359.0 && h < 360.0);
    }

    #[test]
    fn histogram_examples() {
        let f = Frame::filled(0, 20, 20, RED);
        let h = hue_histogram(&f, &b(2.0, 2.0, 10.0, 10.0), 30);
        assert_eq!(h, one_hot(30, 0, 64));

        let mut f = Frame::filled(0, 20, 20, RED);
        for y in 0..20 {
            for x in 10..20 {
                f.set_rgb(x, y, GREEN);
            }
        }
        let h = hue_histogram(&f, &b(5.0, 0.0, 15.0, 4.0), 30);
        // oracle: 5 red and 5 green columns, 4 rows each
        assert_eq!(h.pixel_count, 40);
        assert_eq!(h.bins[0], 0.5);
        assert_eq!(h.bins[10], 0.5);
        assert_eq!(h.bins.iter().sum::<f64>(), 1.0);

        // a box between pixel centers holds no pixels
        let h = hue_histogram(&f, &b(3.6, 3.6, 4.4, 4.4), 30);
        assert_eq!(h, HueHistogram::degenerate(30));
        let h = hue_histogram(&f, &b(30.0, 30.0, 40.0, 40.0), 30);
        assert!(h.is_degenerate());
    }

    #[test]
    fn correlation_examples() {
        let a = one_hot(30, 0, 10);
        let c = one_hot(30, 10, 10);
        assert!((hist_correlation(&a, &a) - 1.0).abs() < 1e-12);
        // closed form for two distinct one-hot vectors of length B
        assert!((hist_correlation(&a, &c) - (-1.0 / 29.0)).abs() < 1e-12);
        let scaled = one_hot(30, 10, 1000);
        assert_eq!(hist_correlation(&a, &c), hist_correlation(&a, &scaled));
        let flat = HueHistogram::degenerate(30);
        assert_eq!(hist_correlation(&flat, &flat), 1.0);
        assert_eq!(hist_correlation(&flat, &a), 0.0);
    }

    fn paint(f: &mut Frame, bbox: BBox, rgb: [u8; 3]) {
        for y in bbox.y1 as usize..bbox.y2 as usize {
            for x in bbox.x1 as usize..bbox.x2 as usize {
                f.set_rgb(x, y, rgb);
            }
        }
    }

    fn det(frame_index: usize, bbox: BBox, confidence: f64) -> Detection {
        Detection {
            frame_index,
            bbox,
            confidence,
        }
    }

    #[test]
    fn lhc_merges_adjacent_same_hue() {
        let mut f = Frame::filled(0, 60, 40, [20, 20, 200]);
        let l = b(10.0, 10.0, 20.0, 26.0);
        let r = b(22.0, 10.0, 32.0, 26.0);
        paint(&mut f, l, [250, 250, 120]);
        paint(&mut f, r, [250, 250, 120]);
        let merged = lhc_merge(&[det(0, r, 0.6), det(0, l, 0.8)], &f, &SpatialContextConfig::default());
        assert_eq!(merged, vec![det(0, b(10.0, 10.0, 32.0, 26.0), 0.8)]);
        assert!(merged[0].bbox.iou(&l.union(&r)) >= 0.8);
    }

    #[test]
    fn lhc_single_is_unchanged() {
        let f = Frame::filled(0, 10, 10, RED);
        let d = det(0, b(1.0, 1.0, 4.0, 6.0), 0.5);
        assert_eq!(lhc_merge(&[d], &f, &SpatialContextConfig::default()), vec![d]);
        assert!(lhc_merge(&[], &f, &SpatialContextConfig::default()).is_empty());
    }

    #[test]
    fn lhc_keeps_opposite_hues_apart() {
        let mut f = Frame::filled(0, 60, 40, [0, 0, 0]);
        let l = b(10.0, 10.0, 20.0, 26.0);
        let r = b(22.0, 10.0, 32.0, 26.0);
        paint(&mut f, l, RED);
        paint(&mut f, r, GREEN);
        let cfg = SpatialContextConfig::default();
        let hl = hue_histogram(&f, &l, 30);
        let hr = hue_histogram(&f, &r, 30);
        assert!(hist_correlation(&hl, &hr) < 0.0);
        assert_eq!(lhc_merge(&[det(0, l, 0.5), det(0, r, 0.5)], &f, &cfg).len(), 2);
    }

    #[test]
    fn lhc_respects_gap_and_alignment() {
        let mut f = Frame::filled(0, 100, 60, [20, 20, 200]);
        let l = b(10.0, 10.0, 20.0, 26.0);
        let far = b(40.0, 10.0, 50.0, 26.0);
        let low = b(22.0, 30.0, 32.0, 46.0);
        for bx in [l, far, low] {
            paint(&mut f, bx, [250, 250, 120]);
        }
        let cfg = SpatialContextConfig::default();
        assert_eq!(lhc_merge(&[det(0, l, 0.5), det(0, far, 0.5)], &f, &cfg).len(), 2);
        assert_eq!(lhc_merge(&[det(0, l, 0.5), det(0, low, 0.5)], &f, &cfg).len(), 2);
    }

    /// Frame whose two vertical halves carry hue-distinct kits.
    fn kit_frame(index: usize, jersey: [u8; 3], digit: [u8; 3]) -> Frame {
        let mut f = Frame::filled(index, 40, 40, jersey);
        paint(&mut f, b(12.0, 10.0, 16.0, 30.0), digit);
        paint(&mut f, b(22.0, 10.0, 26.0, 30.0), digit);
        f
    }

    #[test]
    fn ghc_keeps_majority_kit() {
        // red shirt with yellow digits vs near-white shirt with blue digits
        let mut frames = Vec::new();
        for i in 0..5 {
            frames.push(kit_frame(i, [200, 20, 20], [250, 230, 60]));
        }
        for i in 5..7 {
            frames.push(kit_frame(i, [235, 240, 255], [30, 60, 220]));
        }
        let dets: Vec<Detection> = (0..7).map(|i| det(i, b(8.0, 6.0, 30.0, 34.0), 0.9)).collect();
        let res = ghc_select(&dets, &frames, &SpatialContextConfig::default());
        assert_eq!(res.keyframe_indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(res.kept_detections, dets[..5].to_vec());
    }

    #[test]
    fn ghc_identical_and_empty() {
        let frames: Vec<Frame> = (0..4).map(|i| kit_frame(i, [200, 20, 20], [250, 230, 60])).collect();
        let dets: Vec<Detection> = (0..4).map(|i| det(i, b(8.0, 6.0, 30.0, 34.0), 0.9)).collect();
        let res = ghc_select(&dets, &frames, &SpatialContextConfig::default());
        assert_eq!(res.keyframe_indices, vec![0, 1, 2, 3]);
        assert_eq!(ghc_select(&[], &frames, &SpatialContextConfig::default()), KeyframeResult::default());
    }

    #[test]
    fn ghc_tie_breaks_to_earliest_frame() {
        let frames = vec![
            kit_frame(0, [20, 20, 200], [250, 230, 60]),
            kit_frame(1, [200, 20, 20], [250, 230, 60]),
        ];
        let dets = vec![det(1, b(8.0, 6.0, 30.0, 34.0), 0.9), det(0, b(8.0, 6.0, 30.0, 34.0), 0.9)];
        let res = ghc_select(&dets, &frames, &SpatialContextConfig::default());
        assert_eq!(res.keyframe_indices, vec![0]);
    }

    #[test]
    fn kfid_blank_tracklet_is_empty() {
        let frames: Vec<Frame> = (0..5).map(|i| Frame::filled(i, 120, 150, [30, 140, 40])).collect();
        let t = Tracklet::new("blank", frames, vec![], None).unwrap();
        let det = crate::jnl::HeuristicDetector::new(Default::default());
        let res = kfid(&t, &det, &RoiConfig::default(), &SpatialContextConfig::default());
        assert!(res.is_empty());
    }

    #[test]
    fn kfid_prefers_larger_target_cluster() {
        // target kit in 3 frames, opposition kit in 2, boxes all inside the RoI
        let mut frames = Vec::new();
        for i in 0..5 {
            let (jersey, digit) = if i < 3 {
                ([200, 20, 20], [250, 230, 60])
            } else {
                ([20, 60, 200], [170, 140, 255])
            };
            let mut f = Frame::filled(i, 120, 150, jersey);
            paint(&mut f, b(48.0, 40.0, 56.0, 64.0), digit);
            paint(&mut f, b(60.0, 40.0, 68.0, 64.0), digit);
            frames.push(f);
        }
        let t = Tracklet::new("t", frames, vec![], None).unwrap();
        let rows = (0..5).flat_map(|i| {
            [
                (i, b(46.0, 38.0, 57.0, 66.0), 0.9),
                (i, b(59.0, 38.0, 70.0, 66.0), 0.9),
            ]
        });
        let det = FileBackedDetector::from_rows(rows);
        let res = kfid(&t, &det, &RoiConfig::default(), &SpatialContextConfig::default());
        assert_eq!(res.keyframe_indices, vec![0, 1, 2]);
        // digits were merged into one box per frame
        assert_eq!(res.kept_detections.len(), 3);
        assert_eq!(res.kept_detections[0].bbox, b(46.0, 38.0, 70.0, 66.0));
    }

    fn arb_hist(bins: usize) -> impl Strategy<Value = HueHistogram> {
        proptest::collection::vec(0u32..50, bins).prop_map(move |counts| {
            let total: u32 = counts.iter().sum();
            if total == 0 {
                return HueHistogram::degenerate(bins);
            }
            HueHistogram {
                bins: counts.iter().map(|&c| c as f64 / total as f64).collect(),
                pixel_count: total as usize,
            }
        })
    }

    proptest! {
        #[test]
        fn correlation_symmetric_bounded(a in arb_hist(12), c in arb_hist(12)) {
            let ac = hist_correlation(&a, &c);
            prop_assert!((-1.0..=1.0).contains(&ac));
            prop_assert_eq!(ac, hist_correlation(&c, &a));
            let aa = hist_correlation(&a, &a);
            prop_assert!((aa - 1.0).abs() < 1e-12);
        }

        #[test]
        fn lhc_never_grows_and_is_idempotent(
            boxes in proptest::collection::vec((0u32..50, 0u32..30, 2u32..12, 4u32..14, 0u8..3), 0..6)
        ) {
            let palette = [[250, 250, 120], [30, 220, 30], [250, 240, 100]];
            let mut f = Frame::filled(0, 64, 48, [20, 20, 200]);
            let dets: Vec<Detection> = boxes.iter().map(|&(x, y, w, h, c)| {
                let bx = b(x as f64, y as f64, (x + w).min(64) as f64, (y + h).min(48) as f64);
                paint(&mut f, bx, palette[c as usize]);
                det(0, bx, 0.5)
            }).collect();
            let cfg = SpatialContextConfig::default();
            let once = lhc_merge(&dets, &f, &cfg);
            prop_assert!(once.len() <= dets.len());
            for d in &dets {
                prop_assert!(once.iter().any(|m| m.bbox.contains(&d.bbox)));
            }
            prop_assert_eq!(lhc_merge(&once, &f, &cfg), once.clone());
        }

        #[test]
        fn ghc_members_have_a_close_neighbor(
            hists in proptest::collection::vec(arb_hist(8), 1..10),
        ) {
            let corr = correlation_matrix(&hists);
            let tau = 0.7;
            let clusters = average_link_clusters(&corr, 1.0 - tau);
            let covered: usize = clusters.iter().map(|c| c.len()).sum();
            prop_assert_eq!(covered, hists.len());
            for c in &clusters {
                if c.len() < 2 { continue; }
                for &i in c {
                    prop_assert!(c.iter().any(|&j| j != i && corr[i][j] >= tau - 1e-12));
                }
            }
        }
    }
}
