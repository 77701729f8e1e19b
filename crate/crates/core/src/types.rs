//! Shared domain types: frames, boxes, detections, tracklets and jersey labels.

use std::fmt;

use crate::error::{Error, Result};

/// One 8-bit RGB raster of a player crop, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("{width}x{height} frame")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidFrame(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                width * height * 3
            )));
        }
        Ok(Frame {
            index,
            width,
            height,
            pixels,
        })
    }

    /// A frame filled with a single color.
    pub fn filled(index: usize, width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Frame::new(index, width, height, pixels).expect("non-empty dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let o = (y * self.width + x) * 3;
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Luminance (0.299 r + 0.587 g + 0.114 b) per pixel, in 8-bit units.
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Axis-aligned box in real-valued pixel coordinates, `x1 < x2`, `y1 < y2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(Error::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// Overlap rectangle, `None` when the overlap extent is zero or negative.
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        (x1 < x2 && y1 < y2).then_some(BBox { x1, y1, x2, y2 })
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        match self.intersect(other) {
            Some(i) => {
                let inter = i.area();
                inter / (self.area() + other.area() - inter)
            }
            None => 0.0,
        }
    }

    /// Clip to `[0, width] x [0, height]`; `None` if nothing is left.
    pub fn clip(&self, width: usize, height: usize) -> Option<BBox> {
        let frame = BBox {
            x1: 0.0,
            y1: 0.0,
            x2: width as f64,
            y2: height as f64,
        };
        self.intersect(&frame)
    }
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

pub fn intersect(a: &BBox, b: &BBox) -> Option<BBox> {
    a.intersect(b)
}

/// One localized digit region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    /// Builds a detection whose box is clipped to the frame and whose
    /// confidence is clamped into `[0, 1]`. Returns `None` when the box
    /// lies entirely outside the frame.
    pub fn clipped(
        frame_index: usize,
        bbox: BBox,
        confidence: f64,
        width: usize,
        height: usize,
    ) -> Option<Self> {
        Some(Detection {
            frame_index,
            bbox: bbox.clip(width, height)?,
            confidence: confidence.clamp(0.0, 1.0),
        })
    }
}

/// Jersey number in `0..=99`, or `-1` when no number is visible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JerseyLabel(i32);

impl JerseyLabel {
    pub const ABSENT: JerseyLabel = JerseyLabel(-1);

    pub fn new(number: i32) -> Result<Self> {
        if number == -1 || (0..=99).contains(&number) {
            Ok(JerseyLabel(number))
        } else {
            Err(Error::LabelOutOfRange(number))
        }
    }

    pub fn number(self) -> i32 {
        self.0
    }

    pub fn is_absent(self) -> bool {
        self.0 == -1
    }

    /// Decimal digits left to right; empty for the absent label.
    pub fn digits(self) -> Vec<u8> {
        match self.0 {
            -1 => Vec::new(),
            n if n < 10 => vec![n as u8],
            n => vec![(n / 10) as u8, (n % 10) as u8],
        }
    }
}

impl fmt::Display for JerseyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Class reserved for "no digit in this position".
pub const ABSENT_DIGIT: u8 = 10;
pub const DIGIT_CLASSES: usize = 11;

/// Two 11-way digit targets: leftmost digit and units digit (or absent).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DigitPair {
    pub first: u8,
    pub second: u8,
}

impl DigitPair {
    pub fn new(first: u8, second: u8) -> Result<Self> {
        for d in [first, second] {
            if d > ABSENT_DIGIT {
                return Err(Error::DigitOutOfRange(d));
            }
        }
        Ok(DigitPair { first, second })
    }
}

/// `n < 10` maps to `(n, absent)`, two-digit numbers to `(tens, units)`,
/// and the absent label to `(absent, absent)`.
pub fn encode_label(label: JerseyLabel) -> DigitPair {
    match label.number() {
        -1 => DigitPair {
            first: ABSENT_DIGIT,
            second: ABSENT_DIGIT,
        },
        n if n < 10 => DigitPair {
            first: n as u8,
            second: ABSENT_DIGIT,
        },
        n => DigitPair {
            first: (n / 10) as u8,
            second: (n % 10) as u8,
        },
    }
}

/// Inverse of [`encode_label`]. The pair `(absent, k)` has no preimage and
/// is read as the single digit `k`.
pub fn decode_pair(pair: DigitPair) -> JerseyLabel {
    match (pair.first, pair.second) {
        (ABSENT_DIGIT, ABSENT_DIGIT) => JerseyLabel::ABSENT,
        (ABSENT_DIGIT, k) | (k, ABSENT_DIGIT) => JerseyLabel(k as i32),
        (a, b) => JerseyLabel(a as i32 * 10 + b as i32),
    }
}

/// An ordered run of frames following one player.
#[derive(Clone, Debug)]
pub struct Tracklet {
    pub id: String,
    pub frames: Vec<Frame>,
    pub detections: Vec<Detection>,
    pub label: Option<JerseyLabel>,
}

impl Tracklet {
    pub fn new(
        id: impl Into<String>,
        frames: Vec<Frame>,
        detections: Vec<Detection>,
        label: Option<JerseyLabel>,
    ) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            if f.index != i {
                return Err(Error::InvalidFrame(format!(
                    "frame at position {i} has index {}",
                    f.index
                )));
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame_index >= frames.len()) {
            return Err(Error::InvalidFrame(format!(
                "detection references frame {} of {}",
                d.frame_index,
                frames.len()
            )));
        }
        Ok(Tracklet {
            id: id.into(),
            frames,
            detections,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&b(0.0, 0.0, 10.0, 10.0)), 100.0);
        assert_eq!(area(&b(2.0, 3.0, 3.0, 4.0)), 1.0);
        assert_eq!(area(&b(0.0, 0.0, 1.5, 2.0)), 3.0);
    }

    #[test]
    fn intersect_examples() {
        assert_eq!(
            intersect(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 0.0, 15.0, 10.0)),
            Some(b(5.0, 0.0, 10.0, 10.0))
        );
        assert_eq!(intersect(&b(0.0, 0.0, 1.0, 1.0), &b(2.0, 2.0, 3.0, 3.0)), None);
        let a = b(1.0, 1.0, 4.0, 5.0);
        assert_eq!(intersect(&a, &a), Some(a));
        // touching edges have zero extent
        assert_eq!(intersect(&b(0.0, 0.0, 1.0, 1.0), &b(1.0, 0.0, 2.0, 1.0)), None);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(1.0, 0.0, 1.0, 5.0).is_err());
        assert!(BBox::new(0.0, 3.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn clipping() {
        let d = Detection::clipped(0, b(-5.0, 2.0, 8.0, 30.0), 1.4, 10, 20).unwrap();
        assert_eq!(d.bbox, b(0.0, 2.0, 8.0, 20.0));
        assert_eq!(d.confidence, 1.0);
        assert!(Detection::clipped(0, b(11.0, 0.0, 12.0, 1.0), 0.5, 10, 20).is_none());
    }

    #[test]
    fn label_encoding_examples() {
        let enc = |n| encode_label(JerseyLabel::new(n).unwrap());
        assert_eq!(enc(7), DigitPair { first: 7, second: 10 });
        assert_eq!(enc(23), DigitPair { first: 2, second: 3 });
        assert_eq!(enc(-1), DigitPair { first: 10, second: 10 });
        assert_eq!(enc(0), DigitPair { first: 0, second: 10 });
        assert_eq!(enc(10), DigitPair { first: 1, second: 0 });

        let dec = |a, b| decode_pair(DigitPair::new(a, b).unwrap()).number();
        assert_eq!(dec(2, 3), 23);
        assert_eq!(dec(10, 10), -1);
        assert_eq!(dec(10, 4), 4);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(JerseyLabel::new(100), Err(Error::LabelOutOfRange(100))));
        assert!(JerseyLabel::new(-2).is_err());
        assert!(DigitPair::new(11, 0).is_err());
    }

    #[test]
    fn label_round_trip_exhaustive() {
        for n in -1..=99 {
            let l = JerseyLabel::new(n).unwrap();
            assert_eq!(decode_pair(encode_label(l)), l);
        }
    }

    #[test]
    fn tracklet_validates_indices() {
        let frames = vec![Frame::filled(0, 2, 2, [0; 3]), Frame::filled(2, 2, 2, [0; 3])];
        assert!(Tracklet::new("t", frames, vec![], None).is_err());
        let frames = vec![Frame::filled(0, 2, 2, [0; 3])];
        let det = Detection {
            frame_index: 1,
            bbox: b(0.0, 0.0, 1.0, 1.0),
            confidence: 0.5,
        };
        assert!(Tracklet::new("t", frames, vec![det], None).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.1..30.0f64, 0.1..30.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn intersect_is_commutative_and_bounded(a in arb_box(), c in arb_box()) {
            let ab = a.intersect(&c);
            prop_assert_eq!(ab, c.intersect(&a));
            if let Some(i) = ab {
                prop_assert!(i.area() <= a.area().min(c.area()) + 1e-9);
                prop_assert!(a.contains(&i) && c.contains(&i));
            }
            prop_assert_eq!(a.intersect(&a), Some(a));
        }
    }
}
