//! Deterministic synthetic player tracklets with ground-truth glyph boxes.
//!
//! Each frame shows a player crop on grass: head, arms, a jersey torso,
//! shorts and legs. In "visible" frames the jersey number is drawn with a
//! 5x7 bitmap font centered in the default RoI. Frames may also carry an
//! opposition player entering from a side edge with its own number, a grey
//! occluder, box blur and sensor noise.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{self, GlyphKind, GlyphRow};
use crate::error::{Error, Result};
use crate::sampler::derive_seed;
use crate::types::{BBox, Frame, JerseyLabel};

/// Rows top to bottom, bit 4 = leftmost column.
const FONT: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

pub const GLYPH_COLS: usize = 5;
pub const GLYPH_ROWS: usize = 7;

#[inline]
pub fn glyph_bit(digit: u8, row: usize, col: usize) -> bool {
    FONT[digit as usize][row] & (0x10 >> col) != 0
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub tracklet_count: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub width: usize,
    pub height: usize,
    pub target_hue: f64,
    pub opposition_hue: f64,
    /// Per-frame probability that the number faces the camera.
    pub visibility: f64,
    /// Per-frame probability of an opposition player at a side edge.
    pub distractor_prob: f64,
    pub blur_min: usize,
    pub blur_max: usize,
    pub occluder_prob: f64,
    pub occluder_min: usize,
    pub occluder_max: usize,
    /// Font pixel size in image pixels, drawn once per tracklet.
    pub scale_min: usize,
    pub scale_max: usize,
    /// Probability that a tracklet never shows a number (label -1).
    pub absent_prob: f64,
    pub single_digit_prob: f64,
    /// Two-digit numbers reserved for the test split.
    pub holdout_count: usize,
    /// Share of test tracklets labeled with a reserved number.
    pub holdout_share: f64,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tracklet_count: 200,
            frames_min: 80,
            frames_max: 120,
            width: 120,
            height: 150,
            target_hue: 6.0,
            opposition_hue: 222.0,
            visibility: 0.12,
            distractor_prob: 0.08,
            blur_min: 0,
            blur_max: 1,
            occluder_prob: 0.05,
            occluder_min: 8,
            occluder_max: 24,
            scale_min: 4,
            scale_max: 5,
            absent_prob: 0.05,
            single_digit_prob: 0.3,
            holdout_count: 12,
            holdout_share: 0.5,
            train_ratio: 0.6,
            val_ratio: 0.1,
            test_ratio: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, hue) in [
            ("synth.target_hue", self.target_hue),
            ("synth.opposition_hue", self.opposition_hue),
        ] {
            if !(0.0..360.0).contains(&hue) {
                return Err(Error::config(format!("{name}: hue out of range [0, 360)")));
            }
        }
        for (name, p) in [
            ("synth.visibility", self.visibility),
            ("synth.distractor_prob", self.distractor_prob),
            ("synth.occluder_prob", self.occluder_prob),
            ("synth.absent_prob", self.absent_prob),
            ("synth.single_digit_prob", self.single_digit_prob),
            ("synth.holdout_share", self.holdout_share),
            ("synth.train_ratio", self.train_ratio),
            ("synth.val_ratio", self.val_ratio),
            ("synth.test_ratio", self.test_ratio),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if (self.train_ratio + self.val_ratio + self.test_ratio - 1.0).abs() > 1e-9 {
            return Err(Error::config("synth split ratios must sum to 1"));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(Error::config("synth: need 1 <= frames_min <= frames_max"));
        }
        if self.blur_min > self.blur_max {
            return Err(Error::config("synth: need blur_min <= blur_max"));
        }
        if self.occluder_min == 0 || self.occluder_min > self.occluder_max {
            return Err(Error::config("synth: need 1 <= occluder_min <= occluder_max"));
        }
        if self.scale_min == 0 || self.scale_min > self.scale_max {
            return Err(Error::config("synth: need 1 <= scale_min <= scale_max"));
        }
        if self.width < 40 || self.height < 40 {
            return Err(Error::config("synth frame must be at least 40x40"));
        }
        // a two-digit number must fit the torso-back region
        let (rw, rh) = (self.width as f64 * 0.5, self.height as f64 * 0.3);
        if (11 * self.scale_max) as f64 > rw || (7 * self.scale_max) as f64 > rh {
            return Err(Error::config("synth.scale_max too large for the frame"));
        }
        if self.holdout_count > 30 {
            return Err(Error::config("synth.holdout_count must be at most 30"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Ground truth of one rendered frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameMeta {
    pub index: usize,
    /// The target number was drawn and is at most 30% covered.
    pub visible: bool,
    /// Tight per-digit boxes of the target number, left to right.
    pub target_digits: Vec<BBox>,
    pub distractor_digits: Vec<BBox>,
}

impl FrameMeta {
    /// Union of the target digit boxes.
    pub fn number_box(&self) -> Option<BBox> {
        let mut it = self.target_digits.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, b| acc.union(b)))
    }

    pub fn rows(&self) -> Vec<GlyphRow> {
        let target = self.target_digits.iter().map(|b| (GlyphKind::Target, b));
        let distractor = self
            .distractor_digits
            .iter()
            .map(|b| (GlyphKind::Distractor, b));
        target
            .chain(distractor)
            .map(|(kind, b)| GlyphRow {
                frame_index: self.index,
                visible: self.visible,
                kind,
                bbox: *b,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackletMeta {
    pub id: String,
    pub split: Split,
    pub label: JerseyLabel,
    pub frames: Vec<FrameMeta>,
}

impl TrackletMeta {
    pub fn visible_frames(&self) -> Vec<usize> {
        self.frames
            .iter()
            .filter(|f| f.visible)
            .map(|f| f.index)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthMetadata {
    pub tracklets: Vec<TrackletMeta>,
    /// Two-digit labels that only occur in the test split.
    pub holdout: Vec<i32>,
}

/// Specification of one tracklet before rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackletPlan {
    pub id: String,
    pub split: Split,
    pub label: JerseyLabel,
}

/// Reserved two-digit numbers such that every tens and units digit still
/// occurs among the remaining two-digit numbers.
fn choose_holdout(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<i32> {
    let mut pool: Vec<i32> = (10..100).collect();
    pool.shuffle(rng);
    let mut chosen: Vec<i32> = Vec::new();
    for n in pool {
        if chosen.len() == cfg.holdout_count {
            break;
        }
        let tens_left = (10..100)
            .filter(|m| m / 10 == n / 10 && *m != n && !chosen.contains(m))
            .count();
        let units_left = (10..100)
            .filter(|m| m % 10 == n % 10 && *m != n && !chosen.contains(m))
            .count();
        if tens_left > 0 && units_left > 0 {
            chosen.push(n);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Split sizes by rounding the ratios; the test split takes the remainder.
pub fn split_counts(cfg: &SynthConfig) -> [usize; 3] {
    let n = cfg.tracklet_count;
    let train = ((n as f64 * cfg.train_ratio).round() as usize).min(n);
    let val = ((n as f64 * cfg.val_ratio).round() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Draws from a shuffled copy of `items`, reshuffling once every item has
/// been drawn, so a split covers as many distinct numbers as it can.
struct Deck {
    items: Vec<i32>,
    next: usize,
}

impl Deck {
    fn new(items: Vec<i32>) -> Self {
        let next = items.len();
        Deck { items, next }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> i32 {
        if self.next == self.items.len() {
            self.items.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.items[self.next - 1]
    }
}

/// Labels and splits for every tracklet, plus the reserved numbers.
pub fn plan(cfg: &SynthConfig) -> Result<(Vec<TrackletPlan>, Vec<i32>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let holdout = choose_holdout(cfg, &mut rng);
    let common: Vec<i32> = (10..100).filter(|n| !holdout.contains(n)).collect();
    let counts = split_counts(cfg);
    let mut plans = Vec::with_capacity(cfg.tracklet_count);
    for (split, count) in Split::ALL.into_iter().zip(counts) {
        let mut singles = Deck::new((0..10).collect());
        let mut doubles = Deck::new(common.clone());
        let mut reserved = Deck::new(holdout.clone());
        for _ in 0..count {
            let number = if rng.gen_bool(cfg.absent_prob) {
                -1
            } else if split == Split::Test && !holdout.is_empty() && rng.gen_bool(cfg.holdout_share)
            {
                reserved.draw(&mut rng)
            } else if rng.gen_bool(cfg.single_digit_prob) {
                singles.draw(&mut rng)
            } else {
                doubles.draw(&mut rng)
            };
            plans.push(TrackletPlan {
                id: format!("trk{:05}", plans.len()),
                split,
                label: JerseyLabel::new(number)?,
            });
        }
    }
    Ok((plans, holdout))
}

/// HSV with hue in degrees, saturation and value in `[0, 1]`.
pub fn hsv_to_rgb(hue: f64, s: f64, v: f64) -> [f64; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
}

/// Float RGB canvas plus an "owner" layer used to measure occlusion of
/// the target number.
struct Canvas {
    w: usize,
    h: usize,
    rgb: Vec<[f64; 3]>,
    /// True where a pixel currently shows a lit target glyph cell.
    target: Vec<bool>,
}

impl Canvas {
    fn new(w: usize, h: usize, color: [f64; 3]) -> Self {
        Canvas {
            w,
            h,
            rgb: vec![color; w * h],
            target: vec![false; w * h],
        }
    }

    /// Fills the half-open rectangle, clipped to the canvas.
    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: [f64; 3]) {
        let (x0, x1) = (x0.max(0) as usize, (x1.max(0) as usize).min(self.w));
        let (y0, y1) = (y0.max(0) as usize, (y1.max(0) as usize).min(self.h));
        for y in y0..y1 {
            for x in x0..x1 {
                self.rgb[y * self.w + x] = color;
                self.target[y * self.w + x] = false;
            }
        }
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, color: [f64; 3]) {
        for y in 0..self.h {
            for x in 0..self.w {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.rgb[y * self.w + x] = color;
                    self.target[y * self.w + x] = false;
                }
            }
        }
    }

    /// Draws `digits` with the top-left of the first cell at `(x0, y0)`
    /// and returns each digit's tight box, clipped to the canvas.
    fn number(
        &mut self,
        digits: &[u8],
        x0: i64,
        y0: i64,
        scale: usize,
        color: [f64; 3],
        is_target: bool,
    ) -> Vec<BBox> {
        let s = scale as i64;
        let mut boxes = Vec::new();
        for (k, &d) in digits.iter().enumerate() {
            let cell_x = x0 + k as i64 * (GLYPH_COLS as i64 + 1) * s;
            let mut bounds: Option<(i64, i64, i64, i64)> = None;
            for row in 0..GLYPH_ROWS {
                for col in 0..GLYPH_COLS {
                    if !glyph_bit(d, row, col) {
                        continue;
                    }
                    let px = cell_x + col as i64 * s;
                    let py = y0 + row as i64 * s;
                    for y in py.max(0)..(py + s).min(self.h as i64) {
                        for x in px.max(0)..(px + s).min(self.w as i64) {
                            let i = y as usize * self.w + x as usize;
                            self.rgb[i] = color;
                            self.target[i] = is_target;
                            bounds = Some(match bounds {
                                None => (x, y, x, y),
                                Some((a, b, c, e)) => (a.min(x), b.min(y), c.max(x), e.max(y)),
                            });
                        }
                    }
                }
            }
            if let Some((a, b, c, e)) = bounds {
                boxes.push(BBox {
                    x1: a as f64,
                    y1: b as f64,
                    x2: (c + 1) as f64,
                    y2: (e + 1) as f64,
                });
            }
        }
        boxes
    }

    fn target_pixels(&self) -> usize {
        self.target.iter().filter(|&&t| t).count()
    }
}

/// Separable box blur with edge clamping.
fn box_blur(px: &mut [[f64; 3]], w: usize, h: usize, r: usize) {
    if r == 0 {
        return;
    }
    let n = (2 * r + 1) as f64;
    let mut tmp = vec![[0.0; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for k in 0..=2 * r {
                let xx = (x + k).saturating_sub(r).min(w - 1);
                let p = px[y * w + xx];
                (0..3).for_each(|c| acc[c] += p[c]);
            }
            tmp[y * w + x] = acc.map(|v| v / n);
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for k in 0..=2 * r {
                let yy = (y + k).saturating_sub(r).min(h - 1);
                let p = tmp[yy * w + x];
                (0..3).for_each(|c| acc[c] += p[c]);
            }
            px[y * w + x] = acc.map(|v| v / n);
        }
    }
}

const GRASS: [f64; 3] = [62.0, 128.0, 52.0];
const SKIN: [f64; 3] = [222.0, 172.0, 140.0];
const SHORTS: [f64; 3] = [28.0, 28.0, 36.0];
const OCCLUDER: [f64; 3] = [128.0, 128.0, 128.0];

/// Per-tracklet appearance drawn once.
struct Look {
    scale: usize,
    brightness: f64,
    jersey: [f64; 3],
    digit: [f64; 3],
    opposition: [f64; 3],
    opposition_digit: [f64; 3],
}

fn frame_from_canvas(index: usize, c: &Canvas, rng: &mut ChaCha8Rng, brightness: f64) -> Frame {
    let mut pixels = Vec::with_capacity(c.w * c.h * 3);
    for p in &c.rgb {
        for v in p {
            let noisy = v * brightness + rng.gen_range(-4.0..4.0);
            pixels.push(noisy.round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame::new(index, c.w, c.h, pixels).expect("canvas dimensions")
}

fn render_frame(
    cfg: &SynthConfig,
    index: usize,
    digits: &[u8],
    look: &Look,
    rng: &mut ChaCha8Rng,
) -> (Frame, FrameMeta) {
    let (w, h) = (cfg.width, cfg.height);
    let (wf, hf) = (w as f64, h as f64);
    let mut c = Canvas::new(w, h, GRASS);
    let sway = rng.gen_range(-2i64..=2);
    let at = |fx: f64| (fx * wf).round() as i64 + sway;
    let aty = |fy: f64| (fy * hf).round() as i64;

    // body, back to front
    c.rect(at(0.32), aty(0.80), at(0.42), h as i64, SKIN);
    c.rect(at(0.58), aty(0.80), at(0.68), h as i64, SKIN);
    c.rect(at(0.23), aty(0.66), at(0.77), aty(0.80), SHORTS);
    c.rect(at(0.08), aty(0.21), at(0.18), aty(0.52), SKIN);
    c.rect(at(0.82), aty(0.21), at(0.92), aty(0.52), SKIN);
    c.rect(at(0.18), aty(0.18), at(0.82), aty(0.66), look.jersey);
    c.ellipse(wf * 0.5 + sway as f64, hf * 0.095, wf * 0.1, hf * 0.08, SKIN);

    let mut meta = FrameMeta {
        index,
        ..FrameMeta::default()
    };
    let shows_number = !digits.is_empty() && rng.gen_bool(cfg.visibility);
    let mut drawn = 0;
    if shows_number {
        let s = look.scale as i64;
        let nw = digits.len() as i64 * (GLYPH_COLS as i64 + 1) * s - s;
        let nh = GLYPH_ROWS as i64 * s;
        let cx = (wf * 0.5).round() as i64 + sway + rng.gen_range(-3i64..=3);
        let cy = (hf * 0.35).round() as i64 + rng.gen_range(-3i64..=3);
        // keep the whole number inside the default RoI
        let x0 = (cx - nw / 2).clamp(at(0.25) - sway, (at(0.75) - sway - nw).max(0));
        let y0 = (cy - nh / 2).clamp(aty(0.2), (aty(0.5) - nh).max(0));
        meta.target_digits = c.number(digits, x0, y0, look.scale, look.digit, true);
        drawn = c.target_pixels();
    }

    if rng.gen_bool(cfg.distractor_prob) {
        let count = rng.gen_range(1..=2usize);
        let ds: Vec<u8> = (0..count).map(|_| rng.gen_range(0..10u8)).collect();
        let scale = rng.gen_range(cfg.scale_min..=cfg.scale_max);
        let s = scale as i64;
        let nw = count as i64 * (GLYPH_COLS as i64 + 1) * s - s;
        let patch = (wf * rng.gen_range(0.28..0.42)).round() as i64;
        let top = aty(rng.gen_range(0.10..0.22));
        let bottom = top + (hf * 0.6) as i64;
        let left_side = rng.gen_bool(0.5);
        let (px0, px1) = if left_side {
            (0, patch)
        } else {
            (w as i64 - patch, w as i64)
        };
        c.rect(px0, top, px1, bottom, look.opposition);
        // digits hug the patch's inner edge, straddling the RoI fringe
        let inner = if left_side {
            px1 - nw - s
        } else {
            px0 + s
        };
        let ny = top + (hf * 0.12) as i64 + rng.gen_range(0..=(hf * 0.08) as i64);
        meta.distractor_digits = c.number(&ds, inner, ny, scale, look.opposition_digit, false);
    }

    if rng.gen_bool(cfg.occluder_prob) {
        let ow = rng.gen_range(cfg.occluder_min..=cfg.occluder_max) as i64;
        let oh = rng.gen_range(cfg.occluder_min..=cfg.occluder_max) as i64;
        let ox = rng.gen_range(0..(w as i64 - ow).max(1));
        let oy = rng.gen_range(aty(0.15)..aty(0.6));
        c.rect(ox, oy, ox + ow, oy + oh, OCCLUDER);
    }

    meta.visible = shows_number && drawn > 0 && (c.target_pixels() as f64) >= 0.7 * drawn as f64;
    let radius = rng.gen_range(cfg.blur_min..=cfg.blur_max);
    box_blur(&mut c.rgb, w, h, radius);
    let frame = frame_from_canvas(index, &c, rng, look.brightness);
    (frame, meta)
}

/// Renders every frame of one tracklet from its own derived seed.
pub fn render_tracklet(cfg: &SynthConfig, plan: &TrackletPlan) -> (Vec<Frame>, TrackletMeta) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &plan.id));
    let look = Look {
        scale: rng.gen_range(cfg.scale_min..=cfg.scale_max),
        brightness: rng.gen_range(0.85..1.1),
        jersey: hsv_to_rgb(cfg.target_hue, 0.85, 0.6),
        digit: hsv_to_rgb(cfg.target_hue + 40.0, 0.35, 1.0),
        opposition: hsv_to_rgb(cfg.opposition_hue, 0.85, 0.6),
        opposition_digit: hsv_to_rgb(cfg.opposition_hue + 40.0, 0.35, 1.0),
    };
    let n = rng.gen_range(cfg.frames_min..=cfg.frames_max);
    let digits = plan.label.digits();
    let mut frames = Vec::with_capacity(n);
    let mut metas = Vec::with_capacity(n);
    for i in 0..n {
        let (f, m) = render_frame(cfg, i, &digits, &look, &mut rng);
        frames.push(f);
        metas.push(m);
    }
    let meta = TrackletMeta {
        id: plan.id.clone(),
        split: plan.split,
        label: plan.label,
        frames: metas,
    };
    (frames, meta)
}

pub fn split_dir(root: &Path, split: Split) -> PathBuf {
    root.join(split.dir_name())
}

/// Renders the whole dataset under `root/{train,val,test}` and returns the
/// ground truth.
pub fn generate(cfg: &SynthConfig, root: &Path) -> Result<SynthMetadata> {
    let (plans, holdout) = plan(cfg)?;
    for split in Split::ALL {
        let dir = split_dir(root, split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let tracklets: Vec<TrackletMeta> = plans
        .par_iter()
        .map(|p| {
            let (frames, meta) = render_tracklet(cfg, p);
            let dir = split_dir(root, p.split).join(&p.id);
            dataset::write_tracklet(&dir, &frames)?;
            let rows: Vec<GlyphRow> = meta.frames.iter().flat_map(|f| f.rows()).collect();
            dataset::write_meta(&dir.join(dataset::META_FILE), &rows)?;
            Ok(meta)
        })
        .collect::<Result<_>>()?;
    for split in Split::ALL {
        let gt: Vec<(String, JerseyLabel)> = tracklets
            .iter()
            .filter(|t| t.split == split)
            .map(|t| (t.id.clone(), t.label))
            .collect();
        dataset::write_gt(&split_dir(root, split).join(dataset::GT_FILE), &gt)?;
    }
    Ok(SynthMetadata {
        tracklets,
        holdout,
    })
}
