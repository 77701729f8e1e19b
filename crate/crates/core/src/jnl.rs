//! Jersey number localization: pluggable digit detectors over frames.
//!
//! Two detectors ship with the crate. [`FileBackedDetector`] replays boxes
//! from a `detections.csv` sidecar produced by any external model, and
//! [`HeuristicDetector`] finds high-contrast glyph-like blobs, which is
//! enough for the synthetic renders produced by [`crate::synth`].

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{BBox, Detection, Frame, Tracklet};

pub const SIDECAR_HEADER: [&str; 6] = ["frame_index", "x1", "y1", "x2", "y2", "confidence"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorKind {
    FileBacked,
    Heuristic,
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file_backed" => Ok(DetectorKind::FileBacked),
            "heuristic" => Ok(DetectorKind::Heuristic),
            other => Err(Error::config(format!("unknown detector kind `{other}`"))),
        }
    }
}

/// Which side of the local background a glyph sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Bright,
    Dark,
    Both,
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bright" => Ok(Polarity::Bright),
            "dark" => Ok(Polarity::Dark),
            "both" => Ok(Polarity::Both),
            other => Err(Error::config(format!("unknown polarity `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub min_confidence: f64,
    /// Minimum contrast against the local background mean, in 8-bit levels.
    pub threshold: f64,
    /// Half-width of the square window used for the background mean.
    pub window: usize,
    pub polarity: Polarity,
    pub min_area: usize,
    pub max_area: usize,
    /// Bounds on height / width of a component's bounding box.
    pub min_aspect: f64,
    pub max_aspect: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            kind: DetectorKind::Heuristic,
            min_confidence: 0.25,
            threshold: 40.0,
            window: 10,
            polarity: Polarity::Bright,
            min_area: 40,
            max_area: 2500,
            min_aspect: 0.5,
            max_aspect: 4.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::config("jnl.min_confidence must lie in [0, 1]"));
        }
        if self.min_area >= self.max_area {
            return Err(Error::config("jnl.min_area must be below jnl.max_area"));
        }
        if !(self.min_aspect > 0.0 && self.min_aspect < self.max_aspect) {
            return Err(Error::config("jnl aspect bounds must satisfy 0 < min < max"));
        }
        if !(self.threshold >= 0.0 && self.threshold <= 255.0) {
            return Err(Error::config("jnl.threshold must be an 8-bit level"));
        }
        Ok(())
    }

    /// Instantiate the configured detector. `sidecar` is the tracklet's
    /// `detections.csv`; it is only read for the file-backed kind, and a
    /// missing file means "no detections".
    pub fn build(&self, sidecar: Option<&Path>) -> Result<Box<dyn Detector>> {
        self.validate()?;
        Ok(match self.kind {
            DetectorKind::Heuristic => Box::new(HeuristicDetector::new(self.clone())),
            DetectorKind::FileBacked => {
                let det = match sidecar {
                    Some(p) if p.exists() => FileBackedDetector::from_path(p)?,
                    _ => FileBackedDetector::default(),
                };
                Box::new(det.with_min_confidence(self.min_confidence))
            }
        })
    }
}

pub trait Detector: Send + Sync {
    /// Digit boxes in one frame, clipped to its bounds.
    fn localize(&self, frame: &Frame) -> Vec<Detection>;
}

/// Runs `detector` over every frame, keeping each detection's frame index.
pub fn localize_tracklet(tracklet: &Tracklet, detector: &dyn Detector) -> Vec<Detection> {
    tracklet
        .frames
        .iter()
        .flat_map(|f| detector.localize(f))
        .collect()
}

/// Replays detections recorded in a sidecar file.
#[derive(Clone, Debug, Default)]
pub struct FileBackedDetector {
    rows: BTreeMap<usize, Vec<(BBox, f64)>>,
    min_confidence: f64,
}

impl FileBackedDetector {
    pub fn from_rows(rows: impl IntoIterator<Item = (usize, BBox, f64)>) -> Self {
        let mut map: BTreeMap<usize, Vec<(BBox, f64)>> = BTreeMap::new();
        for (frame, b, conf) in rows {
            map.entry(frame).or_default().push((b, conf));
        }
        FileBackedDetector {
            rows: map,
            min_confidence: 0.0,
        }
    }

    pub fn with_min_confidence(mut self, min_confidence: f64) -> Self {
        self.min_confidence = min_confidence;
        self
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_rows(read_sidecar(path, &text)?))
    }
}

impl Detector for FileBackedDetector {
    fn localize(&self, frame: &Frame) -> Vec<Detection> {
        self.rows
            .get(&frame.index)
            .into_iter()
            .flatten()
            .filter(|(_, conf)| *conf >= self.min_confidence)
            .filter_map(|&(b, conf)| {
                Detection::clipped(frame.index, b, conf, frame.width(), frame.height())
            })
            .collect()
    }
}

/// Parses `frame_index,x1,y1,x2,y2,confidence` rows (header required).
pub fn read_sidecar(path: &Path, text: &str) -> Result<Vec<(usize, BBox, f64)>> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != SIDECAR_HEADER {
        return Err(parse_err(1, format!("expected header `{}`", SIDECAR_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let frame: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad frame index `{}`", &record[0])))?;
        let mut v = [0.0f64; 5];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = record[i + 1]
                .parse()
                .map_err(|_| parse_err(line, format!("bad number `{}`", &record[i + 1])))?;
        }
        let b = BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| parse_err(line, e.to_string()))?;
        if !(0.0..=1.0).contains(&v[4]) {
            return Err(parse_err(line, format!("confidence {} outside [0, 1]", v[4])));
        }
        out.push((frame, b, v[4]));
    }
    Ok(out)
}

pub fn write_sidecar(detections: &[Detection]) -> String {
    let mut s = SIDECAR_HEADER.join(",");
    s.push('\n');
    for d in detections {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.frame_index, d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, d.confidence
        ));
    }
    s
}

/// Contrast-vs-local-background blob detector.
///
/// Pixels whose luminance differs from the mean of a surrounding window by
/// at least `threshold` are grouped into 8-connected components; components
/// passing the area and aspect bounds become one box each, scored by
/// solidity (component pixels over box area).
#[derive(Clone, Debug)]
pub struct HeuristicDetector {
    cfg: DetectorConfig,
}

impl HeuristicDetector {
    pub fn new(cfg: DetectorConfig) -> Self {
        HeuristicDetector { cfg }
    }
}

impl Detector for HeuristicDetector {
    fn localize(&self, frame: &Frame) -> Vec<Detection> {
        let (w, h) = (frame.width(), frame.height());
        let gray = frame.luminance();
        let background = box_mean(&gray, w, h, self.cfg.window);

        let signs: &[f64] = match self.cfg.polarity {
            Polarity::Bright => &[1.0],
            Polarity::Dark => &[-1.0],
            Polarity::Both => &[1.0, -1.0],
        };
        let mut out = Vec::new();
        for &sign in signs {
            let mask: Vec<bool> = gray
                .iter()
                .zip(&background)
                .map(|(g, bg)| sign * (g - bg) >= self.cfg.threshold)
                .collect();
            for c in connected_components(&mask, w, h) {
                let bw = c.x_max - c.x_min + 1;
                let bh = c.y_max - c.y_min + 1;
                if c.pixels < self.cfg.min_area || c.pixels > self.cfg.max_area {
                    continue;
                }
                let aspect = bh as f64 / bw as f64;
                if aspect < self.cfg.min_aspect || aspect > self.cfg.max_aspect {
                    continue;
                }
                let solidity = c.pixels as f64 / (bw * bh) as f64;
                if solidity < self.cfg.min_confidence {
                    continue;
                }
                let b = BBox {
                    x1: c.x_min as f64,
                    y1: c.y_min as f64,
                    x2: (c.x_max + 1) as f64,
                    y2: (c.y_max + 1) as f64,
                };
                out.extend(Detection::clipped(frame.index, b, solidity, w, h));
            }
        }
        out
    }
}

/// Mean over a `(2r+1)^2` window clamped to the image, via an integral image.
fn box_mean(values: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut integral = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values[y * w + x];
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let sum = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0]
                + integral[y0 * (w + 1) + x0];
            out[y * w + x] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

#[derive(Debug)]
struct Component {
    pixels: usize,
    x_min: usize,
    x_max: usize,
    y_min: usize,
    y_max: usize,
}

/// 8-connected components in raster order of their first pixel.
fn connected_components(mask: &[bool], w: usize, h: usize) -> Vec<Component> {
    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut c = Component {
            pixels: 0,
            x_min: usize::MAX,
            x_max: 0,
            y_min: usize::MAX,
            y_max: 0,
        };
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            c.pixels += 1;
            c.x_min = c.x_min.min(x);
            c.x_max = c.x_max.max(x);
            c.y_min = c.y_min.min(y);
            c.y_max = c.y_max.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        out.push(c);
    }
    out
}
