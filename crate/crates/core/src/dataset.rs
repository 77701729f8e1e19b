//! On-disk dataset layout.
//!
//! ```text
//! <root>/gt.csv                     tracklet_id,number
//! <root>/<id>/frame_000000.ppm      dense from 0 (P6; .png also read)
//! <root>/<id>/detections.csv        optional detector sidecar
//! <root>/<id>/meta.csv              optional generator ground truth
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{BBox, Frame, JerseyLabel, Tracklet};

pub const GT_FILE: &str = "gt.csv";
pub const META_FILE: &str = "meta.csv";
pub const SIDECAR_FILE: &str = "detections.csv";

const FRAME_EXTENSIONS: [&str; 2] = ["ppm", "png"];

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

/// Writes a binary (P6) portable pixmap.
pub fn write_ppm(path: &Path, frame: &Frame) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    bytes.extend_from_slice(frame.pixels());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_frame(path: &Path, index: usize) -> Result<Frame> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Frame::new(index, w, h, rgb.into_raw())
}

pub fn write_tracklet(dir: &Path, frames: &[Frame]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        write_ppm(&dir.join(frame_file_name(f.index)), f)?;
    }
    Ok(())
}

/// Frame paths of a tracklet directory in index order. Indices must run
/// densely from 0.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut by_index = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        if !FRAME_EXTENSIONS.contains(&ext) {
            continue;
        }
        let Some(index) = stem.strip_prefix("frame_").and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        if by_index.insert(index, path.clone()).is_some() {
            return Err(Error::InvalidFrame(format!(
                "duplicate frame {index} in {}",
                dir.display()
            )));
        }
    }
    for (expected, index) in by_index.keys().enumerate() {
        if *index != expected {
            return Err(Error::InvalidFrame(format!(
                "{}: frame numbering not dense (missing {expected})",
                dir.display()
            )));
        }
    }
    Ok(by_index.into_values().collect())
}

pub fn read_frames(dir: &Path) -> Result<Vec<Frame>> {
    frame_paths(dir)?
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame(p, i))
        .collect()
}

/// Tracklet directories directly under `root`, sorted by name.
pub fn tracklet_ids(root: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            if let Some(name) = entry.file_name().to_str() {
                ids.push(name.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn load_tracklet(root: &Path, id: &str, label: Option<JerseyLabel>) -> Result<Tracklet> {
    let frames = read_frames(&root.join(id))?;
    Tracklet::new(id, frames, Vec::new(), label)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads `tracklet_id,number` rows.
pub fn read_gt(path: &Path) -> Result<Vec<(String, JerseyLabel)>> {
    let text = read_text(path)?;
    let mut reader = csv_reader(&text);
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["tracklet_id", "number"] {
        return Err(parse_err(path, 1, "expected header `tracklet_id,number`"));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(path, line, "expected 2 fields"));
        }
        let number: i32 = record[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad number `{}`", &record[1])))?;
        let label = JerseyLabel::new(number).map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push((record[0].to_string(), label));
    }
    Ok(out)
}

pub fn write_gt(path: &Path, rows: &[(String, JerseyLabel)]) -> Result<()> {
    let mut text = String::from("tracklet_id,number\n");
    for (id, label) in rows {
        text.push_str(&format!("{id},{label}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlyphKind {
    Target,
    Distractor,
}

impl GlyphKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GlyphKind::Target => "target",
            GlyphKind::Distractor => "distractor",
        }
    }
}

/// One `meta.csv` row. Frames without rows show no glyphs and are not
/// visible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlyphRow {
    pub frame_index: usize,
    pub visible: bool,
    pub kind: GlyphKind,
    pub bbox: BBox,
}

pub fn write_meta(path: &Path, rows: &[GlyphRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "frame_index,visible,kind,x1,y1,x2,y2")?;
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.frame_index,
                r.visible as u8,
                r.kind.as_str(),
                r.bbox.x1,
                r.bbox.y1,
                r.bbox.x2,
                r.bbox.y2
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_meta(path: &Path) -> Result<Vec<GlyphRow>> {
    let text = read_text(path)?;
    let mut reader = csv_reader(&text);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 7 {
            return Err(parse_err(path, line, "expected 7 fields"));
        }
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad number `{}`", &record[i])))
        };
        let kind = match &record[2] {
            "target" => GlyphKind::Target,
            "distractor" => GlyphKind::Distractor,
            other => return Err(parse_err(path, line, format!("unknown kind `{other}`"))),
        };
        let frame_index = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, "bad frame_index"))?;
        let bbox = BBox::new(num(3)?, num(4)?, num(5)?, num(6)?)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(GlyphRow {
            frame_index,
            visible: &record[1] == "1",
            kind,
            bbox,
        });
    }
    Ok(out)
}

/// Frame indices flagged visible in `meta.csv` rows.
pub fn visible_frames(rows: &[GlyphRow]) -> Vec<usize> {
    let mut v: Vec<usize> = rows
        .iter()
        .filter(|r| r.visible)
        .map(|r| r.frame_index)
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}
