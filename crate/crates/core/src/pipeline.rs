//! End-to-end commands: synthesize, identify keyframes, train, evaluate
//! and the keyframe on/off ablation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::Config;
use crate::dataset::{self, GT_FILE, META_FILE, SIDECAR_FILE};
use crate::error::{Error, Result};
use crate::jnl::write_sidecar;
use crate::spatial::{kfid, KeyframeResult};
use crate::stnet::train::predict_frames;
use crate::stnet::{
    preprocess, read_checkpoint, train, write_checkpoint, MetricsRow, ModelParams, NetConfig,
    TrainingExample,
};
use crate::synth::{self, SynthMetadata};
use crate::types::{encode_label, JerseyLabel};

const SPLITS: [&str; 3] = ["train", "val", "test"];

/// `root/<split>` when present, else `root` itself.
pub fn resolve_split(root: &Path, split: &str) -> PathBuf {
    let sub = root.join(split);
    if sub.is_dir() {
        sub
    } else {
        root.to_path_buf()
    }
}

/// Split directories under `root`, or `root` alone when it has none.
fn split_dirs(root: &Path) -> Vec<(Option<&'static str>, PathBuf)> {
    let found: Vec<_> = SPLITS
        .iter()
        .filter(|s| root.join(s).is_dir())
        .map(|s| (Some(*s), root.join(s)))
        .collect();
    if found.is_empty() {
        vec![(None, root.to_path_buf())]
    } else {
        found
    }
}

pub fn cmd_synth(cfg: &Config, out: &Path) -> Result<SynthMetadata> {
    synth::generate(&cfg.synth, out)
}

/// Keyframes of one tracklet directory with the configured detector.
pub fn tracklet_keyframes(
    dir: &Path,
    tracklet: &crate::types::Tracklet,
    cfg: &Config,
) -> Result<KeyframeResult> {
    let detector = cfg.jnl.build(Some(&dir.join(SIDECAR_FILE)))?;
    Ok(kfid(tracklet, detector.as_ref(), &cfg.roi, &cfg.sc))
}

#[derive(Clone, Debug, PartialEq)]
pub struct KfidRow {
    pub split: Option<String>,
    pub tracklet_id: String,
    pub frames: usize,
    pub keyframes: usize,
    /// Frames flagged visible in `meta.csv`, when present.
    pub visible: Option<usize>,
    /// Visible frames that were kept as keyframes.
    pub visible_kept: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KfidReport {
    pub rows: Vec<KfidRow>,
}

impl KfidReport {
    pub fn frames(&self) -> usize {
        self.rows.iter().map(|r| r.frames).sum()
    }

    pub fn keyframes(&self) -> usize {
        self.rows.iter().map(|r| r.keyframes).sum()
    }

    /// `(1 - keyframes / frames) * 100`; 100 for an empty set.
    pub fn reduction_pct(&self) -> f64 {
        reduction_pct(self.frames(), self.keyframes())
    }

    /// Fraction of ground-truth visible frames kept, over tracklets with
    /// generator metadata.
    pub fn visible_recall(&self) -> Option<f64> {
        let (kept, total) = self
            .rows
            .iter()
            .filter_map(|r| Some((r.visible_kept?, r.visible?)))
            .fold((0, 0), |(a, b), (k, v)| (a + k, b + v));
        (total > 0).then(|| kept as f64 / total as f64)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "tracklets: {}\nframes: {}\nkeyframes: {}\nreduction_pct: {:.2}\n",
            self.rows.len(),
            self.frames(),
            self.keyframes(),
            self.reduction_pct()
        );
        if let Some(r) = self.visible_recall() {
            let _ = writeln!(s, "visible_recall: {r:.4}");
        }
        s
    }
}

pub fn reduction_pct(frames: usize, keyframes: usize) -> f64 {
    if frames == 0 {
        100.0
    } else {
        (1.0 - keyframes as f64 / frames as f64) * 100.0
    }
}

/// Runs keyframe identification over every tracklet under `data` (or under
/// its split directories). Writes `<out>/[<split>/]<id>.csv` in detector
/// sidecar format plus `kfid_stats.csv` and `kfid_summary.txt`.
pub fn cmd_kfid(data: &Path, cfg: &Config, out: &Path) -> Result<KfidReport> {
    cfg.validate()?;
    let mut report = KfidReport::default();
    for (split, dir) in split_dirs(data) {
        let out_dir = match split {
            Some(s) => out.join(s),
            None => out.to_path_buf(),
        };
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let ids = dataset::tracklet_ids(&dir)?;
        let rows: Vec<KfidRow> = ids
            .par_iter()
            .map(|id| {
                let tdir = dir.join(id);
                let tracklet = dataset::load_tracklet(&dir, id, None)?;
                let kf = tracklet_keyframes(&tdir, &tracklet, cfg)?;
                let path = out_dir.join(format!("{id}.csv"));
                std::fs::write(&path, write_sidecar(&kf.kept_detections))
                    .map_err(|e| Error::io(&path, e))?;
                let meta_path = tdir.join(META_FILE);
                let (visible, visible_kept) = if meta_path.exists() {
                    let vis = dataset::visible_frames(&dataset::read_meta(&meta_path)?);
                    let kept = vis
                        .iter()
                        .filter(|f| kf.keyframe_indices.binary_search(f).is_ok())
                        .count();
                    (Some(vis.len()), Some(kept))
                } else {
                    (None, None)
                };
                Ok(KfidRow {
                    split: split.map(str::to_string),
                    tracklet_id: id.clone(),
                    frames: tracklet.len(),
                    keyframes: kf.keyframe_indices.len(),
                    visible,
                    visible_kept,
                })
            })
            .collect::<Result<_>>()?;
        report.rows.extend(rows);
    }
    let mut stats = String::from("split,tracklet_id,frames,keyframes\n");
    for r in &report.rows {
        let _ = writeln!(
            stats,
            "{},{},{},{}",
            r.split.as_deref().unwrap_or(""),
            r.tracklet_id,
            r.frames,
            r.keyframes
        );
    }
    write_file(&out.join("kfid_stats.csv"), &stats)?;
    write_file(&out.join("kfid_summary.txt"), &report.summary())?;
    Ok(report)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A labeled tracklet reduced to preprocessed network inputs.
#[derive(Clone, Debug)]
pub struct PreparedTracklet {
    pub id: String,
    pub label: JerseyLabel,
    pub frame_count: usize,
    /// Ascending keyframe indices; empty when identification found none
    /// or was skipped.
    pub keyframes: Vec<usize>,
    /// Every frame, preprocessed, indexed by frame.
    pub images: Vec<Vec<f64>>,
}

impl PreparedTracklet {
    /// Candidate frames: keyframes when enabled and non-empty, else all.
    /// The flag reports the fallback.
    pub fn candidates(&self, use_kfid: bool) -> (Vec<usize>, bool) {
        if use_kfid && !self.keyframes.is_empty() {
            (self.keyframes.clone(), false)
        } else {
            ((0..self.frame_count).collect(), use_kfid)
        }
    }

    pub fn training_example(&self, use_kfid: bool) -> TrainingExample {
        let (frame_indices, _) = self.candidates(use_kfid);
        TrainingExample {
            id: self.id.clone(),
            images: frame_indices.iter().map(|&i| self.images[i].clone()).collect(),
            frame_indices,
            target: encode_label(self.label),
        }
    }
}

/// Loads every labeled tracklet of one split directory, identifying
/// keyframes when `with_kfid`.
pub fn prepare_split(
    dir: &Path,
    cfg: &Config,
    net: &NetConfig,
    with_kfid: bool,
) -> Result<Vec<PreparedTracklet>> {
    let gt_path = dir.join(GT_FILE);
    let gt = if gt_path.exists() {
        dataset::read_gt(&gt_path)?
    } else {
        Vec::new()
    };
    if gt.is_empty() {
        return Err(Error::NoTracklets(dir.to_path_buf()));
    }
    let mut out: Vec<PreparedTracklet> = gt
        .par_iter()
        .map(|(id, label)| {
            let tracklet = dataset::load_tracklet(dir, id, Some(*label))?;
            let keyframes = if with_kfid {
                tracklet_keyframes(&dir.join(id), &tracklet, cfg)?.keyframe_indices
            } else {
                Vec::new()
            };
            Ok(PreparedTracklet {
                id: id.clone(),
                label: *label,
                frame_count: tracklet.len(),
                keyframes,
                images: tracklet.frames.iter().map(|f| preprocess(f, net)).collect(),
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if out.iter().any(|t| t.frame_count == 0) {
        return Err(Error::EmptySequence);
    }
    Ok(out)
}

/// Trains from the configured seed on prepared tracklets.
pub fn train_prepared(
    data: &[PreparedTracklet],
    cfg: &Config,
    use_kfid: bool,
) -> Result<(ModelParams, Vec<MetricsRow>)> {
    if !use_kfid {
        log::info!("kfid disabled: keyframe stage bypassed, training on all frames");
    }
    let examples: Vec<TrainingExample> =
        data.iter().map(|t| t.training_example(use_kfid)).collect();
    let fallbacks = data.iter().filter(|t| t.candidates(use_kfid).1).count();
    if fallbacks > 0 {
        log::info!("{fallbacks} training tracklets without keyframes use all frames");
    }
    train(
        &examples,
        ModelParams::init(&cfg.net, cfg.net.seed),
        &cfg.net,
        &cfg.sampler,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub tracklet_id: String,
    pub pred: JerseyLabel,
    pub gt: JerseyLabel,
    pub correct: bool,
    /// No keyframes were available; every frame was used.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub accuracy: f64,
    pub frames: usize,
    pub keyframes: usize,
    pub kfid_enabled: bool,
}

impl RunReport {
    pub fn from_rows(rows: Vec<ReportRow>, frames: usize, keyframes: usize, kfid_enabled: bool) -> Self {
        let correct = rows.iter().filter(|r| r.correct).count();
        let accuracy = if rows.is_empty() {
            0.0
        } else {
            correct as f64 / rows.len() as f64
        };
        RunReport {
            rows,
            accuracy,
            frames,
            keyframes,
            kfid_enabled,
        }
    }

    pub fn reduction_pct(&self) -> f64 {
        reduction_pct(self.frames, self.keyframes)
    }

    /// Accuracy over the rows whose ground truth satisfies `keep`.
    pub fn accuracy_where(&self, keep: impl Fn(JerseyLabel) -> bool) -> Option<f64> {
        let sel: Vec<_> = self.rows.iter().filter(|r| keep(r.gt)).collect();
        (!sel.is_empty())
            .then(|| sel.iter().filter(|r| r.correct).count() as f64 / sel.len() as f64)
    }

    /// Machine-readable `tracklet_id,pred,gt,correct` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tracklet_id,pred,gt,correct\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.tracklet_id, r.pred, r.gt, r.correct as u8);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<16} {:>5} {:>5}  {}\n", "tracklet", "pred", "gt", "");
        for r in &self.rows {
            let mark = match (r.correct, r.fallback) {
                (true, false) => "ok",
                (true, true) => "ok (all frames)",
                (false, false) => "MISS",
                (false, true) => "MISS (all frames)",
            };
            let _ = writeln!(s, "{:<16} {:>5} {:>5}  {mark}", r.tracklet_id, r.pred, r.gt);
        }
        let correct = self.rows.iter().filter(|r| r.correct).count();
        let _ = writeln!(
            s,
            "accuracy: {:.4} ({correct}/{})\nkfid: {}\nframes: {}\nkeyframes: {}\nreduction_pct: {:.2}",
            self.accuracy,
            self.rows.len(),
            if self.kfid_enabled { "on" } else { "off" },
            self.frames,
            self.keyframes,
            self.reduction_pct()
        );
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("report.csv"), &self.to_csv())?;
        write_file(&dir.join("report.txt"), &self.to_table())
    }
}

/// Even-mode prediction for every prepared tracklet.
pub fn evaluate_prepared(
    data: &[PreparedTracklet],
    params: &ModelParams,
    net: &NetConfig,
    cfg: &Config,
    use_kfid: bool,
) -> Result<RunReport> {
    if data.is_empty() {
        return Err(Error::NoTracklets(PathBuf::new()));
    }
    let rows: Vec<ReportRow> = data
        .par_iter()
        .map(|t| {
            let (frames, fallback) = t.candidates(use_kfid);
            let images: Vec<&[f64]> = frames.iter().map(|&i| t.images[i].as_slice()).collect();
            let dist = predict_frames(&frames, &images, params, net, &cfg.sampler)?;
            let pred = dist.label();
            Ok(ReportRow {
                tracklet_id: t.id.clone(),
                pred,
                gt: t.label,
                correct: pred == t.label,
                fallback,
            })
        })
        .collect::<Result<_>>()?;
    let frames = data.iter().map(|t| t.frame_count).sum();
    let keyframes = data
        .iter()
        .map(|t| t.candidates(use_kfid).0.len())
        .sum();
    Ok(RunReport::from_rows(rows, frames, keyframes, use_kfid))
}

pub fn metrics_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".metrics.csv");
    checkpoint.with_file_name(name)
}

pub fn write_metrics(path: &Path, log: &[MetricsRow]) -> Result<()> {
    let mut s = String::with_capacity(log.len() * 32);
    s.push_str(MetricsRow::HEADER);
    s.push('\n');
    for r in log {
        let _ = writeln!(s, "{r}");
    }
    write_file(path, &s)
}

/// Trains on `data/train` (or `data`) and writes the checkpoint plus
/// `<checkpoint>.metrics.csv`.
pub fn cmd_train(data: &Path, cfg: &Config, checkpoint: &Path) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let dir = resolve_split(data, "train");
    let prepared = prepare_split(&dir, cfg, &cfg.net, cfg.kfid_enabled)?;
    let (params, log) = train_prepared(&prepared, cfg, cfg.kfid_enabled)?;
    if let Some(parent) = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_checkpoint(checkpoint, &cfg.net, &params)?;
    write_metrics(&metrics_path(checkpoint), &log)?;
    Ok(log)
}

const ARCHITECTURE_KEYS: [&str; 5] = [
    "net.input_height",
    "net.input_width",
    "net.feature_dim",
    "net.hidden",
    "net.pooling",
];

/// Evaluates a checkpoint on `data/test` (or `data`). Architecture keys set
/// explicitly in the config must agree with the checkpoint.
pub fn cmd_eval(data: &Path, checkpoint: &Path, cfg: &Config) -> Result<RunReport> {
    cfg.validate()?;
    let (net, params) = read_checkpoint(checkpoint)?;
    let explicit_arch = ARCHITECTURE_KEYS.iter().any(|k| cfg.explicit.contains(*k));
    if explicit_arch && !cfg.net.same_architecture(&net) {
        return Err(Error::Shape(format!(
            "checkpoint/config shape mismatch: checkpoint is {}x{} D={} h={} {}, config is {}x{} D={} h={} {}",
            net.input_height,
            net.input_width,
            net.feature_dim,
            net.hidden,
            net.pooling,
            cfg.net.input_height,
            cfg.net.input_width,
            cfg.net.feature_dim,
            cfg.net.hidden,
            cfg.net.pooling
        )));
    }
    let dir = resolve_split(data, "test");
    let prepared = prepare_split(&dir, cfg, &net, cfg.kfid_enabled)?;
    evaluate_prepared(&prepared, &params, &net, cfg, cfg.kfid_enabled)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub on: RunReport,
    pub off: RunReport,
    pub net_seed: u64,
    pub sampler_seed: u64,
}

impl AblationReport {
    /// Accuracy with keyframes minus accuracy without.
    pub fn delta(&self) -> f64 {
        self.on.accuracy - self.off.accuracy
    }

    pub fn summary(&self) -> String {
        format!(
            "net.seed: {}\nsampler.seed: {}\naccuracy_kfid_on: {:.4}\naccuracy_kfid_off: {:.4}\ndelta: {:+.4}\nreduction_pct: {:.2}\n",
            self.net_seed,
            self.sampler_seed,
            self.on.accuracy,
            self.off.accuracy,
            self.delta(),
            self.on.reduction_pct()
        )
    }
}

/// Prepared train and test splits shared by paired runs.
pub struct PreparedSplits {
    pub train: Vec<PreparedTracklet>,
    pub test: Vec<PreparedTracklet>,
}

pub fn prepare_splits(data: &Path, cfg: &Config) -> Result<PreparedSplits> {
    let train_dir = data.join("train");
    let test_dir = data.join("test");
    for d in [&train_dir, &test_dir] {
        if !d.is_dir() {
            return Err(Error::NoTracklets(d.clone()));
        }
    }
    Ok(PreparedSplits {
        train: prepare_split(&train_dir, cfg, &cfg.net, true)?,
        test: prepare_split(&test_dir, cfg, &cfg.net, true)?,
    })
}

/// Trains and evaluates once with the given keyframe setting.
pub fn run_once(splits: &PreparedSplits, cfg: &Config, use_kfid: bool) -> Result<RunReport> {
    let (params, _) = train_prepared(&splits.train, cfg, use_kfid)?;
    evaluate_prepared(&splits.test, &params, &cfg.net, cfg, use_kfid)
}

/// Paired runs with keyframes on and off, identical seeds and budgets.
pub fn ablate_prepared(splits: &PreparedSplits, cfg: &Config) -> Result<AblationReport> {
    log::info!(
        "ablation: net.seed {} sampler.seed {}",
        cfg.net.seed,
        cfg.sampler.seed
    );
    let on = run_once(splits, cfg, true)?;
    let off = run_once(splits, cfg, false)?;
    Ok(AblationReport {
        on,
        off,
        net_seed: cfg.net.seed,
        sampler_seed: cfg.sampler.seed,
    })
}

pub fn cmd_ablate(data: &Path, cfg: &Config) -> Result<AblationReport> {
    cfg.validate()?;
    let splits = prepare_splits(data, cfg)?;
    ablate_prepared(&splits, cfg)
}
