//! Flat `key = value` configuration with `#` comments.
//!
//! Keys are namespaced (`roi.`, `sc.`, `sampler.`, `jnl.`, `net.`,
//! `synth.`, `kfid.`); unknown keys are errors.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::jnl::DetectorConfig;
use crate::roi::RoiConfig;
use crate::sampler::SamplerConfig;
use crate::spatial::SpatialContextConfig;
use crate::stnet::NetConfig;
use crate::synth::SynthConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub roi: RoiConfig,
    pub sc: SpatialContextConfig,
    pub sampler: SamplerConfig,
    pub jnl: DetectorConfig,
    pub net: NetConfig,
    pub synth: SynthConfig,
    /// When false, training and evaluation use every frame.
    pub kfid_enabled: bool,
    /// Keys set explicitly by a config file.
    pub explicit: BTreeSet<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            roi: RoiConfig::default(),
            sc: SpatialContextConfig::default(),
            sampler: SamplerConfig::default(),
            jnl: DetectorConfig::default(),
            net: NetConfig::default(),
            synth: SynthConfig::default(),
            kfid_enabled: true,
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn unknown(key: &str) -> Error {
    Error::config(format!("unknown key `{key}`"))
}

/// Sets one `net.` key, given without its namespace.
pub fn apply_net(cfg: &mut NetConfig, key: &str, value: &str) -> Result<()> {
    let k = format!("net.{key}");
    match key {
        "input_height" => cfg.input_height = parse(&k, value)?,
        "input_width" => cfg.input_width = parse(&k, value)?,
        "feature_dim" => cfg.feature_dim = parse(&k, value)?,
        "hidden" => cfg.hidden = parse(&k, value)?,
        "pooling" => cfg.pooling = parse(&k, value)?,
        "learning_rate" => cfg.learning_rate = parse(&k, value)?,
        "batch_size" => cfg.batch_size = parse(&k, value)?,
        "iterations" => cfg.iterations = parse(&k, value)?,
        "lr_decay_every" => cfg.lr_decay_every = parse(&k, value)?,
        "lr_decay_until" => cfg.lr_decay_until = parse(&k, value)?,
        "lr_decay_factor" => cfg.lr_decay_factor = parse(&k, value)?,
        "augment_shift" => cfg.augment_shift = parse(&k, value)?,
        "seed" => cfg.seed = parse(&k, value)?,
        _ => return Err(unknown(&k)),
    }
    Ok(())
}

/// Every `net.` key with its value, one per line. Floats use Rust's
/// shortest round-trip formatting.
pub fn render_net(cfg: &NetConfig) -> String {
    let pairs: [(&str, String); 13] = [
        ("input_height", cfg.input_height.to_string()),
        ("input_width", cfg.input_width.to_string()),
        ("feature_dim", cfg.feature_dim.to_string()),
        ("hidden", cfg.hidden.to_string()),
        ("pooling", cfg.pooling.to_string()),
        ("learning_rate", format!("{:?}", cfg.learning_rate)),
        ("batch_size", cfg.batch_size.to_string()),
        ("iterations", cfg.iterations.to_string()),
        ("lr_decay_every", cfg.lr_decay_every.to_string()),
        ("lr_decay_until", cfg.lr_decay_until.to_string()),
        ("lr_decay_factor", format!("{:?}", cfg.lr_decay_factor)),
        ("augment_shift", cfg.augment_shift.to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    pairs
        .iter()
        .map(|(k, v)| format!("net.{k} = {v}\n"))
        .collect()
}

impl Config {
    /// Parses config text on top of the defaults. `origin` names the source
    /// in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Config> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let wrap = |e: Error| Error::Parse {
                path: origin.to_path_buf(),
                line: n as u64 + 1,
                msg: match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                },
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| wrap(Error::config("expected `key = value`")))?;
            cfg.set(key.trim(), value.trim()).map_err(wrap)?;
            cfg.explicit.insert(key.trim().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    /// Loads `path` when given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Config> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (ns, rest) = key.split_once('.').ok_or_else(|| unknown(key))?;
        match ns {
            "net" => return apply_net(&mut self.net, rest, value),
            "kfid" if rest == "enabled" => self.kfid_enabled = parse(key, value)?,
            "roi" => {
                let r = &mut self.roi;
                match rest {
                    "left" => r.left = parse(key, value)?,
                    "top" => r.top = parse(key, value)?,
                    "right" => r.right = parse(key, value)?,
                    "bottom" => r.bottom = parse(key, value)?,
                    "threshold" => r.threshold = parse(key, value)?,
                    "eps" => r.eps = parse(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            "sc" => {
                let s = &mut self.sc;
                match rest {
                    "bins" => s.bins = parse(key, value)?,
                    "lhc_tau" => s.lhc_tau = parse(key, value)?,
                    "lhc_gap" => s.lhc_gap = parse(key, value)?,
                    "lhc_voff" => s.lhc_voff = parse(key, value)?,
                    "ghc_tau" => s.ghc_tau = parse(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            "sampler" => {
                let s = &mut self.sampler;
                match rest {
                    "length" => s.length = parse(key, value)?,
                    "min_gap" => s.min_gap = parse(key, value)?,
                    "seed" => s.seed = parse(key, value)?,
                    "mode" => s.mode = parse(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            "jnl" => {
                let j = &mut self.jnl;
                match rest {
                    "kind" => j.kind = parse(key, value)?,
                    "min_confidence" => j.min_confidence = parse(key, value)?,
                    "threshold" => j.threshold = parse(key, value)?,
                    "window" => j.window = parse(key, value)?,
                    "polarity" => j.polarity = parse(key, value)?,
                    "min_area" => j.min_area = parse(key, value)?,
                    "max_area" => j.max_area = parse(key, value)?,
                    "min_aspect" => j.min_aspect = parse(key, value)?,
                    "max_aspect" => j.max_aspect = parse(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            "synth" => {
                let s = &mut self.synth;
                match rest {
                    "tracklet_count" => s.tracklet_count = parse(key, value)?,
                    "frames_min" => s.frames_min = parse(key, value)?,
                    "frames_max" => s.frames_max = parse(key, value)?,
                    "width" => s.width = parse(key, value)?,
                    "height" => s.height = parse(key, value)?,
                    "target_hue" => s.target_hue = parse(key, value)?,
                    "opposition_hue" => s.opposition_hue = parse(key, value)?,
                    "visibility" => s.visibility = parse(key, value)?,
                    "distractor_prob" => s.distractor_prob = parse(key, value)?,
                    "blur_min" => s.blur_min = parse(key, value)?,
                    "blur_max" => s.blur_max = parse(key, value)?,
                    "occluder_prob" => s.occluder_prob = parse(key, value)?,
                    "occluder_min" => s.occluder_min = parse(key, value)?,
                    "occluder_max" => s.occluder_max = parse(key, value)?,
                    "scale_min" => s.scale_min = parse(key, value)?,
                    "scale_max" => s.scale_max = parse(key, value)?,
                    "absent_prob" => s.absent_prob = parse(key, value)?,
                    "single_digit_prob" => s.single_digit_prob = parse(key, value)?,
                    "holdout_count" => s.holdout_count = parse(key, value)?,
                    "holdout_share" => s.holdout_share = parse(key, value)?,
                    "train_ratio" => s.train_ratio = parse(key, value)?,
                    "val_ratio" => s.val_ratio = parse(key, value)?,
                    "test_ratio" => s.test_ratio = parse(key, value)?,
                    "seed" => s.seed = parse(key, value)?,
                    _ => return Err(unknown(key)),
                }
            }
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    /// Replaces every seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.sampler.seed = seed;
        self.net.seed = seed;
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.roi.validate()?;
        self.sc.validate()?;
        self.sampler.validate()?;
        self.jnl.validate()?;
        self.net.validate()?;
        self.synth.validate()
    }
}
