//! Spatio-temporal jersey number classifier: per-frame convolutional
//! features, a bidirectional LSTM over the sampled sequence, and two
//! 11-way digit heads trained with an averaged cross-entropy.
//!
//! Everything runs in `f64` with hand-written backward passes.

use std::str::FromStr;

use crate::error::{Error, Result};

pub mod checkpoint;
pub mod extractor;
pub mod lstm;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use extractor::{extract_features, preprocess};
pub use model::{
    backward, backward_scaled, batch_loss, heads, loss, predict_sequence, softmax,
    temporal_forward, BatchItem, PredictionDistribution, LOG_FLOOR,
};
pub use params::ModelParams;
pub use train::{
    learning_rate, predict_tracklet, train, MetricsRow, Prediction, TrainingExample,
};

/// Output channels of the three convolution blocks.
pub const CHANNELS: [usize; 3] = [8, 16, 32];

/// How the last feature map is reduced before the projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Keep every cell, preserving where in the crop a pattern fired.
    #[default]
    Flatten,
    /// Global average per channel.
    Average,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flatten" => Ok(Pooling::Flatten),
            "average" => Ok(Pooling::Average),
            other => Err(Error::config(format!("unknown pooling `{other}`"))),
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pooling::Flatten => "flatten",
            Pooling::Average => "average",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub feature_dim: usize,
    /// Hidden size per direction; the temporal vector has `2 * hidden`.
    pub hidden: usize,
    pub pooling: Pooling,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr_decay_every: usize,
    pub lr_decay_until: usize,
    pub lr_decay_factor: f64,
    /// Training-only random translation of each input image, in pixels
    /// along each axis; 0 disables it.
    pub augment_shift: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_height: 150,
            input_width: 120,
            feature_dim: 64,
            hidden: 32,
            pooling: Pooling::Flatten,
            learning_rate: 3e-3,
            batch_size: 32,
            iterations: 3000,
            lr_decay_every: 2000,
            lr_decay_until: 6000,
            lr_decay_factor: 0.5,
            augment_shift: 0,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_height < 8 || self.input_width < 8 {
            return Err(Error::config("net input size must be at least 8x8"));
        }
        let positive = [
            ("net.feature_dim", self.feature_dim),
            ("net.hidden", self.hidden),
            ("net.batch_size", self.batch_size),
            ("net.lr_decay_every", self.lr_decay_every),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("net.learning_rate must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::config("net.lr_decay_factor must be in (0, 1]"));
        }
        Ok(())
    }

    /// True when two configs produce parameter tensors of the same shapes.
    pub fn same_architecture(&self, other: &NetConfig) -> bool {
        (
            self.input_height,
            self.input_width,
            self.feature_dim,
            self.hidden,
            self.pooling,
        ) == (
            other.input_height,
            other.input_width,
            other.feature_dim,
            other.hidden,
            other.pooling,
        )
    }
}
