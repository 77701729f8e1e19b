//! Keyframe identification and spatio-temporal jersey number recognition.
//!
//! The pipeline localizes digits in every frame of a player tracklet,
//! discards boxes outside the torso region, merges digits into whole
//! numbers, clusters their hue signatures across frames, and hands the
//! surviving keyframes to a CNN + bidirectional LSTM classifier with two
//! digit heads.

pub mod config;
pub mod dataset;
pub mod error;
pub mod jnl;
pub mod pipeline;
pub mod roi;
pub mod sampler;
pub mod spatial;
pub mod stnet;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{BBox, Detection, DigitPair, Frame, JerseyLabel, Tracklet};
