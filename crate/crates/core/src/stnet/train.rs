//! Adam training loop with step-decayed learning rate, and tracklet-level
//! inference.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::extractor::preprocess;
use super::model::{backward, predict_sequence, BatchItem, PredictionDistribution};
use super::params::ModelParams;
use super::NetConfig;
use crate::error::{Error, Result};
use crate::sampler::{sample_with, SampleMode, SamplerConfig};
use crate::spatial::KeyframeResult;
use crate::types::{DigitPair, JerseyLabel, Tracklet};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Offsets the augmentation stream from the batch-order stream.
const AUGMENT_STREAM: u64 = 0x5eed_a116;

/// `base * factor^floor(min(it, until) / every)`.
pub fn learning_rate(cfg: &NetConfig, iteration: usize) -> f64 {
    let steps = iteration.min(cfg.lr_decay_until) / cfg.lr_decay_every;
    cfg.learning_rate * cfg.lr_decay_factor.powi(steps as i32)
}

/// One labeled tracklet reduced to its candidate frames, already
/// preprocessed. `frame_indices` is ascending and parallel to `images`.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub id: String,
    pub frame_indices: Vec<usize>,
    pub images: Vec<Vec<f64>>,
    pub target: DigitPair,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
}

impl MetricsRow {
    pub const HEADER: &'static str = "iteration,loss,lr";
}

impl std::fmt::Display for MetricsRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{:e},{:e}", self.iteration, self.loss, self.lr)
    }
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for (((p, g), m), v) in p
                .data
                .iter_mut()
                .zip(&g.data)
                .zip(m.data.iter_mut())
                .zip(v.data.iter_mut())
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Distinct images referenced by `frames` and the sequence of indices into
/// them.
fn dedup_sequence<'a>(ex: &'a TrainingExample, frames: &[usize]) -> (Vec<&'a [f64]>, Vec<usize>) {
    let positions: Vec<usize> = frames
        .iter()
        .map(|f| {
            ex.frame_indices
                .binary_search(f)
                .expect("sampler returns candidate frames")
        })
        .collect();
    let mut unique = positions.clone();
    unique.sort_unstable();
    unique.dedup();
    let sequence = positions
        .iter()
        .map(|p| unique.binary_search(p).expect("present"))
        .collect();
    let images = unique.iter().map(|&p| ex.images[p].as_slice()).collect();
    (images, sequence)
}

/// `image` translated by `(dx, dy)` with edge pixels replicated.
fn shifted(image: &[f64], width: usize, height: usize, dx: i64, dy: i64) -> Vec<f64> {
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut out = Vec::with_capacity(image.len());
    for y in 0..height as i64 {
        let row = clamp(y - dy, height) * width;
        for x in 0..width as i64 {
            out.push(image[row + clamp(x - dx, width)]);
        }
    }
    out
}

/// Trains from `init` for `cfg.iterations` Adam steps. Each step draws
/// `cfg.batch_size` examples in epoch-shuffled order and a fresh random
/// gapped sample of each, regardless of `sampler.mode`. Returns the final
/// parameters and one metrics row per iteration.
pub fn train(
    examples: &[TrainingExample],
    init: ModelParams,
    cfg: &NetConfig,
    sampler: &SamplerConfig,
) -> Result<(ModelParams, Vec<MetricsRow>)> {
    cfg.validate()?;
    sampler.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if examples.iter().any(|e| e.images.is_empty()) {
        return Err(Error::NoKeyframes);
    }
    let sampler = SamplerConfig {
        mode: SampleMode::Random,
        ..sampler.clone()
    };
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut augment_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ AUGMENT_STREAM);
    let shift = cfg.augment_shift as i64;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();

    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut log = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let mut picks = Vec::with_capacity(cfg.batch_size);
        while picks.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            picks.push(order[cursor]);
            cursor += 1;
        }
        let mut drawn = Vec::with_capacity(picks.len());
        for &i in &picks {
            let ex = &examples[i];
            let frames = sample_with(&ex.frame_indices, &sampler, &mut sample_rng)?;
            drawn.push((dedup_sequence(ex, &frames), ex.target));
        }
        let augmented: Vec<Vec<Vec<f64>>> = if shift > 0 {
            drawn
                .iter()
                .map(|((images, _), _)| {
                    images
                        .iter()
                        .map(|img| {
                            let dx = augment_rng.gen_range(-shift..=shift);
                            let dy = augment_rng.gen_range(-shift..=shift);
                            shifted(img, cfg.input_width, cfg.input_height, dx, dy)
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let batch: Vec<BatchItem> = drawn
            .into_iter()
            .enumerate()
            .map(|(k, ((images, sequence), target))| BatchItem {
                images: match augmented.get(k) {
                    Some(a) => a.iter().map(Vec::as_slice).collect(),
                    None => images,
                },
                sequence,
                target,
            })
            .collect();
        let (loss, grads) = match backward(&batch, &params, cfg) {
            Ok(r) => r,
            Err(Error::NonFiniteLoss(loss)) => return Err(Error::Diverged { iteration, loss }),
            Err(e) => return Err(e),
        };
        let lr = learning_rate(cfg, iteration);
        adam.step(&mut params, &grads, lr);
        if !params.is_finite() {
            return Err(Error::Diverged {
                iteration,
                loss: f64::NAN,
            });
        }
        if iteration % 100 == 0 {
            log::info!("iteration {iteration}: loss {loss:.5} lr {lr:e}");
        }
        log.push(MetricsRow {
            iteration,
            loss,
            lr,
        });
    }
    Ok((params, log))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: JerseyLabel,
    pub distribution: PredictionDistribution,
    /// Set when no keyframes were available and every frame was used.
    pub fallback: bool,
}

/// Predicts from preprocessed candidate frames with an even-mode sample.
pub fn predict_frames(
    frame_indices: &[usize],
    images: &[&[f64]],
    params: &ModelParams,
    cfg: &NetConfig,
    sampler: &SamplerConfig,
) -> Result<PredictionDistribution> {
    let even = SamplerConfig {
        mode: SampleMode::Even,
        ..sampler.clone()
    };
    let frames = crate::sampler::sample(frame_indices, &even)?;
    let mut positions: Vec<usize> = Vec::with_capacity(frames.len());
    for f in &frames {
        positions.push(
            frame_indices
                .binary_search(f)
                .map_err(|_| Error::Shape(format!("frame {f} not among candidates")))?,
        );
    }
    predict_sequence(images, &positions, params, cfg)
}

/// Samples keyframes evenly, falling back to every frame when `keyframes`
/// is absent or empty, and decodes the per-head argmax.
pub fn predict_tracklet(
    tracklet: &Tracklet,
    keyframes: Option<&KeyframeResult>,
    params: &ModelParams,
    cfg: &NetConfig,
    sampler: &SamplerConfig,
) -> Result<Prediction> {
    let (frame_indices, fallback) = match keyframes {
        Some(k) if !k.is_empty() => (k.keyframe_indices.clone(), false),
        _ => ((0..tracklet.frames.len()).collect::<Vec<_>>(), true),
    };
    if frame_indices.is_empty() {
        return Err(Error::EmptySequence);
    }
    let images: Vec<Vec<f64>> = frame_indices
        .iter()
        .map(|&i| preprocess(&tracklet.frames[i], cfg))
        .collect();
    let refs: Vec<&[f64]> = images.iter().map(|v| v.as_slice()).collect();
    let distribution = predict_frames(&frame_indices, &refs, params, cfg, sampler)?;
    Ok(Prediction {
        label: distribution.label(),
        distribution,
        fallback,
    })
}
