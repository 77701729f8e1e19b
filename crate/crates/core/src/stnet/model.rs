//! Whole-network forward and backward passes: extractor, bi-LSTM, two
//! digit heads and the averaged per-digit cross-entropy.

use rayon::prelude::*;

use super::extractor::{backward_one, extract_one};
use super::lstm::{backward_direction, run_direction};
use super::params::{Head, ModelParams};
use super::NetConfig;
use crate::error::{Error, Result};
use crate::types::{decode_pair, DigitPair, JerseyLabel, DIGIT_CLASSES};

/// Probabilities are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Per-head class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionDistribution {
    pub first: [f64; DIGIT_CLASSES],
    pub second: [f64; DIGIT_CLASSES],
}

fn argmax(p: &[f64]) -> u8 {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best as u8
}

impl PredictionDistribution {
    pub fn argmax_pair(&self) -> DigitPair {
        DigitPair {
            first: argmax(&self.first),
            second: argmax(&self.second),
        }
    }

    pub fn label(&self) -> JerseyLabel {
        decode_pair(self.argmax_pair())
    }
}

pub fn softmax(logits: &[f64; DIGIT_CLASSES]) -> [f64; DIGIT_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|z| (z - max).exp());
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

fn head_logits(z: &[f64], head: &Head) -> [f64; DIGIT_CLASSES] {
    let width = z.len();
    std::array::from_fn(|c| {
        let row = &head.weight.data[c * width..(c + 1) * width];
        head.bias.data[c] + row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    })
}

pub fn heads(temporal: &[f64], params: &ModelParams) -> Result<PredictionDistribution> {
    let expected = params.head_first.weight.shape[1];
    if temporal.len() != expected {
        return Err(Error::Shape(format!(
            "temporal vector has {} values, expected {expected}",
            temporal.len()
        )));
    }
    Ok(PredictionDistribution {
        first: softmax(&head_logits(temporal, &params.head_first)),
        second: softmax(&head_logits(temporal, &params.head_second)),
    })
}

/// `0.5 * (-ln p1[d1]) + 0.5 * (-ln p2[d2])`, probabilities floored at
/// [`LOG_FLOOR`].
pub fn loss(pred: &PredictionDistribution, target: DigitPair) -> f64 {
    let nll = |p: f64| -p.max(LOG_FLOOR).ln();
    0.5 * nll(pred.first[target.first as usize]) + 0.5 * nll(pred.second[target.second as usize])
}

/// Final forward hidden state followed by final backward hidden state.
pub fn temporal_forward(
    features: &[Vec<f64>],
    params: &ModelParams,
    cfg: &NetConfig,
) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(f) = features.iter().find(|f| f.len() != cfg.feature_dim) {
        return Err(Error::Shape(format!(
            "feature has {} values, expected {}",
            f.len(),
            cfg.feature_dim
        )));
    }
    let xs: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
    Ok(bidirectional(&xs, params, cfg).0)
}

fn bidirectional(
    xs: &[&[f64]],
    params: &ModelParams,
    cfg: &NetConfig,
) -> (
    Vec<f64>,
    super::lstm::DirectionCache,
    super::lstm::DirectionCache,
) {
    let n = xs.len();
    let (hf, cf) = run_direction(xs, 0..n, &params.forward, cfg.hidden);
    let (hb, cb) = run_direction(xs, (0..n).rev(), &params.backward, cfg.hidden);
    let mut z = hf;
    z.extend(hb);
    (z, cf, cb)
}

/// One training or inference example: a set of distinct preprocessed
/// images and the sequence of indices into it fed to the recurrent layer.
/// Repeated indices share one extractor pass.
#[derive(Clone, Debug)]
pub struct BatchItem<'a> {
    pub images: Vec<&'a [f64]>,
    pub sequence: Vec<usize>,
    pub target: DigitPair,
}

pub fn predict_sequence(
    images: &[&[f64]],
    sequence: &[usize],
    params: &ModelParams,
    cfg: &NetConfig,
) -> Result<PredictionDistribution> {
    if sequence.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut feats: Vec<Option<Vec<f64>>> = vec![None; images.len()];
    for &s in sequence {
        let slot = feats
            .get_mut(s)
            .ok_or_else(|| Error::Shape(format!("sequence index {s} out of range")))?;
        if slot.is_none() {
            *slot = Some(extract_one(images[s], params, cfg)?.0);
        }
    }
    let xs: Vec<&[f64]> = sequence
        .iter()
        .map(|&s| feats[s].as_deref().expect("extracted above"))
        .collect();
    let (z, _, _) = bidirectional(&xs, params, cfg);
    heads(&z, params)
}

/// Loss of one item and its gradient scaled by `scale`, added to `grads`.
fn item_gradient(
    item: &BatchItem,
    params: &ModelParams,
    cfg: &NetConfig,
    scale: f64,
    grads: &mut ModelParams,
) -> Result<f64> {
    if item.sequence.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut feats: Vec<Option<(Vec<f64>, super::extractor::ExtractorCache)>> =
        (0..item.images.len()).map(|_| None).collect();
    for &s in &item.sequence {
        let slot = feats
            .get_mut(s)
            .ok_or_else(|| Error::Shape(format!("sequence index {s} out of range")))?;
        if slot.is_none() {
            *slot = Some(extract_one(item.images[s], params, cfg)?);
        }
    }
    let xs: Vec<&[f64]> = item
        .sequence
        .iter()
        .map(|&s| feats[s].as_ref().expect("extracted above").0.as_slice())
        .collect();
    let (z, cache_f, cache_b) = bidirectional(&xs, params, cfg);
    let logits1 = head_logits(&z, &params.head_first);
    let logits2 = head_logits(&z, &params.head_second);
    let pred = PredictionDistribution {
        first: softmax(&logits1),
        second: softmax(&logits2),
    };
    let value = loss(&pred, item.target);

    // d loss / d logits: 0.5 * (p - onehot) unless the floor is active
    let mut dz = vec![0.0; z.len()];
    for (probs, target, head, g_head) in [
        (
            &pred.first,
            item.target.first,
            &params.head_first,
            &mut grads.head_first,
        ),
        (
            &pred.second,
            item.target.second,
            &params.head_second,
            &mut grads.head_second,
        ),
    ] {
        if probs[target as usize] < LOG_FLOOR {
            continue;
        }
        let width = z.len();
        for c in 0..DIGIT_CLASSES {
            let indicator = if c == target as usize { 1.0 } else { 0.0 };
            let g = scale * 0.5 * (probs[c] - indicator);
            g_head.bias.data[c] += g;
            let row = &head.weight.data[c * width..(c + 1) * width];
            let g_row = &mut g_head.weight.data[c * width..(c + 1) * width];
            for j in 0..width {
                g_row[j] += g * z[j];
                dz[j] += g * row[j];
            }
        }
    }

    let h = cfg.hidden;
    let mut d_xs = vec![vec![0.0; cfg.feature_dim]; xs.len()];
    backward_direction(&dz[..h], &xs, &cache_f, &params.forward, &mut grads.forward, &mut d_xs);
    backward_direction(&dz[h..], &xs, &cache_b, &params.backward, &mut grads.backward, &mut d_xs);

    // positions sharing an image share its extractor gradient
    let mut d_feats: Vec<Option<Vec<f64>>> = vec![None; item.images.len()];
    for (pos, &s) in item.sequence.iter().enumerate() {
        match &mut d_feats[s] {
            Some(acc) => acc.iter_mut().zip(&d_xs[pos]).for_each(|(a, b)| *a += b),
            slot => *slot = Some(d_xs[pos].clone()),
        }
    }
    for (s, d_feat) in d_feats.iter().enumerate() {
        if let (Some(d_feat), Some((_, cache))) = (d_feat, &feats[s]) {
            backward_one(d_feat, cache, params, cfg, grads);
        }
    }
    Ok(value)
}

/// Mean loss over the batch and its gradient with respect to every
/// parameter, each multiplied by `loss_scale`.
pub fn backward_scaled(
    batch: &[BatchItem],
    params: &ModelParams,
    cfg: &NetConfig,
    loss_scale: f64,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::EmptySequence);
    }
    let scale = loss_scale / batch.len() as f64;
    let per_item: Vec<Result<(f64, ModelParams)>> = batch
        .par_iter()
        .map(|item| {
            let mut g = params.zeros_like();
            let v = item_gradient(item, params, cfg, scale, &mut g)?;
            Ok((v, g))
        })
        .collect();
    // fixed reduction order keeps results bitwise reproducible
    let mut total = 0.0;
    let mut grads: Option<ModelParams> = None;
    for r in per_item {
        let (v, g) = r?;
        total += v;
        match &mut grads {
            Some(acc) => acc.add_assign(&g),
            None => grads = Some(g),
        }
    }
    let mean = loss_scale * total / batch.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFiniteLoss(mean));
    }
    Ok((mean, grads.expect("non-empty batch")))
}

pub fn backward(
    batch: &[BatchItem],
    params: &ModelParams,
    cfg: &NetConfig,
) -> Result<(f64, ModelParams)> {
    backward_scaled(batch, params, cfg, 1.0)
}

/// Mean loss without gradients.
pub fn batch_loss(batch: &[BatchItem], params: &ModelParams, cfg: &NetConfig) -> Result<f64> {
    let mut total = 0.0;
    for item in batch {
        let pred = predict_sequence(&item.images, &item.sequence, params, cfg)?;
        total += loss(&pred, item.target);
    }
    Ok(total / batch.len() as f64)
}
