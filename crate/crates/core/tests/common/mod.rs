#![allow(dead_code)]

use kfid_core::stnet::{backward, batch_loss, BatchItem, ModelParams, NetConfig, Pooling};
use kfid_core::types::DigitPair;

/// The two-frame micro-model used for finite-difference checks.
pub fn micro_config(pooling: Pooling) -> NetConfig {
    NetConfig {
        input_height: 16,
        input_width: 12,
        feature_dim: 4,
        hidden: 3,
        pooling,
        ..NetConfig::default()
    }
}

pub fn micro_images(cfg: &NetConfig) -> Vec<Vec<f64>> {
    let n = cfg.input_height * cfg.input_width;
    (0..2)
        .map(|f| {
            (0..n)
                .map(|i| ((i * 7 + f * 13) % 17) as f64 / 17.0 + (i as f64 * 0.37).sin() * 0.2)
                .collect()
        })
        .collect()
}

/// Worst relative error per parameter tensor between the analytic gradient
/// and central differences at `eps`.
pub fn gradient_check(pooling: Pooling, eps: f64) -> Vec<(&'static str, f64)> {
    let cfg = micro_config(pooling);
    let mut params = ModelParams::init(&cfg, 11);
    // non-zero biases so every bias path is exercised
    for t in params.tensors_mut() {
        if t.shape.len() == 1 {
            for (i, v) in t.data.iter_mut().enumerate() {
                *v += 0.05 * ((i as f64) * 1.3).cos();
            }
        }
    }
    let images = micro_images(&cfg);
    let refs: Vec<&[f64]> = images.iter().map(|v| v.as_slice()).collect();
    let batch = vec![
        BatchItem {
            images: refs.clone(),
            sequence: vec![0, 1],
            target: DigitPair::new(4, 7).unwrap(),
        },
        BatchItem {
            images: refs,
            sequence: vec![1, 0, 1],
            target: DigitPair::new(10, 10).unwrap(),
        },
    ];
    let (_, grads) = backward(&batch, &params, &cfg).unwrap();
    let names = ModelParams::names();
    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = grads.tensors()[k].len();
        let mut worst: f64 = 0.0;
        for i in 0..len {
            let orig = params.tensors()[k].data[i];
            params.tensors_mut()[k].data[i] = orig + eps;
            let up = batch_loss(&batch, &params, &cfg).unwrap();
            params.tensors_mut()[k].data[i] = orig - eps;
            let down = batch_loss(&batch, &params, &cfg).unwrap();
            params.tensors_mut()[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensors()[k].data[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        out.push((*name, worst));
    }
    out
}
