//! Per-frame spatial features: grayscale preprocessing and a three-block
//! convolutional extractor with a linear projection.

use super::params::{ModelParams, pooled_size};
use super::tensor::gemm;
use super::{NetConfig, Pooling, CHANNELS};
use crate::error::{Error, Result};
use crate::types::{luma, Frame};

/// Luminance grayscale, bilinear resize (half-pixel centers) to the network
/// input size, scaled to `[0, 1]`. Output is row-major `height x width`.
pub fn preprocess(frame: &Frame, cfg: &NetConfig) -> Vec<f64> {
    let (sw, sh) = (frame.width(), frame.height());
    let (dw, dh) = (cfg.input_width, cfg.input_height);
    let gray: Vec<f64> = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]) / 255.0)
        .collect();
    if (sw, sh) == (dw, dh) {
        return gray;
    }
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let axis = |d: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, wy) = axis(y, sy, sh);
        for x in 0..dw {
            let (x0, x1, wx) = axis(x, sx, sw);
            let top = gray[y0 * sw + x0] * (1.0 - wx) + gray[y0 * sw + x1] * wx;
            let bottom = gray[y1 * sw + x0] * (1.0 - wx) + gray[y1 * sw + x1] * wx;
            out.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

/// Activations kept from the forward pass of one conv block.
#[derive(Debug)]
struct BlockCache {
    height: usize,
    width: usize,
    cols: Vec<f64>,
    pre: Vec<f64>,
    /// For each pooled output, the flat `y * width + x` of its maximum.
    argmax: Vec<u32>,
}

#[derive(Debug)]
pub struct ExtractorCache {
    blocks: Vec<BlockCache>,
    flat: Vec<f64>,
}

fn im2col(x: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let n = h * w;
    let mut cols = vec![0.0; channels * 9 * n];
    for c in 0..channels {
        let plane = &x[c * n..(c + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 9) + ky * 3 + kx) * n..][..n];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let n = h * w;
    let mut x = vec![0.0; channels * n];
    for c in 0..channels {
        let plane = &mut x[c * n..(c + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 9) + ky * 3 + kx) * n..][..n];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
    x
}

/// Forward pass for one preprocessed image.
pub fn extract_one(
    image: &[f64],
    params: &ModelParams,
    cfg: &NetConfig,
) -> Result<(Vec<f64>, ExtractorCache)> {
    let (mut h, mut w) = (cfg.input_height, cfg.input_width);
    if image.len() != h * w {
        return Err(Error::Shape(format!(
            "image has {} values, expected {h}x{w}",
            image.len()
        )));
    }
    let mut x = image.to_vec();
    let mut c_in = 1;
    let mut blocks = Vec::with_capacity(3);
    for (l, layer) in params.conv.iter().enumerate() {
        let c_out = CHANNELS[l];
        let n = h * w;
        let cols = im2col(&x, c_in, h, w);
        let mut pre = vec![0.0; c_out * n];
        for (c, row) in pre.chunks_exact_mut(n).enumerate() {
            row.fill(layer.bias.data[c]);
        }
        gemm(c_out, c_in * 9, n, &layer.weight.data, false, &cols, false, &mut pre, 1.0);

        let (ph, pw) = (h / 2, w / 2);
        let mut pooled = vec![0.0; c_out * ph * pw];
        let mut argmax = vec![0u32; c_out * ph * pw];
        for c in 0..c_out {
            let plane = &pre[c * n..(c + 1) * n];
            for py in 0..ph {
                for px in 0..pw {
                    let mut best = (2 * py) * w + 2 * px;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (2 * py + dy) * w + 2 * px + dx;
                        if plane[i] > plane[best] {
                            best = i;
                        }
                    }
                    let o = (c * ph + py) * pw + px;
                    // relu commutes with max
                    pooled[o] = plane[best].max(0.0);
                    argmax[o] = best as u32;
                }
            }
        }
        blocks.push(BlockCache {
            height: h,
            width: w,
            cols,
            pre,
            argmax,
        });
        x = pooled;
        c_in = c_out;
        h /= 2;
        w /= 2;
    }

    let flat = match cfg.pooling {
        Pooling::Flatten => x,
        Pooling::Average => {
            let n = (h * w) as f64;
            x.chunks_exact(h * w).map(|p| p.iter().sum::<f64>() / n).collect()
        }
    };
    let d = cfg.feature_dim;
    let mut feature = params.proj_bias.data.clone();
    gemm(d, flat.len(), 1, &params.proj_weight.data, false, &flat, false, &mut feature, 1.0);
    Ok((feature, ExtractorCache { blocks, flat }))
}

/// Accumulates parameter gradients given the gradient of the feature.
pub fn backward_one(
    d_feature: &[f64],
    cache: &ExtractorCache,
    params: &ModelParams,
    cfg: &NetConfig,
    grads: &mut ModelParams,
) {
    let d = cfg.feature_dim;
    let f = cache.flat.len();
    for (g, v) in grads.proj_bias.data.iter_mut().zip(d_feature) {
        *g += v;
    }
    // outer product d_feature x flat
    gemm(d, 1, f, d_feature, false, &cache.flat, false, &mut grads.proj_weight.data, 1.0);
    let mut d_flat = vec![0.0; f];
    gemm(f, d, 1, &params.proj_weight.data, true, d_feature, false, &mut d_flat, 0.0);

    let (fh, fw) = pooled_size(cfg);
    let mut d_x = match cfg.pooling {
        Pooling::Flatten => d_flat,
        Pooling::Average => {
            let n = fh * fw;
            d_flat
                .iter()
                .flat_map(|&g| std::iter::repeat_n(g / n as f64, n))
                .collect()
        }
    };

    for l in (0..3).rev() {
        let block = &cache.blocks[l];
        let layer = &params.conv[l];
        let (h, w) = (block.height, block.width);
        let n = h * w;
        let c_out = CHANNELS[l];
        let c_in = if l == 0 { 1 } else { CHANNELS[l - 1] };

        let mut d_pre = vec![0.0; c_out * n];
        let pooled_per_channel = (h / 2) * (w / 2);
        for (o, &g) in d_x.iter().enumerate() {
            let c = o / pooled_per_channel;
            let i = c * n + block.argmax[o] as usize;
            if block.pre[i] > 0.0 {
                d_pre[i] += g;
            }
        }
        let g_layer = &mut grads.conv[l];
        for (c, row) in d_pre.chunks_exact(n).enumerate() {
            g_layer.bias.data[c] += row.iter().sum::<f64>();
        }
        gemm(c_out, n, c_in * 9, &d_pre, false, &block.cols, true, &mut g_layer.weight.data, 1.0);
        if l > 0 {
            let mut d_cols = vec![0.0; c_in * 9 * n];
            gemm(c_in * 9, c_out, n, &layer.weight.data, true, &d_pre, false, &mut d_cols, 0.0);
            d_x = col2im(&d_cols, c_in, h, w);
        }
    }
}

/// Features for a list of preprocessed images.
pub fn extract_features(
    images: &[Vec<f64>],
    params: &ModelParams,
    cfg: &NetConfig,
) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|img| extract_one(img, params, cfg).map(|(f, _)| f))
        .collect()
}
