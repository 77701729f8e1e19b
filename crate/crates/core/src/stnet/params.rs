use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use super::{NetConfig, Pooling, CHANNELS};
use crate::types::DIGIT_CLASSES;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `[out, in, 3, 3]`
    pub weight: Tensor,
    pub bias: Tensor,
}

/// One direction of the recurrent cell. Gate rows are ordered
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `[4h, D]`
    pub w_input: Tensor,
    /// `[4h, h]`
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    /// `[11, 2h]`
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Every trainable tensor of the network. Gradients and optimizer moments
/// reuse this type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub conv: [ConvLayer; 3],
    /// `[D, F]` where F is the pooled extractor width.
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub head_first: Head,
    pub head_second: Head,
}

/// Spatial size after three 2x2 max-pools (floor).
pub fn pooled_size(cfg: &NetConfig) -> (usize, usize) {
    (cfg.input_height / 8, cfg.input_width / 8)
}

/// Input width of the projection layer.
pub fn flat_features(cfg: &NetConfig) -> usize {
    let (h, w) = pooled_size(cfg);
    match cfg.pooling {
        Pooling::Flatten => CHANNELS[2] * h * w,
        Pooling::Average => CHANNELS[2],
    }
}

impl ModelParams {
    pub fn zeros(cfg: &NetConfig) -> Self {
        let conv_in = [1, CHANNELS[0], CHANNELS[1]];
        let conv = std::array::from_fn(|l| ConvLayer {
            weight: Tensor::zeros(&[CHANNELS[l], conv_in[l], 3, 3]),
            bias: Tensor::zeros(&[CHANNELS[l]]),
        });
        let d = cfg.feature_dim;
        let h = cfg.hidden;
        let lstm = || LstmParams {
            w_input: Tensor::zeros(&[4 * h, d]),
            w_hidden: Tensor::zeros(&[4 * h, h]),
            bias: Tensor::zeros(&[4 * h]),
        };
        let head = || Head {
            weight: Tensor::zeros(&[DIGIT_CLASSES, 2 * h]),
            bias: Tensor::zeros(&[DIGIT_CLASSES]),
        };
        ModelParams {
            conv,
            proj_weight: Tensor::zeros(&[d, flat_features(cfg)]),
            proj_bias: Tensor::zeros(&[d]),
            forward: lstm(),
            backward: lstm(),
            head_first: head(),
            head_second: head(),
        }
    }

    /// Weights uniform in `±sqrt(1/fan_in)`, biases zero except the forget
    /// gate (+1).
    pub fn init(cfg: &NetConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |t: &mut Tensor, fan_in: usize| {
            let a = (1.0 / fan_in as f64).sqrt();
            for v in t.data.iter_mut() {
                *v = rng.gen_range(-a..a);
            }
        };
        for layer in p.conv.iter_mut() {
            let fan_in = layer.weight.shape[1] * 9;
            uniform(&mut layer.weight, fan_in);
        }
        let f = p.proj_weight.shape[1];
        uniform(&mut p.proj_weight, f);
        let h = cfg.hidden;
        for dir in [&mut p.forward, &mut p.backward] {
            uniform(&mut dir.w_input, cfg.feature_dim);
            uniform(&mut dir.w_hidden, h);
            dir.bias.data[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        }
        uniform(&mut p.head_first.weight, 2 * h);
        uniform(&mut p.head_second.weight, 2 * h);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Stable names in checkpoint order.
    pub fn names() -> [&'static str; 18] {
        [
            "conv1.weight",
            "conv1.bias",
            "conv2.weight",
            "conv2.bias",
            "conv3.weight",
            "conv3.bias",
            "proj.weight",
            "proj.bias",
            "lstm_fwd.w_input",
            "lstm_fwd.w_hidden",
            "lstm_fwd.bias",
            "lstm_bwd.w_input",
            "lstm_bwd.w_hidden",
            "lstm_bwd.bias",
            "head1.weight",
            "head1.bias",
            "head2.weight",
            "head2.bias",
        ]
    }

    pub fn tensors(&self) -> [&Tensor; 18] {
        let [c1, c2, c3] = &self.conv;
        [
            &c1.weight,
            &c1.bias,
            &c2.weight,
            &c2.bias,
            &c3.weight,
            &c3.bias,
            &self.proj_weight,
            &self.proj_bias,
            &self.forward.w_input,
            &self.forward.w_hidden,
            &self.forward.bias,
            &self.backward.w_input,
            &self.backward.w_hidden,
            &self.backward.bias,
            &self.head_first.weight,
            &self.head_first.bias,
            &self.head_second.weight,
            &self.head_second.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 18] {
        let [c1, c2, c3] = &mut self.conv;
        [
            &mut c1.weight,
            &mut c1.bias,
            &mut c2.weight,
            &mut c2.bias,
            &mut c3.weight,
            &mut c3.bias,
            &mut self.proj_weight,
            &mut self.proj_bias,
            &mut self.forward.w_input,
            &mut self.forward.w_hidden,
            &mut self.forward.bias,
            &mut self.backward.w_input,
            &mut self.backward.w_hidden,
            &mut self.backward.bias,
            &mut self.head_first.weight,
            &mut self.head_first.bias,
            &mut self.head_second.weight,
            &mut self.head_second.bias,
        ]
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(s));
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
