//! Bidirectional LSTM over per-frame features; the temporal vector is the
//! concatenation of both directions' final hidden states.

use super::params::LstmParams;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations of one direction, in processing order.
#[derive(Debug, Default)]
pub struct DirectionCache {
    /// Sequence positions in processing order.
    order: Vec<usize>,
    /// `[i, f, g, o]` activations per step, each `h` long.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

/// Runs one direction over `xs` visiting positions in `order`; returns the
/// final hidden state.
pub fn run_direction(
    xs: &[&[f64]],
    order: impl Iterator<Item = usize>,
    p: &LstmParams,
    hidden: usize,
) -> (Vec<f64>, DirectionCache) {
    let h = hidden;
    let d = p.w_input.shape[1];
    let mut cache = DirectionCache::default();
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for t in order {
        let x = xs[t];
        let mut a = p.bias.data.clone();
        for (r, a_r) in a.iter_mut().enumerate() {
            let wx = &p.w_input.data[r * d..(r + 1) * d];
            let wh = &p.w_hidden.data[r * h..(r + 1) * h];
            *a_r += wx.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                + wh.iter().zip(&h_prev).map(|(w, v)| w * v).sum::<f64>();
        }
        let mut gates = vec![0.0; 4 * h];
        let mut c = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        for k in 0..h {
            let i = sigmoid(a[k]);
            let f = sigmoid(a[h + k]);
            let g = a[2 * h + k].tanh();
            let o = sigmoid(a[3 * h + k]);
            gates[k] = i;
            gates[h + k] = f;
            gates[2 * h + k] = g;
            gates[3 * h + k] = o;
            c[k] = f * c_prev[k] + i * g;
            h_new[k] = o * c[k].tanh();
        }
        cache.order.push(t);
        cache.gates.push(gates);
        cache.cells.push(c.clone());
        cache.hiddens.push(h_new.clone());
        h_prev = h_new;
        c_prev = c;
    }
    (h_prev, cache)
}

/// Backpropagates the gradient of the final hidden state through time.
/// Parameter gradients accumulate into `grads`; input gradients add into
/// `d_xs` at their sequence positions.
pub fn backward_direction(
    d_final: &[f64],
    xs: &[&[f64]],
    cache: &DirectionCache,
    p: &LstmParams,
    grads: &mut LstmParams,
    d_xs: &mut [Vec<f64>],
) {
    let h = d_final.len();
    let d = p.w_input.shape[1];
    let mut dh = d_final.to_vec();
    let mut dc = vec![0.0; h];
    let zeros = vec![0.0; h];
    for s in (0..cache.order.len()).rev() {
        let t = cache.order[s];
        let gates = &cache.gates[s];
        let c = &cache.cells[s];
        let c_prev = if s > 0 { &cache.cells[s - 1] } else { &zeros };
        let h_prev = if s > 0 { &cache.hiddens[s - 1] } else { &zeros };

        let mut da = vec![0.0; 4 * h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = c[k].tanh();
            let d_o = dh[k] * tc;
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            let d_i = dc[k] * g;
            let d_g = dc[k] * i;
            let d_f = dc[k] * c_prev[k];
            da[k] = d_i * i * (1.0 - i);
            da[h + k] = d_f * f * (1.0 - f);
            da[2 * h + k] = d_g * (1.0 - g * g);
            da[3 * h + k] = d_o * o * (1.0 - o);
            dc[k] *= f;
        }

        let x = xs[t];
        let dx = &mut d_xs[t];
        let mut dh_prev = vec![0.0; h];
        for (r, &g) in da.iter().enumerate() {
            grads.bias.data[r] += g;
            if g == 0.0 {
                continue;
            }
            let wx = &p.w_input.data[r * d..(r + 1) * d];
            let gwx = &mut grads.w_input.data[r * d..(r + 1) * d];
            for j in 0..d {
                gwx[j] += g * x[j];
                dx[j] += g * wx[j];
            }
            let wh = &p.w_hidden.data[r * h..(r + 1) * h];
            let gwh = &mut grads.w_hidden.data[r * h..(r + 1) * h];
            for j in 0..h {
                gwh[j] += g * h_prev[j];
                dh_prev[j] += g * wh[j];
            }
        }
        dh = dh_prev;
    }
}
