//! Fully connected ReLU network over a flat parameter vector.
//!
//! Layout per layer: weights `out × in` row-major, then `out` biases. With no
//! hidden layers this is multinomial logistic regression.

use crate::numerics::prob::softmax;

#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<usize>,
    /// `(weight offset, bias offset)` per layer.
    offsets: Vec<(usize, usize)>,
    params: usize,
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(layers: &[usize]) -> Self {
        assert!(layers.len() >= 2, "network needs input and output widths");
        let mut offsets = Vec::with_capacity(layers.len() - 1);
        let mut at = 0;
        for w in layers.windows(2) {
            offsets.push((at, at + w[0] * w[1]));
            at += w[0] * w[1] + w[1];
        }
        Self {
            layers: layers.to_vec(),
            offsets,
            params: at,
            acts: layers.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: layers.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn param_count(layers: &[usize]) -> usize {
        layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    /// `(fan-in, weight range)` for each layer, used by initialization.
    pub fn weight_blocks(&self) -> impl Iterator<Item = (usize, std::ops::Range<usize>)> + '_ {
        self.offsets
            .iter()
            .zip(self.layers.windows(2))
            .map(|(&(w, b), l)| (l[0], w..b))
    }

    /// Runs the network and returns the logits; activations are kept for [`Self::backward`].
    pub fn forward(&mut self, params: &[f64], x: &[f64]) -> &[f64] {
        debug_assert_eq!(params.len(), self.params);
        self.acts[0].copy_from_slice(x);
        let last = self.offsets.len() - 1;
        for (l, &(w_off, b_off)) in self.offsets.iter().enumerate() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            for o in 0..n_out {
                let w = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
                let mut s = params[b_off + o];
                for (wi, xi) in w.iter().zip(input) {
                    s += wi * xi;
                }
                out[o] = if l < last { s.max(0.0) } else { s };
            }
        }
        &self.acts[self.layers.len() - 1]
    }

    /// Accumulates `∂(dlogits · logits)/∂params` into `grad` for the last forward pass.
    pub fn backward(&mut self, params: &[f64], dlogits: &[f64], grad: &mut [f64]) {
        let depth = self.layers.len();
        self.deltas[depth - 1].copy_from_slice(dlogits);
        for l in (0..self.offsets.len()).rev() {
            let (w_off, b_off) = self.offsets[l];
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let (dhead, dtail) = self.deltas.split_at_mut(l + 1);
            let delta_out = &dtail[0];
            let input = &self.acts[l];
            for o in 0..n_out {
                let d = delta_out[o];
                if d == 0.0 {
                    continue;
                }
                grad[b_off + o] += d;
                let g = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if l > 0 {
                let delta_in = &mut dhead[l];
                delta_in.fill(0.0);
                for o in 0..n_out {
                    let d = delta_out[o];
                    if d == 0.0 {
                        continue;
                    }
                    let w = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (di, wi) in delta_in.iter_mut().zip(w) {
                        *di += d * wi;
                    }
                }
                for (di, ai) in delta_in.iter_mut().zip(input) {
                    if *ai <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
        }
    }

    pub fn probabilities(&mut self, params: &[f64], x: &[f64]) -> Vec<f64> {
        softmax(self.forward(params, x))
    }
}

/// `∂CE/∂logits = p - onehot(y)`, written into `out`.
pub fn cross_entropy_grad(probs: &[f64], label: usize, out: &mut [f64]) {
    out.copy_from_slice(probs);
    out[label] -= 1.0;
}

/// Gradient of `KL(s ‖ t)` with respect to the logits of `s`:
/// `sⱼ (ln sⱼ - ln tⱼ - KL)`.
pub fn kl_student_grad(student: &[f64], teacher: &[f64], out: &mut [f64]) {
    const FLOOR: f64 = 1e-12;
    let logs: Vec<f64> = student
        .iter()
        .zip(teacher)
        .map(|(s, t)| s.max(FLOOR).ln() - t.max(FLOOR).ln())
        .collect();
    let kl: f64 = student.iter().zip(&logs).map(|(s, l)| s * l).sum();
    for ((o, s), l) in out.iter_mut().zip(student).zip(&logs) {
        *o = s * (l - kl);
    }
}
