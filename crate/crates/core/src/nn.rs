//! Small dense-layer primitives shared by the victim classifier and the
//! learned field network: linear layers, activations, Adam.
//!
//! Everything is plain `f64` on the CPU, sequential and allocation-light, so
//! training runs are bit-reproducible for a fixed seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fully-connected layer, weights stored row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, (row, bias)) in out
            .iter_mut()
            .zip(self.w.chunks_exact(self.in_dim).zip(&self.b))
        {
            let mut acc = *bias;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *o = acc;
        }
    }

    /// Backpropagate `dy` through the layer: writes `dL/dx` into `dx` and
    /// accumulates parameter gradients into `grad`.
    pub fn backward(&self, x: &[f64], dy: &[f64], dx: &mut [f64], grad: &mut LinearGrad) {
        dx.fill(0.0);
        for (k, (row, dyk)) in self.w.chunks_exact(self.in_dim).zip(dy).enumerate() {
            grad.db[k] += dyk;
            let grow = &mut grad.dw[k * self.in_dim..(k + 1) * self.in_dim];
            for i in 0..self.in_dim {
                dx[i] += row[i] * dyk;
                grow[i] += dyk * x[i];
            }
        }
    }

    /// Backpropagate to the input only (attack-time gradients).
    pub fn backward_input(&self, dy: &[f64], dx: &mut [f64]) {
        dx.fill(0.0);
        for (row, dyk) in self.w.chunks_exact(self.in_dim).zip(dy) {
            for i in 0..self.in_dim {
                dx[i] += row[i] * dyk;
            }
        }
    }
}

/// Gradient buffer matching a [`Linear`] layer.
#[derive(Clone, Debug)]
pub struct LinearGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl LinearGrad {
    pub fn zeros_like(layer: &Linear) -> Self {
        Self {
            dw: vec![0.0; layer.w.len()],
            db: vec![0.0; layer.b.len()],
        }
    }

    pub fn reset(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.dw {
            *v *= s;
        }
        for v in &mut self.db {
            *v *= s;
        }
    }
}

/// Rectifier with subgradient 0 at 0: strictly positive preactivations pass
/// gradient, everything else blocks it.
#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn relu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Adam state over a list of layers.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<LinearGrad>,
    v: Vec<LinearGrad>,
}

impl Adam {
    pub fn new(layers: &[Linear], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: layers.iter().map(LinearGrad::zeros_like).collect(),
            v: layers.iter().map(LinearGrad::zeros_like).collect(),
        }
    }

    pub fn step(&mut self, layers: &mut [Linear], grads: &[LinearGrad]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((layer, grad), (m, v)) in layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            update(
                &mut layer.w,
                &grad.dw,
                &mut m.dw,
                &mut v.dw,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            update(
                &mut layer.b,
                &grad.db,
                &mut m.db,
                &mut v.db,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        params[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Softmax followed by cross-entropy against a class index. Returns the loss
/// and writes `dL/dlogits` into `dlogits`.
pub fn cross_entropy(logits: &[f64], target: usize, dlogits: &mut [f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, l) in dlogits.iter_mut().zip(logits) {
        *d = (l - max).exp();
        sum += *d;
    }
    let loss = sum.ln() + max - logits[target];
    for d in dlogits.iter_mut() {
        *d /= sum;
    }
    dlogits[target] -= 1.0;
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn linear_forward_backward_consistent() {
        let mut rng = rng_from_seed(1);
        let layer = Linear::xavier(4, 3, &mut rng);
        let x = [0.5, -1.0, 2.0, 0.25];
        let mut y = [0.0; 3];
        layer.forward(&x, &mut y);

        // Finite-difference check of input gradients through a scalar head.
        let head = [0.3, -0.7, 1.1];
        let dy = head;
        let mut dx = [0.0; 4];
        let mut grad = LinearGrad::zeros_like(&layer);
        layer.backward(&x, &dy, &mut dx, &mut grad);
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let mut yp = [0.0; 3];
            let mut ym = [0.0; 3];
            layer.forward(&xp, &mut yp);
            layer.forward(&xm, &mut ym);
            let fp: f64 = yp.iter().zip(&head).map(|(a, b)| a * b).sum();
            let fm: f64 = ym.iter().zip(&head).map(|(a, b)| a * b).sum();
            let fd = (fp - fm) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let logits = [1.0, -2.0, 0.5];
        let mut d = [0.0; 3];
        let loss = cross_entropy(&logits, 2, &mut d);
        assert!(loss > 0.0);
        assert!(d.iter().sum::<f64>().abs() < 1e-12);
        assert!(d[2] < 0.0);
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        let mut layers = vec![Linear::zeros(1, 1)];
        layers[0].w[0] = 5.0;
        let mut adam = Adam::new(&layers, 0.1);
        for _ in 0..300 {
            let grads = vec![LinearGrad {
                dw: vec![2.0 * layers[0].w[0]],
                db: vec![0.0],
            }];
            adam.step(&mut layers, &grads);
        }
        assert!(layers[0].w[0].abs() < 1e-2);
    }
}
