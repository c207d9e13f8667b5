//! A small permutation-invariant point-cloud classifier: a shared per-point
//! MLP, channel-wise max pooling over points, and a dense head. Forward,
//! parameter gradients and input gradients are all exact reverse-mode.
//!
//! Determinism rules: the rectifier's subgradient at 0 is 0, and max-pool
//! ties select the lowest point index.

mod train;
mod weights_io;

pub use train::{accuracy, train, EpochStats, TrainConfig, TrainedVictim};
pub use weights_io::{load_field_net, load_victim, save_field_net, save_victim, WeightsHeader};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::PointCloud;
use crate::nn::{cross_entropy, relu, relu_grad, Linear, LinearGrad};
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum VictimError {
    #[error("input width mismatch: model expects {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite training loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("weight format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loss used for attack gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    CrossEntropy,
    NegatedCrossEntropy,
}

/// Shared-MLP / max-pool / dense-head classifier over raw coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct VictimModel {
    /// Per-point layers (rectified), applied to each point independently.
    pub(crate) point_layers: Vec<Linear>,
    /// Head layers after pooling; rectified except the final logits layer.
    pub(crate) head_layers: Vec<Linear>,
}

/// Default widths: per-point 3 -> 32 -> 64 -> 128, head 128 -> 64 -> K.
pub const DEFAULT_POINT_WIDTHS: [usize; 3] = [32, 64, 128];
pub const DEFAULT_HEAD_HIDDEN: usize = 64;

impl VictimModel {
    /// Xavier-initialized model with the default widths.
    pub fn init_default(num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::init(&DEFAULT_POINT_WIDTHS, &[DEFAULT_HEAD_HIDDEN], num_classes, rng)
    }

    pub fn init(
        point_widths: &[usize],
        head_hidden: &[usize],
        num_classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(!point_widths.is_empty() && num_classes >= 2);
        let mut point_layers = Vec::new();
        let mut prev = 3;
        for &w in point_widths {
            point_layers.push(Linear::xavier(prev, w, rng));
            prev = w;
        }
        let mut head_layers = Vec::new();
        for &w in head_hidden {
            head_layers.push(Linear::xavier(prev, w, rng));
            prev = w;
        }
        head_layers.push(Linear::xavier(prev, num_classes, rng));
        Self {
            point_layers,
            head_layers,
        }
    }

    pub(crate) fn from_layers(point_layers: Vec<Linear>, head_layers: Vec<Linear>) -> Self {
        Self {
            point_layers,
            head_layers,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.head_layers.last().unwrap().out_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.point_layers.last().unwrap().out_dim
    }

    pub fn input_width(&self) -> usize {
        self.point_layers[0].in_dim
    }

    /// Logits for a cloud. Deterministic; argmax is the predicted class.
    pub fn forward(&self, cloud: &PointCloud) -> Result<Vec<f64>, VictimError> {
        Ok(self.forward_trace(cloud)?.logits)
    }

    /// Predicted class index.
    pub fn predict(&self, cloud: &PointCloud) -> Result<usize, VictimError> {
        let logits = self.forward(cloud)?;
        Ok(argmax(&logits))
    }

    /// Exact gradient of the chosen loss with respect to every point
    /// coordinate. Points never selected by any pooling channel get exact
    /// zero rows.
    pub fn input_gradient(
        &self,
        cloud: &PointCloud,
        loss: Loss,
        target: usize,
    ) -> Result<Vec<Vec3>, VictimError> {
        assert!(target < self.num_classes(), "label out of range");
        let trace = self.forward_trace(cloud)?;
        let mut dlogits = vec![0.0; self.num_classes()];
        cross_entropy(&trace.logits, target, &mut dlogits);
        if loss == Loss::NegatedCrossEntropy {
            for d in &mut dlogits {
                *d = -*d;
            }
        }
        let dpool = self.head_backward_input(&trace, &dlogits);
        Ok(self.pool_backward_input(cloud, &trace, &dpool))
    }

    /// Loss value plus parameter gradients (accumulated into `grad`), used
    /// by training. Gradients are with respect to the mean-reduced loss of
    /// this single cloud.
    pub(crate) fn loss_and_param_grad(
        &self,
        cloud: &PointCloud,
        target: usize,
        grad: &mut ModelGrad,
    ) -> Result<f64, VictimError> {
        let trace = self.forward_trace(cloud)?;
        let mut dlogits = vec![0.0; self.num_classes()];
        let loss = cross_entropy(&trace.logits, target, &mut dlogits);

        // Head backward with parameter accumulation.
        let mut dy = dlogits;
        for li in (0..self.head_layers.len()).rev() {
            let layer = &self.head_layers[li];
            let x = if li == 0 {
                &trace.pooled_act
            } else {
                &trace.head_act[li - 1]
            };
            let mut dx = vec![0.0; layer.in_dim];
            layer.backward(x, &dy, &mut dx, &mut grad.head[li]);
            if li > 0 {
                for (d, pre) in dx.iter_mut().zip(&trace.head_pre[li - 1]) {
                    *d *= relu_grad(*pre);
                }
            }
            dy = dx;
        }

        // Route pooled gradient to winner points, then backprop the shared
        // MLP only through those points.
        let feature_dim = self.feature_dim();
        let mut winners: Vec<(usize, Vec<f64>)> = Vec::new();
        for (c, &w) in trace.pool_argmax.iter().enumerate() {
            let w = w as usize;
            match winners.iter_mut().find(|(i, _)| *i == w) {
                Some((_, row)) => row[c] += dy[c],
                None => {
                    let mut row = vec![0.0; feature_dim];
                    row[c] += dy[c];
                    winners.push((w, row));
                }
            }
        }
        for (pt, dfeat) in winners {
            self.point_backward_params(cloud.points[pt], &trace, pt, dfeat, grad);
        }
        Ok(loss)
    }

    fn point_backward_params(
        &self,
        point: Vec3,
        trace: &ForwardTrace,
        pt: usize,
        dfeat: Vec<f64>,
        grad: &mut ModelGrad,
    ) {
        let mut dy = dfeat;
        for li in (0..self.point_layers.len()).rev() {
            let layer = &self.point_layers[li];
            for (d, pre) in dy.iter_mut().zip(trace.point_pre(li, pt)) {
                *d *= relu_grad(*pre);
            }
            let input_buf;
            let x: &[f64] = if li == 0 {
                input_buf = [point.x, point.y, point.z];
                &input_buf
            } else {
                trace.point_act(li - 1, pt)
            };
            let mut dx = vec![0.0; layer.in_dim];
            layer.backward(x, &dy, &mut dx, &mut grad.point[li]);
            dy = dx;
        }
    }

    fn head_backward_input(&self, trace: &ForwardTrace, dlogits: &[f64]) -> Vec<f64> {
        let mut dy = dlogits.to_vec();
        for li in (0..self.head_layers.len()).rev() {
            let layer = &self.head_layers[li];
            let mut dx = vec![0.0; layer.in_dim];
            layer.backward_input(&dy, &mut dx);
            if li > 0 {
                for (d, pre) in dx.iter_mut().zip(&trace.head_pre[li - 1]) {
                    *d *= relu_grad(*pre);
                }
            }
            dy = dx;
        }
        dy
    }

    fn pool_backward_input(
        &self,
        cloud: &PointCloud,
        trace: &ForwardTrace,
        dpool: &[f64],
    ) -> Vec<Vec3> {
        let feature_dim = self.feature_dim();
        let mut out = vec![crate::vec3::ZERO; cloud.len()];
        // Group pooled gradient rows by winner point.
        let mut winners: Vec<(usize, Vec<f64>)> = Vec::new();
        for (c, &w) in trace.pool_argmax.iter().enumerate() {
            let w = w as usize;
            match winners.iter_mut().find(|(i, _)| *i == w) {
                Some((_, row)) => row[c] += dpool[c],
                None => {
                    let mut row = vec![0.0; feature_dim];
                    row[c] += dpool[c];
                    winners.push((w, row));
                }
            }
        }
        for (pt, dfeat) in winners {
            let mut dy = dfeat;
            for li in (0..self.point_layers.len()).rev() {
                let layer = &self.point_layers[li];
                for (d, pre) in dy.iter_mut().zip(trace.point_pre(li, pt)) {
                    *d *= relu_grad(*pre);
                }
                let mut dx = vec![0.0; layer.in_dim];
                layer.backward_input(&dy, &mut dx);
                dy = dx;
            }
            out[pt] = Vec3::new(dy[0], dy[1], dy[2]);
        }
        out
    }

    fn forward_trace(&self, cloud: &PointCloud) -> Result<ForwardTrace, VictimError> {
        if self.input_width() != 3 {
            return Err(VictimError::ShapeMismatch {
                expected: 3,
                got: self.input_width(),
            });
        }
        assert!(!cloud.is_empty(), "cannot classify an empty cloud");
        let n = cloud.len();
        let feature_dim = self.feature_dim();

        let mut pre: Vec<Vec<f64>> = self
            .point_layers
            .iter()
            .map(|l| vec![0.0; n * l.out_dim])
            .collect();
        let mut act: Vec<Vec<f64>> = pre.clone();

        let mut in_buf: Vec<f64> = Vec::new();
        for (pt, p) in cloud.points.iter().enumerate() {
            in_buf.clear();
            in_buf.extend_from_slice(&[p.x, p.y, p.z]);
            for (li, layer) in self.point_layers.iter().enumerate() {
                let o = layer.out_dim;
                let pre_slice = &mut pre[li][pt * o..(pt + 1) * o];
                layer.forward(&in_buf, pre_slice);
                let act_slice = &mut act[li][pt * o..(pt + 1) * o];
                for (a, &p) in act_slice.iter_mut().zip(pre_slice.iter()) {
                    *a = relu(p);
                }
                in_buf.clear();
                in_buf.extend_from_slice(act_slice);
            }
        }

        // Channel-wise max pool; first maximum wins (lowest point index).
        let last_act = &act[self.point_layers.len() - 1];
        let mut pooled = vec![f64::NEG_INFINITY; feature_dim];
        let mut pool_argmax = vec![0u32; feature_dim];
        for pt in 0..n {
            let row = &last_act[pt * feature_dim..(pt + 1) * feature_dim];
            for (c, &v) in row.iter().enumerate() {
                if v > pooled[c] {
                    pooled[c] = v;
                    pool_argmax[c] = pt as u32;
                }
            }
        }

        let mut head_pre = Vec::new();
        let mut head_act = Vec::new();
        let mut cur = pooled.clone();
        let last = self.head_layers.len() - 1;
        for (li, layer) in self.head_layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim];
            layer.forward(&cur, &mut out);
            if li == last {
                return Ok(ForwardTrace {
                    point_pre: pre,
                    point_act: act,
                    feature_dims: self.point_layers.iter().map(|l| l.out_dim).collect(),
                    pooled_act: pooled,
                    pool_argmax,
                    head_pre,
                    head_act,
                    logits: out,
                });
            }
            head_pre.push(out.clone());
            for v in &mut out {
                *v = relu(*v);
            }
            head_act.push(out.clone());
            cur = out;
        }
        unreachable!("head always ends in a logits layer")
    }
}

/// Cached activations from one forward pass.
struct ForwardTrace {
    point_pre: Vec<Vec<f64>>,
    point_act: Vec<Vec<f64>>,
    feature_dims: Vec<usize>,
    pooled_act: Vec<f64>,
    pool_argmax: Vec<u32>,
    head_pre: Vec<Vec<f64>>,
    head_act: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl ForwardTrace {
    fn point_pre(&self, layer: usize, pt: usize) -> &[f64] {
        let d = self.feature_dims[layer];
        &self.point_pre[layer][pt * d..(pt + 1) * d]
    }

    fn point_act(&self, layer: usize, pt: usize) -> &[f64] {
        let d = self.feature_dims[layer];
        &self.point_act[layer][pt * d..(pt + 1) * d]
    }
}

/// Parameter-gradient buffers matching a [`VictimModel`].
pub(crate) struct ModelGrad {
    point: Vec<LinearGrad>,
    head: Vec<LinearGrad>,
}

impl ModelGrad {
    pub(crate) fn zeros_like(model: &VictimModel) -> Self {
        Self {
            point: model.point_layers.iter().map(LinearGrad::zeros_like).collect(),
            head: model.head_layers.iter().map(LinearGrad::zeros_like).collect(),
        }
    }

    pub(crate) fn reset(&mut self) {
        for g in self.point.iter_mut().chain(self.head.iter_mut()) {
            g.reset();
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for g in self.point.iter_mut().chain(self.head.iter_mut()) {
            g.scale(s);
        }
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
