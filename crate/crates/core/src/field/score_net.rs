//! Per-shape score network: a small MLP fit by denoising score matching so
//! that its output approximates the kde field near the surface. One network
//! is overfit per cloud; there is no cross-shape conditioning.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{FieldError, P2sField};
use crate::geometry::PointCloud;
use crate::nn::{Adam, Linear, LinearGrad};
use crate::rng::{normal01, rng_from_seed};
use crate::vec3::Vec3;

/// Architecture and optimizer settings for a per-shape score network.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNetSpec {
    /// Hidden layer widths; tanh activations between, linear output.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for ScoreNetSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            learning_rate: 3e-3,
            batch_size: 128,
        }
    }
}

/// A 3-in / 3-out MLP mapping a query point to a score vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNet {
    pub(crate) layers: Vec<Linear>,
}

impl ScoreNet {
    pub fn init(spec: &ScoreNetSpec, rng: &mut ChaCha8Rng) -> Self {
        assert!(!spec.hidden.is_empty(), "need at least one hidden layer");
        let mut dims = vec![3];
        dims.extend_from_slice(&spec.hidden);
        dims.push(3);
        let layers = dims
            .windows(2)
            .map(|w| Linear::xavier(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub(crate) fn from_layers(layers: Vec<Linear>) -> Self {
        Self { layers }
    }

    pub(crate) fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn forward(&self, q: Vec3) -> Vec3 {
        let mut cur = vec![q.x, q.y, q.z];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim];
            layer.forward(&cur, &mut out);
            if li != last {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            cur = out;
        }
        Vec3::new(cur[0], cur[1], cur[2])
    }

    /// Forward keeping activations, returning per-layer inputs for backward.
    fn forward_trace(&self, q: Vec3) -> (Vec<Vec<f64>>, Vec3) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = vec![q.x, q.y, q.z];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let mut out = vec![0.0; layer.out_dim];
            layer.forward(&cur, &mut out);
            if li != last {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            cur = out;
        }
        (inputs, Vec3::new(cur[0], cur[1], cur[2]))
    }

    /// Accumulate parameter gradients of `0.5 * ||net(q) - target||^2`.
    /// Returns the squared-error contribution.
    fn accumulate_grad(&self, q: Vec3, target: Vec3, grads: &mut [LinearGrad]) -> f64 {
        let (inputs, out) = self.forward_trace(q);
        let err = out - target;
        let mut dy = vec![err.x, err.y, err.z];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let mut dx = vec![0.0; layer.in_dim];
            layer.backward(&inputs[li], &dy, &mut dx, &mut grads[li]);
            if li > 0 {
                // The stored input of layer li is tanh(pre) of layer li-1;
                // tanh' = 1 - tanh^2 in terms of the activation itself.
                for (d, a) in dx.iter_mut().zip(&inputs[li]) {
                    *d *= 1.0 - a * a;
                }
            }
            dy = dx;
        }
        err.norm2()
    }
}

/// Fit a per-shape score network by denoising score matching: perturb cloud
/// points with isotropic Gaussian noise and regress the network output onto
/// the kde score at the perturbed sample.
///
/// The regression target is the field at the sample point, so the sample
/// distribution only decides where accuracy concentrates. Samples are drawn
/// at dyadic fractions of `sigma_noise` (down to 1/8) so the near-surface
/// shell, where the attack queries the field, is well covered instead of
/// only the far tail.
///
/// Deterministic for a fixed seed. The returned field evaluates the trained
/// network.
pub fn train_score_net(
    cloud: &PointCloud,
    spec: &ScoreNetSpec,
    sigma_noise: f64,
    steps: usize,
    seed: u64,
) -> Result<P2sField, FieldError> {
    if cloud.len() < 64 {
        return Err(FieldError::CloudTooSmall {
            got: cloud.len(),
            need: 64,
        });
    }
    assert!(sigma_noise > 0.0, "noise scale must be positive");
    let target_field = P2sField::kde_default(cloud);
    let mut rng = rng_from_seed(seed);
    let mut net = ScoreNet::init(spec, &mut rng);
    let mut grads: Vec<LinearGrad> = net.layers.iter().map(LinearGrad::zeros_like).collect();
    let mut adam = Adam::new(&net.layers, spec.learning_rate);

    for step in 0..steps {
        for g in &mut grads {
            g.reset();
        }
        let mut loss = 0.0;
        for b in 0..spec.batch_size {
            let i = rng.random_range(0..cloud.len());
            let scale = sigma_noise / (1 << (b % 4)) as f64;
            let noise = Vec3::new(normal01(&mut rng), normal01(&mut rng), normal01(&mut rng));
            let x = cloud.points[i] + noise * scale;
            let target = target_field.evaluate(x);
            loss += net.accumulate_grad(x, target, &mut grads);
        }
        loss /= spec.batch_size as f64;
        if !loss.is_finite() {
            return Err(FieldError::NonFiniteLoss { step });
        }
        for g in &mut grads {
            g.scale(1.0 / spec.batch_size as f64);
        }
        adam.step(&mut net.layers, &grads);
    }
    Ok(P2sField::learned(net, sigma_noise))
}

/// Query points scattered in a shell around the cloud: a random cloud point
/// plus a random direction scaled to `[lo, hi]`. Used to compare field
/// backends where the field is meaningful.
pub fn shell_queries(cloud: &PointCloud, count: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..cloud.len());
            let dir = crate::rng::unit_sphere(&mut rng);
            let r = rng.random_range(lo..hi);
            cloud.points[i] + dir * r
        })
        .collect()
}

/// Mean cosine similarity between two fields over the given queries.
/// Query points where either field is (numerically) zero contribute 0.
pub fn mean_field_cosine(a: &P2sField, b: &P2sField, queries: &[Vec3]) -> f64 {
    let mut acc = 0.0;
    for q in queries {
        let fa = a.evaluate(*q);
        let fb = b.evaluate(*q);
        let na = fa.norm();
        let nb = fb.norm();
        if na > super::ZERO_FIELD_EPS && nb > super::ZERO_FIELD_EPS {
            acc += fa.dot(fb) / (na * nb);
        }
    }
    acc / queries.len() as f64
}
