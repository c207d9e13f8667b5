//! The point-to-surface field: the gradient of the log-density of a shape's
//! point distribution. Evaluated at any query point it points toward the
//! high-density region, i.e. toward the surface the cloud was sampled from.
//!
//! Two interchangeable backends:
//! - `kde`: the closed-form score of an isotropic Gaussian kernel density
//!   estimate over the reference cloud. Deterministic, exactly reproducible,
//!   and differentiable by construction; serves as the reference field.
//! - `learned`: a small per-shape network fit by denoising score matching to
//!   the kde score (see [`score_net`]).

mod score_net;

pub use score_net::{mean_field_cosine, shell_queries, train_score_net, ScoreNet, ScoreNetSpec};

use thiserror::Error;

use crate::geometry::{NeighborIndex, PointCloud, SurfaceProxy};
use crate::vec3::{Vec3, ZERO};

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    /// Field magnitude too small to define a step direction.
    #[error("field magnitude below {0:e} at the query point")]
    ZeroField(f64),
    /// Training loss became non-finite.
    #[error("non-finite training loss at step {step}")]
    NonFiniteLoss { step: usize },
    /// Reference cloud too small for the requested operation.
    #[error("reference cloud has {got} points, need at least {need}")]
    CloudTooSmall { got: usize, need: usize },
}

/// Minimum field norm considered directional.
pub const ZERO_FIELD_EPS: f64 = 1e-12;

/// Queries farther than this from the reference cloud are outside the
/// region where the field reliably points at the surface.
pub const RELIABLE_RANGE: f64 = 0.5;

#[derive(Debug)]
enum Backend {
    Kde { points: Vec<Vec3>, bandwidth: f64 },
    Learned { net: ScoreNet, sigma_noise: f64 },
}

/// A queryable vector field over 3-space encoding the log-density gradient
/// of a shape. Immutable after construction; evaluation is pure.
#[derive(Debug)]
pub struct P2sField {
    backend: Backend,
}

impl P2sField {
    /// Closed-form Gaussian-kernel backend over `cloud` with bandwidth `h`.
    pub fn kde(cloud: &PointCloud, bandwidth: f64) -> Self {
        assert!(bandwidth > 0.0, "bandwidth must be positive");
        assert!(!cloud.is_empty(), "reference cloud must be nonempty");
        Self {
            backend: Backend::Kde {
                points: cloud.points.clone(),
                bandwidth,
            },
        }
    }

    /// KDE backend with the default adaptive bandwidth
    /// (2x the cloud's mean 8-nearest-neighbor distance).
    pub fn kde_default(cloud: &PointCloud) -> Self {
        let h = default_bandwidth(cloud);
        Self::kde(cloud, h)
    }

    pub fn learned(net: ScoreNet, sigma_noise: f64) -> Self {
        Self {
            backend: Backend::Learned { net, sigma_noise },
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self.backend, Backend::Learned { .. })
    }

    /// Bandwidth (kde) or noise scale (learned) of the backend.
    pub fn scale(&self) -> f64 {
        match &self.backend {
            Backend::Kde { bandwidth, .. } => *bandwidth,
            Backend::Learned { sigma_noise, .. } => *sigma_noise,
        }
    }

    pub fn learned_net(&self) -> Option<&ScoreNet> {
        match &self.backend {
            Backend::Learned { net, .. } => Some(net),
            Backend::Kde { .. } => None,
        }
    }

    /// Log of the Gaussian-mixture density at `q` (kde backend only),
    /// stabilized with log-sum-exp.
    pub fn kde_log_density(&self, q: Vec3) -> f64 {
        match &self.backend {
            Backend::Kde { points, bandwidth } => {
                let h2 = bandwidth * bandwidth;
                let mut max_e = f64::NEG_INFINITY;
                for p in points {
                    let e = -q.dist2(*p) / (2.0 * h2);
                    if e > max_e {
                        max_e = e;
                    }
                }
                let mut sum = 0.0;
                for p in points {
                    sum += (-q.dist2(*p) / (2.0 * h2) - max_e).exp();
                }
                max_e + sum.ln() - (points.len() as f64).ln()
                    - 1.5 * (std::f64::consts::TAU * h2).ln()
            }
            Backend::Learned { .. } => panic!("log density is only defined for the kde backend"),
        }
    }

    /// The field vector at `q`.
    ///
    /// For the kde backend this is the exact analytic score of the mixture:
    /// a softmax-weighted pull toward the reference points, `sum_i w_i *
    /// (p_i - q) / h^2`. Finite for every finite `q`.
    pub fn evaluate(&self, q: Vec3) -> Vec3 {
        match &self.backend {
            Backend::Kde { points, bandwidth } => {
                let h2 = bandwidth * bandwidth;
                let mut max_e = f64::NEG_INFINITY;
                for p in points {
                    let e = -q.dist2(*p) / (2.0 * h2);
                    if e > max_e {
                        max_e = e;
                    }
                }
                let mut wsum = 0.0;
                let mut acc = ZERO;
                for p in points {
                    let w = (-q.dist2(*p) / (2.0 * h2) - max_e).exp();
                    wsum += w;
                    acc += (*p - q) * w;
                }
                acc / (h2 * wsum)
            }
            Backend::Learned { net, .. } => net.forward(q),
        }
    }
}

/// Default kde bandwidth: twice the mean distance to the 8 nearest
/// neighbors, averaged over the cloud. Adapts to sampling density so the
/// density ridge stays on the surface across shapes.
pub fn default_bandwidth(cloud: &PointCloud) -> f64 {
    let k = 8.min(cloud.len() - 1).max(1);
    let index = NeighborIndex::build(&cloud.points);
    let mut acc = 0.0;
    for p in &cloud.points {
        // Skip the self-match at distance zero.
        let hits = index.knn(*p, k + 1);
        let sum: f64 = hits.iter().skip(1).map(|(_, d)| d).sum();
        acc += sum / k as f64;
    }
    2.0 * acc / cloud.len() as f64
}

/// Whether a normalized field step of length `eps` from `q` moves strictly
/// closer to the surface proxy. Pure predicate for tests and diagnostics.
///
/// Callers must stay within [`RELIABLE_RANGE`] of the proxy; farther out
/// the field is defined but no longer reliably surface-seeking.
pub fn field_step_decreases_distance(
    field: &P2sField,
    proxy: &SurfaceProxy,
    q: Vec3,
    eps: f64,
) -> Result<bool, FieldError> {
    assert!(eps > 0.0, "step must be positive");
    debug_assert!(
        proxy.distance(q) <= RELIABLE_RANGE,
        "query {q:?} is outside the field's reliable range"
    );
    let f = field.evaluate(q);
    let norm = f.norm();
    if norm < ZERO_FIELD_EPS {
        return Err(FieldError::ZeroField(ZERO_FIELD_EPS));
    }
    let stepped = q + f * (eps / norm);
    Ok(proxy.distance(stepped) < proxy.distance(q))
}
