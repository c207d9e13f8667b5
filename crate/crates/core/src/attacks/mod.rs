//! Iterative perturbation attacks: IFGM and PGD base engines plus the
//! field-guided variant that adjusts each step's direction with the
//! point-to-surface field before applying the step magnitude.
//!
//! Every iteration runs three stages:
//! 1. initial directions: row-normalized input gradient of the
//!    cross-entropy at the current adversarial cloud (ascent toward
//!    misclassification),
//! 2. direction adjustment: add `sign * theta * ||p' - p||` times the unit
//!    field vector at each point, then restore unit length,
//! 3. magnitude step: move each point by its step size, then project back
//!    into the attack budget.
//!
//! With `theta = 0` or the field off, stage 2 degenerates to the identity
//! and the loop is bit-identical to the base attack.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::{P2sField, ZERO_FIELD_EPS};
use crate::geometry::PointCloud;
use crate::metrics::OutcomeMetrics;
use crate::rng::{derive_seed, rng_from_seed};
use crate::vec3::Vec3;
use crate::victim::{Loss, VictimModel};

/// Base iterative attack engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    /// Normalized-gradient steps; optional total-l2-norm budget.
    Ifgm,
    /// Normalized-gradient steps projected onto an l-infinity ball
    /// around the clean cloud every iteration.
    Pgd,
}

/// How the field enters the direction adjustment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldSign {
    /// Forward guidance: drag points toward the surface.
    Plus,
    /// Reversed guidance: push points away from the surface (ablation).
    Minus,
    /// No field term (ablation baseline).
    Off,
}

impl FieldSign {
    pub fn factor(self) -> f64 {
        match self {
            FieldSign::Plus => 1.0,
            FieldSign::Minus => -1.0,
            FieldSign::Off => 0.0,
        }
    }
}

/// Per-point step size rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeRule {
    /// Every moved point steps exactly `alpha`.
    Uniform,
    /// Step proportional to the point's raw gradient norm, scaled so the
    /// mean step over nonzero rows equals `alpha`.
    GradProportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub field_sign: FieldSign,
    /// Weight of the field adjustment term.
    pub theta: f64,
    /// Step length per iteration.
    pub alpha: f64,
    pub max_iters: usize,
    /// Per-coordinate displacement clamp (PGD).
    pub linf_budget: Option<f64>,
    /// Total displacement Frobenius-norm budget (IFGM).
    pub l2_budget: Option<f64>,
    pub magnitude_rule: MagnitudeRule,
    pub seed: u64,
    pub stop_on_success: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: AttackMethod::Ifgm,
            field_sign: FieldSign::Off,
            theta: 0.5,
            alpha: 0.01,
            max_iters: 200,
            linf_budget: None,
            l2_budget: None,
            magnitude_rule: MagnitudeRule::Uniform,
            seed: 0,
            stop_on_success: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.max_iters == 0 {
            return Err("max_iters must be at least 1".into());
        }
        if self.theta < 0.0 {
            return Err(format!("theta must be nonnegative, got {}", self.theta));
        }
        Ok(())
    }

    /// Field-guided variant of a base method with the default theta.
    pub fn p2s_guided(base: AttackMethod) -> Self {
        Self {
            method: base,
            field_sign: FieldSign::Plus,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Clean cloud, current adversarial cloud and iteration counter. Point
/// correspondence is by index throughout.
#[derive(Clone, Debug)]
pub struct AdversarialState {
    pub clean: Vec<Vec3>,
    pub current: Vec<Vec3>,
    pub iteration: usize,
}

impl AdversarialState {
    pub fn new(cloud: &PointCloud) -> Self {
        Self {
            clean: cloud.points.clone(),
            current: cloud.points.clone(),
            iteration: 0,
        }
    }

    pub fn displacement(&self, i: usize) -> f64 {
        self.current[i].dist(self.clean[i])
    }

    pub fn max_coordinate_displacement(&self) -> f64 {
        self.current
            .iter()
            .zip(&self.clean)
            .map(|(c, p)| (*c - *p).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn total_l2(&self) -> f64 {
        self.current
            .iter()
            .zip(&self.clean)
            .map(|(c, p)| c.dist2(*p))
            .sum::<f64>()
            .sqrt()
    }
}

/// Result of one attack run.
#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub adversarial: PointCloud,
    /// Fresh-forward check: predicted class differs from the true label.
    pub success: bool,
    pub iterations: usize,
    /// The clean cloud was already misclassified; no attack was run and the
    /// outcome is excluded from metric aggregation.
    pub clean_misclassified: bool,
    /// FNV-1a over every iterate's coordinates; equal digests mean
    /// bit-identical trajectories.
    pub trajectory_digest: u64,
    pub metrics: Option<OutcomeMetrics>,
}

/// Stage 1: row-normalized cross-entropy ascent directions at the current
/// adversarial cloud. Rows with (exactly) zero gradient stay zero; callers
/// can detect them by their zero norm.
pub fn initial_direction(
    model: &VictimModel,
    state: &AdversarialState,
    label: usize,
) -> Vec<Vec3> {
    let cloud = PointCloud::new(state.current.clone());
    let grad = model
        .input_gradient(&cloud, Loss::CrossEntropy, label)
        .expect("attack models take 3-wide inputs");
    grad.into_iter()
        .map(|g| g.normalized_or_zero(ZERO_FIELD_EPS))
        .collect()
}

/// Raw gradient row norms (for the proportional magnitude rule).
pub fn gradient_row_norms(model: &VictimModel, state: &AdversarialState, label: usize) -> Vec<f64> {
    let cloud = PointCloud::new(state.current.clone());
    model
        .input_gradient(&cloud, Loss::CrossEntropy, label)
        .expect("attack models take 3-wide inputs")
        .into_iter()
        .map(Vec3::norm)
        .collect()
}

/// Stage 2: blend each direction with the unit field vector, weighted by
/// `sign * theta * ||p'_i - p_i||`, and restore unit length.
///
/// Flagged zero rows (points the classifier ignores) stay zero: the field
/// adjusts perturbation directions, it does not invent motion for points
/// that are not being perturbed; renormalizing would blow a vanishing
/// adjustment up to a full unit step. Rows whose adjustment coefficient is
/// exactly zero (zero displacement, `theta == 0`, or the field off) pass
/// through bit-identically, as do rows where the field vanishes.
pub fn adjust_direction(
    dir: &[Vec3],
    state: &AdversarialState,
    field: &P2sField,
    theta: f64,
    sign: FieldSign,
) -> Vec<Vec3> {
    let s = sign.factor();
    dir.iter()
        .enumerate()
        .map(|(i, d)| {
            if *d == crate::vec3::ZERO {
                return *d;
            }
            let coeff = s * theta * state.displacement(i);
            if coeff == 0.0 {
                return *d;
            }
            let f = field.evaluate(state.current[i]);
            let f_norm = f.norm();
            if f_norm < ZERO_FIELD_EPS {
                return *d;
            }
            (*d + f * (coeff / f_norm)).normalized_or_zero(ZERO_FIELD_EPS)
        })
        .collect()
}

/// Per-point step sizes for this iteration.
pub fn step_magnitudes(cfg: &AttackConfig, grad_norms: &[f64]) -> Vec<f64> {
    match cfg.magnitude_rule {
        MagnitudeRule::Uniform => vec![cfg.alpha; grad_norms.len()],
        MagnitudeRule::GradProportional => {
            let nonzero: Vec<f64> = grad_norms.iter().copied().filter(|g| *g > 0.0).collect();
            if nonzero.is_empty() {
                return vec![0.0; grad_norms.len()];
            }
            let mean = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
            grad_norms.iter().map(|g| cfg.alpha * g / mean).collect()
        }
    }
}

/// Stage 3: move every point along its direction by its step size, then
/// project the displacement back into the configured budget and advance the
/// iteration counter.
pub fn magnitude_step(
    state: &mut AdversarialState,
    dir: &[Vec3],
    sigmas: &[f64],
    cfg: &AttackConfig,
) {
    debug_assert_eq!(dir.len(), state.current.len());
    for ((p, d), s) in state.current.iter_mut().zip(dir).zip(sigmas) {
        *p += *d * *s;
    }
    project_budget(state, cfg);
    state.iteration += 1;
}

fn project_budget(state: &mut AdversarialState, cfg: &AttackConfig) {
    match cfg.method {
        AttackMethod::Pgd => {
            if let Some(eps) = cfg.linf_budget {
                for (p, clean) in state.current.iter_mut().zip(&state.clean) {
                    p.x = clean.x + (p.x - clean.x).clamp(-eps, eps);
                    p.y = clean.y + (p.y - clean.y).clamp(-eps, eps);
                    p.z = clean.z + (p.z - clean.z).clamp(-eps, eps);
                }
            }
        }
        AttackMethod::Ifgm => {
            if let Some(budget) = cfg.l2_budget {
                let total = state.total_l2();
                if total > budget {
                    let scale = budget / total;
                    for (p, clean) in state.current.iter_mut().zip(&state.clean) {
                        *p = *clean + (*p - *clean) * scale;
                    }
                }
            }
        }
    }
}

/// Run the full attack loop on one cloud.
///
/// The clean cloud must carry its label. If the model already misclassifies
/// it, the outcome records that and carries the unperturbed cloud.
/// Deterministic for fixed `(model, cloud, field, cfg)`.
pub fn run_attack(
    model: &VictimModel,
    cloud: &PointCloud,
    field: Option<&P2sField>,
    cfg: &AttackConfig,
) -> AttackOutcome {
    let label = cloud.label.expect("attack requires a labeled cloud");
    let clean_pred = model.predict(cloud).expect("forward pass");
    if clean_pred != label {
        return AttackOutcome {
            adversarial: cloud.clone(),
            success: true,
            iterations: 0,
            clean_misclassified: true,
            trajectory_digest: digest_points(FNV_OFFSET, cloud.points.iter()),
            metrics: None,
        };
    }
    let use_field = cfg.field_sign != FieldSign::Off && cfg.theta > 0.0;
    if use_field {
        assert!(
            field.is_some(),
            "field-guided config requires a field backend"
        );
    }

    let mut rng = rng_from_seed(cfg.seed);
    let mut state = AdversarialState::new(cloud);
    // Random perturbation init, uniform per coordinate in [-alpha, alpha].
    for p in state.current.iter_mut() {
        p.x += rng.random_range(-cfg.alpha..cfg.alpha);
        p.y += rng.random_range(-cfg.alpha..cfg.alpha);
        p.z += rng.random_range(-cfg.alpha..cfg.alpha);
    }
    project_budget(&mut state, cfg);
    let mut digest = digest_points(FNV_OFFSET, state.current.iter());

    let mut success = false;
    while state.iteration < cfg.max_iters {
        // One gradient pass serves both the directions and the magnitudes.
        let grad = model
            .input_gradient(
                &PointCloud::new(state.current.clone()),
                Loss::CrossEntropy,
                label,
            )
            .expect("forward pass");
        let dir: Vec<Vec3> = grad
            .iter()
            .map(|g| g.normalized_or_zero(ZERO_FIELD_EPS))
            .collect();
        let dir = if use_field {
            adjust_direction(&dir, &state, field.unwrap(), cfg.theta, cfg.field_sign)
        } else {
            dir
        };
        let sigmas = match cfg.magnitude_rule {
            MagnitudeRule::Uniform => vec![cfg.alpha; dir.len()],
            MagnitudeRule::GradProportional => {
                let norms: Vec<f64> = grad.iter().map(|g| g.norm()).collect();
                step_magnitudes(cfg, &norms)
            }
        };
        magnitude_step(&mut state, &dir, &sigmas, cfg);
        digest = digest_points(digest, state.current.iter());
        if cfg.stop_on_success {
            let pred = model
                .predict(&PointCloud::new(state.current.clone()))
                .expect("forward pass");
            if pred != label {
                success = true;
                break;
            }
        }
    }

    let adversarial = PointCloud {
        points: state.current.clone(),
        label: cloud.label,
        id: cloud.id.clone(),
    };
    if !cfg.stop_on_success || !success {
        success = model.predict(&adversarial).expect("forward pass") != label;
    }
    AttackOutcome {
        adversarial,
        success,
        iterations: state.iteration,
        clean_misclassified: false,
        trajectory_digest: digest,
        metrics: None,
    }
}

/// Attack a batch of clouds in parallel. Per-cloud seeds derive from the
/// config seed and the cloud id (or index), so results are independent of
/// scheduling and thread count. Outcomes come back in input order.
pub fn run_attack_batch<F>(
    model: &VictimModel,
    clouds: &[PointCloud],
    cfg: &AttackConfig,
    make_field: F,
) -> Vec<AttackOutcome>
where
    F: Fn(&PointCloud, u64) -> Option<P2sField> + Sync,
{
    use rayon::prelude::*;
    clouds
        .par_iter()
        .enumerate()
        .map(|(i, cloud)| {
            let tag = cloud.id.clone().unwrap_or_else(|| i.to_string());
            let per_cloud_seed = derive_seed(cfg.seed, &tag);
            let cloud_cfg = cfg.clone().with_seed(per_cloud_seed);
            let field = if cfg.field_sign != FieldSign::Off && cfg.theta > 0.0 {
                make_field(cloud, derive_seed(per_cloud_seed, "field"))
            } else {
                None
            };
            run_attack(model, cloud, field.as_ref(), &cloud_cfg)
        })
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

fn digest_points<'a>(mut hash: u64, points: impl Iterator<Item = &'a Vec3>) -> u64 {
    for p in points {
        for c in [p.x, p.y, p.z] {
            for byte in c.to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x100_0000_01b3);
            }
        }
    }
    hash
}
