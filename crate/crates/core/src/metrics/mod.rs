//! Imperceptibility metrics and their aggregation.
//!
//! Conventions (raw values; display scaling happens only in report
//! writers):
//! - chamfer: symmetric mean of *squared* nearest-neighbor distances;
//! - hausdorff: unsquared worst-case nearest-neighbor distance;
//! - l2: Frobenius norm of the per-index displacement matrix;
//! - emd: mean matched distance under an optimal assignment;
//! - gr: mean dispersion (std/mean) of each point's k-NN distances, a
//!   sampling-regularity surrogate (k = 12); the literature leaves the
//!   exact formula to each implementation, so this definition is local to
//!   this crate and documented here;
//! - curv: mean absolute change of local PCA curvature against the nearest
//!   clean point (k = 16), same caveat as gr.

mod emd;

pub use emd::{emd, EmdMode, EmdResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::AttackOutcome;
use crate::geometry::{estimate_curvature, NeighborIndex, PointCloud};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("size mismatch: {left} vs {right} points")]
    SizeMismatch { left: usize, right: usize },
}

/// Neighborhood size for the curvature metric.
pub const CURV_K: usize = 16;
/// Neighborhood size for the regularity metric.
pub const GR_K: usize = 12;
/// Exact assignment is used up to this size, auction above it.
pub const EMD_EXACT_MAX_N: usize = 256;
/// Target relative gap for the auction assignment.
pub const EMD_DEFAULT_DELTA: f64 = 0.01;

/// Symmetric Chamfer distance (squared-distance convention).
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let ia = NeighborIndex::build(&a.points);
    let ib = NeighborIndex::build(&b.points);
    let ab: f64 = a.points.iter().map(|p| ib.nearest(*p).1.powi(2)).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.points.iter().map(|p| ia.nearest(*p).1.powi(2)).sum::<f64>() / b.len() as f64;
    0.5 * (ab + ba)
}

/// Symmetric Hausdorff distance (unsquared).
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let ia = NeighborIndex::build(&a.points);
    let ib = NeighborIndex::build(&b.points);
    let ab = a
        .points
        .iter()
        .map(|p| ib.nearest(*p).1)
        .fold(0.0, f64::max);
    let ba = b
        .points
        .iter()
        .map(|p| ia.nearest(*p).1)
        .fold(0.0, f64::max);
    ab.max(ba)
}

/// Frobenius norm of the displacement matrix (index correspondence).
pub fn l2_norm(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| p.dist2(*q))
        .sum::<f64>()
        .sqrt())
}

/// Mean absolute curvature change: each adversarial point is compared with
/// the nearest clean point's curvature. Degenerate (coincident)
/// neighborhoods count as zero curvature.
pub fn curv_metric(clean: &PointCloud, adv: &PointCloud, k: usize) -> f64 {
    assert!(clean.len() >= k && adv.len() >= k, "clouds smaller than k");
    let clean_index = NeighborIndex::build(&clean.points);
    let adv_index = NeighborIndex::build(&adv.points);
    let clean_curv: Vec<f64> = (0..clean.len())
        .map(|i| estimate_curvature(clean, &clean_index, i, k).unwrap_or(0.0))
        .collect();
    let mut acc = 0.0;
    for i in 0..adv.len() {
        let c_adv = estimate_curvature(adv, &adv_index, i, k).unwrap_or(0.0);
        let nearest_clean = clean_index.nearest(adv.points[i]).0;
        acc += (c_adv - clean_curv[nearest_clean]).abs();
    }
    acc / adv.len() as f64
}

/// Sampling-regularity score: mean over points of the dispersion
/// (population std over mean) of the distances to the k nearest neighbors.
/// Scale invariant; lower is more regular.
pub fn gr_metric(cloud: &PointCloud, k: usize) -> f64 {
    assert!(cloud.len() > k, "need more than k points");
    let index = NeighborIndex::build(&cloud.points);
    let mut acc = 0.0;
    for p in &cloud.points {
        let hits = index.knn(*p, k + 1);
        let dists: Vec<f64> = hits.iter().skip(1).map(|(_, d)| *d).collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        if mean <= 0.0 {
            continue;
        }
        let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / dists.len() as f64;
        acc += var.sqrt() / mean;
    }
    acc / cloud.len() as f64
}

/// The per-outcome metric values attached to an [`AttackOutcome`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMetrics {
    pub cd: f64,
    pub hd: f64,
    pub l2: f64,
    pub emd: f64,
    pub emd_delta: f64,
    pub gr: f64,
    pub curv: f64,
}

/// Compute all six metrics for a clean/adversarial pair. Exact assignment
/// for small clouds, certified auction above [`EMD_EXACT_MAX_N`] points.
pub fn compute_outcome_metrics(
    clean: &PointCloud,
    adv: &PointCloud,
) -> Result<OutcomeMetrics, MetricError> {
    let mode = if clean.len() <= EMD_EXACT_MAX_N {
        EmdMode::Exact
    } else {
        EmdMode::Approx {
            delta: EMD_DEFAULT_DELTA,
        }
    };
    let emd_result = emd(clean, adv, mode)?;
    Ok(OutcomeMetrics {
        cd: chamfer(clean, adv),
        hd: hausdorff(clean, adv),
        l2: l2_norm(clean, adv)?,
        emd: emd_result.mean_distance,
        emd_delta: emd_result.delta_bound,
        gr: gr_metric(adv, GR_K),
        curv: curv_metric(clean, adv, CURV_K),
    })
}

/// Fill `outcome.metrics` in place (skipped for clean misclassifications,
/// which are excluded from aggregation anyway).
pub fn fill_outcome_metrics(
    clean: &PointCloud,
    outcome: &mut AttackOutcome,
) -> Result<(), MetricError> {
    if outcome.clean_misclassified {
        return Ok(());
    }
    outcome.metrics = Some(compute_outcome_metrics(clean, &outcome.adversarial)?);
    Ok(())
}

/// Aggregate over a run: ASR over the attacked set, per-metric means over
/// successful attacks. Metrics are `None` when no attack succeeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Clouds the attack actually ran on (clean misclassifications are
    /// excluded).
    pub attacked: usize,
    pub succeeded: usize,
    /// Clean misclassifications excluded from the denominator.
    pub excluded_clean_misclassified: usize,
    pub asr: f64,
    pub cd: Option<f64>,
    pub hd: Option<f64>,
    pub l2: Option<f64>,
    pub emd: Option<f64>,
    pub gr: Option<f64>,
    pub curv: Option<f64>,
}

pub fn aggregate(outcomes: &[AttackOutcome]) -> MetricsReport {
    let mut attacked = 0usize;
    let mut succeeded = 0usize;
    let mut excluded = 0usize;
    let mut sums = [0.0f64; 6];
    let mut counted = 0usize;
    for outcome in outcomes {
        if outcome.clean_misclassified {
            excluded += 1;
            continue;
        }
        attacked += 1;
        if !outcome.success {
            continue;
        }
        succeeded += 1;
        if let Some(m) = &outcome.metrics {
            counted += 1;
            sums[0] += m.cd;
            sums[1] += m.hd;
            sums[2] += m.l2;
            sums[3] += m.emd;
            sums[4] += m.gr;
            sums[5] += m.curv;
        }
    }
    let mean = |s: f64| -> Option<f64> {
        if counted > 0 {
            Some(s / counted as f64)
        } else {
            None
        }
    };
    MetricsReport {
        attacked,
        succeeded,
        excluded_clean_misclassified: excluded,
        asr: if attacked > 0 {
            succeeded as f64 / attacked as f64
        } else {
            0.0
        },
        cd: mean(sums[0]),
        hd: mean(sums[1]),
        l2: mean(sums[2]),
        emd: mean(sums[3]),
        gr: mean(sums[4]),
        curv: mean(sums[5]),
    }
}
