//! Field-guided adversarial attacks on 3D point clouds.
//!
//! The crate builds a queryable "point-to-surface" vector field (the
//! gradient of the log-density of a shape's point distribution) and uses
//! it to steer iterative perturbation attacks so that adversarial points
//! stay on the underlying surface. Alongside the attack engines it ships a
//! small permutation-invariant victim classifier with exact gradients, the
//! standard imperceptibility metrics, synthetic datasets, and persistence
//! for models, runs and reports.
//!
//! Module map:
//! - [`geometry`]: clouds, normalization, kd-tree queries, curvature,
//!   surface proxies, synthetic shapes;
//! - [`field`]: the point-to-surface field (closed-form kde score and a
//!   learned per-shape network);
//! - [`victim`]: the classifier under attack, its training and weight io;
//! - [`attacks`]: IFGM/PGD loops and the field-guided variant;
//! - [`metrics`]: Chamfer/Hausdorff/l2/EMD/regularity/curvature and
//!   aggregation;
//! - [`data_io`]: datasets, manifests, run logs, reports;
//! - [`reference`]: brute-force oracles used by tests.

pub mod attacks;
pub mod data_io;
pub mod field;
pub mod geometry;
pub mod metrics;
mod nn;
pub mod reference;
pub mod rng;
pub mod vec3;
pub mod victim;

pub use vec3::Vec3;
