//! Seed derivation and sampling helpers.
//!
//! Every randomized operation in this crate takes an explicit seed and runs
//! its own `ChaCha8Rng`; there is no global RNG. Sub-tasks (per-cloud attack
//! jobs, per-instance shape sampling) derive child seeds from a parent seed
//! and a stable string tag so that parallel execution order cannot change
//! results.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::vec3::Vec3;

/// Deterministic child-seed derivation: FNV-1a over the parent seed and tag.
pub fn derive_seed(parent: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in parent.to_le_bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    for byte in tag.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal sample via Box-Muller.
pub fn normal01(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform sample on the unit sphere.
pub fn unit_sphere(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(normal01(rng), normal01(rng), normal01(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}
