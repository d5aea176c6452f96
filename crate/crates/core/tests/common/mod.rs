#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwprover::curation::gen_statements;
use rwprover::lang::Statement;
use rwprover::policy::{Arch, PolicyParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameters with entries uniform in `[-scale, scale]`, large enough that
/// the hidden layer is well away from linear.
pub fn random_params(arch: Arch, scale: f64, seed: u64) -> PolicyParams {
    let mut p = PolicyParams::zeros(arch);
    let mut r = rng(seed);
    for v in p.theta.iter_mut() {
        *v = r.random_range(-scale..scale);
    }
    p
}

pub fn statements(seed: u64, n: usize) -> Vec<Statement> {
    gen_statements(seed, n, 3, 3).unwrap().into_iter().map(|r| r.statement).collect()
}

/// Relative error with an absolute floor so that coordinates whose true
/// derivative is ~0 are judged on absolute finite-difference noise.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

pub fn central_difference<F: Fn(&PolicyParams) -> f64>(p: &PolicyParams, j: usize, h: f64, f: F) -> f64 {
    let mut plus = p.clone();
    plus.theta[j] += h;
    let mut minus = p.clone();
    minus.theta[j] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Half the probes on coordinates with a non-negligible analytic
/// derivative, half uniform over all coordinates.
pub fn probe_coordinates(grad: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    let live: Vec<usize> = (0..grad.len()).filter(|&j| grad[j].abs() > 1e-4).collect();
    (0..n)
        .map(|k| if k % 2 == 0 && !live.is_empty() { live[r.random_range(0..live.len())] } else { r.random_range(0..grad.len()) })
        .collect()
}
