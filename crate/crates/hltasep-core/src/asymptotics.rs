//! Law-of-large-numbers profiles, the bulk covariance integral, and the
//! scaled-index convergence experiment connecting the two.
//!
//! The limiting particle profile is
//! `c_k(tau) = log S_k(tau) - log S_{k-1}(tau)` with
//! `S_k(tau) = sum_{j=0}^k tau^j/j!`, which solves the nested ODE system
//! `dc_k/dtau = e^{-c_k} - e^{-c_{k-1}}` (with `c_0 = infinity`) from
//! `c_k(0) = 0`. The bulk covariance limit is
//! `int_0^infty y^2 e^{-y^2 - |b-a| y} dy`, approached by
//! `sqrt(k) D(k + floor(a sqrt k), k + floor(b sqrt k))`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{simulate_ttasep_ensemble_positions, ParticleConfig};
use crate::numerics::{adaptive_simpson, mean_stderr, splitmix64};
use crate::oracles::d_float;

/// `log sum_{j=0}^k tau^j/j!`, evaluated by log-sum-exp so large `tau` and
/// `k` stay finite.
pub fn log_partial_exp_sum(k: u32, tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let ln_tau = tau.ln();
    let mut terms = Vec::with_capacity(k as usize + 1);
    let mut ln_fact = 0.0;
    for j in 0..=k as i64 {
        if j > 0 {
            ln_fact += (j as f64).ln();
        }
        terms.push(j as f64 * ln_tau - ln_fact);
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// The limit profile `c_k(tau)` of the rescaled particle positions.
pub fn c_profile(k: u32, tau: f64) -> f64 {
    assert!(k >= 1, "c_profile needs k >= 1");
    log_partial_exp_sum(k, tau) - log_partial_exp_sum(k - 1, tau)
}

/// `e^{-c_k(tau)} = S_{k-1}(tau)/S_k(tau)`, with the `k = 0` convention 0.
pub fn exp_neg_c(k: u32, tau: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    (log_partial_exp_sum(k - 1, tau) - log_partial_exp_sum(k, tau)).exp()
}

/// One row of the law-of-large-numbers experiment.
#[derive(Debug, Clone, Serialize)]
pub struct LlnRow {
    pub epsilon: f64,
    pub k: u32,
    /// Monte Carlo mean of `epsilon x_k(tau/epsilon)`.
    pub mean: f64,
    pub stderr: f64,
    pub c_k: f64,
    pub gap: f64,
}

/// Monte Carlo means of `epsilon x_k(tau/epsilon)` at `t = e^{-epsilon}`
/// against the limit profile, for `k = 1..=k_max` and each `epsilon`.
pub fn lln_experiment(
    k_max: u32,
    tau: f64,
    eps_list: &[f64],
    replicas: u64,
    seed: u64,
) -> Vec<LlnRow> {
    let mut rows = Vec::new();
    for (ei, &eps) in eps_list.iter().enumerate() {
        let t = (-eps).exp();
        let horizon = tau / eps;
        let sub_seed = splitmix64(seed ^ (ei as u64 + 1).wrapping_mul(0x9E3779B9));
        let positions = simulate_ttasep_ensemble_positions(
            &ParticleConfig::packed(),
            t,
            horizon,
            k_max,
            replicas,
            sub_seed,
        );
        for k in 1..=k_max {
            let values: Vec<f64> = positions
                .iter()
                .map(|pos| eps * pos[(k - 1) as usize] as f64)
                .collect();
            let (mean, stderr) = mean_stderr(&values);
            let c_k = c_profile(k, tau);
            rows.push(LlnRow {
                epsilon: eps,
                k,
                mean,
                stderr,
                c_k,
                gap: (mean - c_k).abs(),
            });
        }
    }
    rows
}

/// Limiting bulk covariance `int_0^infty y^2 e^{-y^2-|b-a| y} dy`.
///
/// The integrand is smooth with Gaussian decay; adaptive quadrature on
/// `[0, 10]` reaches 1e-10 absolute and the tail beyond is below `e^{-100}`.
pub fn bulk_cov(a: f64, b: f64) -> f64 {
    let d = (b - a).abs();
    let f = move |y: f64| y * y * (-y * y - d * y).exp();
    // Seed the adaptive pass with uniform panels: for large |b-a| the mass
    // concentrates near 0 and a single coarse panel would be mistaken for
    // converged.
    let panels = 64;
    let width = 10.0 / panels as f64;
    (0..panels)
        .map(|i| {
            adaptive_simpson(
                &f,
                i as f64 * width,
                (i + 1) as f64 * width,
                1e-12 / panels as f64,
            )
        })
        .sum()
}

/// Index rounding used when mapping `(k, a)` to a covariance index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    Floor,
    Ceil,
}

/// `sqrt(k) D(k + round(a sqrt k), k + round(b sqrt k))` by the float residue
/// path. Requires `a >= b` (the covariance formula's argument order) and
/// positive resulting indices.
pub fn bulk_scaled_cov(k: u32, a: f64, b: f64, rounding: Rounding) -> f64 {
    assert!(a >= b, "bulk covariance requires a >= b");
    let shift = |x: f64| -> i64 {
        let v = x * (k as f64).sqrt();
        match rounding {
            Rounding::Floor => v.floor() as i64,
            Rounding::Ceil => v.ceil() as i64,
        }
    };
    let r = k as i64 + shift(a);
    let s = k as i64 + shift(b);
    assert!(s >= 1 && r >= s, "indices out of range: r={r}, s={s}");
    (k as f64).sqrt() * d_float(r as u32, s as u32)
}

/// One row of the bulk convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct BulkRow {
    pub k: u32,
    /// `sqrt(k) D(k + floor(a sqrt k), k + floor(b sqrt k))`.
    pub scaled_prelimit: f64,
    pub limit: f64,
    pub gap: f64,
}

/// Scaled prelimit covariances against [`bulk_cov`], one row per `k`.
pub fn bulk_convergence(k_list: &[u32], a: f64, b: f64) -> Vec<BulkRow> {
    let limit = bulk_cov(a, b);
    k_list
        .par_iter()
        .map(|&k| {
            let scaled = bulk_scaled_cov(k, a, b, Rounding::Floor);
            BulkRow {
                k,
                scaled_prelimit: scaled,
                limit,
                gap: (scaled - limit).abs(),
            }
        })
        .collect()
}
