//! Euler-Maruyama integration of the fluctuation SDE systems, deterministic
//! integration of their covariance ODE, and Gaussian sampling of the
//! interpolated fluctuation path.
//!
//! Two systems:
//!
//! - Z-system (constant coefficients): `dZ^(k) = ((k-1) Z^(k-1) - k Z^(k)) dT
//!   + dW^(k)`; its stationary covariance is the exact table from
//!   [`crate::oracles::stationary_cov_table`].
//! - X-system (time-dependent coefficients): `dX^(k) = -(e^{-c_k(tau)} X^(k)
//!   - e^{-c_{k-1}(tau)} X^(k-1)) dtau + sqrt(e^{-c_k} - e^{-c_{k-1}})
//!   dB^(k)` with `e^{-c_0} = 0`; after the time change `tau = e^T - 1` its
//!   coefficients converge to the Z-system's.
//!
//! Noise streams are indexed by (path, component), so the first `k`
//! components' trajectories do not change when the dimension `n` grows (the
//! leading equations are autonomous), and ensembles are order-independent
//! under parallel execution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::asymptotics::exp_neg_c;
use crate::numerics::{cholesky_lower, psd_factor_with_clipping, replica_rng};
use crate::oracles::stationary_cov_table_f64;

#[derive(Debug, Error, PartialEq)]
pub enum SdeError {
    #[error("initial covariance is not positive semidefinite")]
    NonPsdInit,
    #[error("invalid SDE configuration: {0}")]
    BadConfig(String),
}

/// Which fluctuation system to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SdeSystem {
    /// Constant-coefficient limit system in the time variable `T`.
    Z,
    /// Time-dependent prelimit system, started at `tau0 > 0` (the packed
    /// corner `tau = 0` is outside the derivation's reach).
    X { tau0: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeConfig {
    pub n: usize,
    pub dt: f64,
    /// Integration length (in `T` for the Z-system, in `tau` past `tau0` for
    /// the X-system).
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub system: SdeSystem,
    /// Multiplies the diffusion coefficient; 1 is the model, 0 turns the
    /// noise off for deterministic checks.
    pub diffusion_scale: f64,
}

impl SdeConfig {
    pub fn z_system(n: usize, dt: f64, horizon: f64, paths: usize, seed: u64) -> Self {
        SdeConfig {
            n,
            dt,
            horizon,
            paths,
            seed,
            system: SdeSystem::Z,
            diffusion_scale: 1.0,
        }
    }
}

/// Terminal ensemble of an Euler-Maruyama run.
#[derive(Debug, Clone)]
pub struct Ensemble {
    /// One row per path.
    pub terminal: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Sample covariance of the terminal states.
    pub cov: Vec<Vec<f64>>,
    /// Raised when `dt * n > 0.1` (the stiffest drift rate resolves poorly).
    pub stiffness_warning: bool,
}

fn ensemble_stats(terminal: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let paths = terminal.len();
    let n = terminal.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; n];
    for row in terminal {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= paths as f64;
    }
    let mut cov = vec![vec![0.0; n]; n];
    for row in terminal {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = cov[i][j] / (paths as f64 - 1.0);
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    (mean, cov)
}

fn component_rng(seed: u64, path: usize, component: usize) -> ChaCha8Rng {
    // Stream layout: low bits carry the component, the rest the path index.
    replica_rng(seed, ((path as u64) << 16) | component as u64)
}

/// Euler-Maruyama ensemble of the configured system. Initial states are
/// drawn Gaussian with covariance `init_cov` (zero when `None`) via a
/// symmetric factorization; a non-PSD `init_cov` is rejected.
pub fn em_integrate(
    config: &SdeConfig,
    init_cov: Option<&[Vec<f64>]>,
) -> Result<Ensemble, SdeError> {
    if config.n == 0 || config.n > 1 << 16 {
        return Err(SdeError::BadConfig(format!("bad dimension {}", config.n)));
    }
    if !(config.dt > 0.0) || !(config.horizon >= 0.0) {
        return Err(SdeError::BadConfig("dt > 0 and horizon >= 0 required".into()));
    }
    if let SdeSystem::X { tau0 } = config.system {
        if !(tau0 > 0.0) {
            return Err(SdeError::BadConfig(
                "the X-system needs a start time tau0 > 0".into(),
            ));
        }
    }
    let factor = match init_cov {
        None => None,
        Some(mat) => {
            if mat.len() < config.n {
                return Err(SdeError::BadConfig(format!(
                    "initial covariance is {}x{} but n = {}",
                    mat.len(),
                    mat.len(),
                    config.n
                )));
            }
            let lead: Vec<Vec<f64>> = mat[..config.n]
                .iter()
                .map(|row| row[..config.n].to_vec())
                .collect();
            Some(cholesky_lower(&lead).ok_or(SdeError::NonPsdInit)?)
        }
    };
    let steps = (config.horizon / config.dt).round() as usize;
    let n = config.n;
    let dt = config.dt;
    let sqrt_dt = dt.sqrt();
    let terminal: Vec<Vec<f64>> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut rngs: Vec<ChaCha8Rng> = (0..n)
                .map(|c| component_rng(config.seed, p, c))
                .collect();
            // Initial draw: z = L xi keeps component k a function of the
            // first k streams only (L is lower triangular).
            let mut z = vec![0.0; n];
            if let Some(l) = &factor {
                let xi: Vec<f64> = rngs.iter_mut().map(|r| r.sample(StandardNormal)).collect();
                for k in 0..n {
                    z[k] = l[k][..=k].iter().zip(&xi).map(|(a, b)| a * b).sum();
                }
            }
            let mut drift = vec![0.0; n];
            for step in 0..steps {
                match config.system {
                    SdeSystem::Z => {
                        for k in 0..n {
                            let prev = if k == 0 { 0.0 } else { z[k - 1] };
                            drift[k] = (k as f64) * prev - (k as f64 + 1.0) * z[k];
                        }
                        for k in 0..n {
                            let noise: f64 = rngs[k].sample(StandardNormal);
                            z[k] += drift[k] * dt
                                + config.diffusion_scale * sqrt_dt * noise;
                        }
                    }
                    SdeSystem::X { tau0 } => {
                        let tau = tau0 + step as f64 * dt;
                        for k in 0..n {
                            let ck = exp_neg_c(k as u32 + 1, tau);
                            let ckm1 = exp_neg_c(k as u32, tau);
                            let prev = if k == 0 { 0.0 } else { z[k - 1] };
                            drift[k] = -(ck * z[k] - ckm1 * prev);
                            let diff = (ck - ckm1).max(0.0).sqrt();
                            let noise: f64 = rngs[k].sample(StandardNormal);
                            z[k] = z[k]
                                + drift[k] * dt
                                + config.diffusion_scale * diff * sqrt_dt * noise;
                        }
                    }
                }
            }
            z
        })
        .collect();
    let (mean, cov) = ensemble_stats(&terminal);
    Ok(Ensemble {
        terminal,
        mean,
        cov,
        stiffness_warning: dt * n as f64 > 0.1,
    })
}

/// Entrywise stationarity check: integrate the Z-system from the exact
/// stationary covariance and compare the terminal sample covariance to it.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    /// `|cov_hat - A|` entrywise.
    pub gaps: Vec<Vec<f64>>,
    /// `3 stderr + O(dt)` budget per entry.
    pub allowance: Vec<Vec<f64>>,
    pub max_gap: f64,
    pub within_allowance: bool,
}

pub fn stationarity_test(
    n: usize,
    horizon: f64,
    dt: f64,
    paths: usize,
    seed: u64,
) -> Result<StationarityReport, SdeError> {
    if n > 8 {
        return Err(SdeError::BadConfig(format!(
            "stationarity check is desk-scale, n <= 8 (got {n})"
        )));
    }
    let table = stationary_cov_table_f64(n);
    let config = SdeConfig::z_system(n, dt, horizon, paths, seed);
    let ens = em_integrate(&config, Some(&table))?;
    let mut gaps = vec![vec![0.0; n]; n];
    let mut allowance = vec![vec![0.0; n]; n];
    let mut max_gap: f64 = 0.0;
    let mut within = true;
    for r in 0..n {
        for s in 0..n {
            let gap = (ens.cov[r][s] - table[r][s]).abs();
            // Covariance-estimator noise plus a first-order discretization
            // allowance for the linear drift.
            let se = ((table[r][r] * table[s][s] + table[r][s] * table[r][s])
                / paths as f64)
                .sqrt();
            let allow = 3.0 * se + dt * (r + s + 2) as f64 * table[r][s].abs().max(0.1);
            gaps[r][s] = gap;
            allowance[r][s] = allow;
            max_gap = max_gap.max(gap);
            within &= gap <= allow;
        }
    }
    Ok(StationarityReport {
        n,
        horizon,
        dt,
        paths,
        gaps,
        allowance,
        max_gap,
        within_allowance: within,
    })
}

/// Right side of the covariance ODE
/// `dA/dT = 1(r=s) + (r-1) A[r-1][s] + (s-1) A[r][s-1] - (r+s) A[r][s]`
/// (1-based indices; out-of-range terms vanish through their prefactors).
fn cov_ode_rhs(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for r in 0..n {
        for s in 0..n {
            let mut v = if r == s { 1.0 } else { 0.0 };
            if r > 0 {
                v += r as f64 * a[r - 1][s];
            }
            if s > 0 {
                v += s as f64 * a[r][s - 1];
            }
            v -= (r + s + 2) as f64 * a[r][s];
            out[r][s] = v;
        }
    }
    out
}

/// Deterministic RK4 integration of the covariance ODE from `a0`.
pub fn cov_ode_integrate_from(a0: &[Vec<f64>], horizon: f64, dt: f64) -> Vec<Vec<f64>> {
    let n = a0.len();
    let mut a: Vec<Vec<f64>> = a0.to_vec();
    let steps = (horizon / dt).round() as usize;
    let axpy = |target: &mut Vec<Vec<f64>>, coeff: f64, source: &[Vec<f64>]| {
        for (tr, sr) in target.iter_mut().zip(source) {
            for (tv, sv) in tr.iter_mut().zip(sr) {
                *tv += coeff * sv;
            }
        }
    };
    for _ in 0..steps {
        let k1 = cov_ode_rhs(&a);
        let mut a2 = a.clone();
        axpy(&mut a2, dt / 2.0, &k1);
        let k2 = cov_ode_rhs(&a2);
        let mut a3 = a.clone();
        axpy(&mut a3, dt / 2.0, &k2);
        let k3 = cov_ode_rhs(&a3);
        let mut a4 = a.clone();
        axpy(&mut a4, dt, &k3);
        let k4 = cov_ode_rhs(&a4);
        for r in 0..n {
            for s in 0..n {
                a[r][s] += dt / 6.0 * (k1[r][s] + 2.0 * k2[r][s] + 2.0 * k3[r][s] + k4[r][s]);
            }
        }
    }
    a
}

/// Covariance ODE from the zero matrix; approaches the stationary table as
/// the horizon grows.
pub fn cov_ode_integrate(n: usize, horizon: f64, dt: f64) -> Vec<Vec<f64>> {
    cov_ode_integrate_from(&vec![vec![0.0; n]; n], horizon, dt)
}

/// Piecewise-linear interpolation through `(k, zeta_k)`, `Y_0 = 0`.
#[derive(Debug, Clone)]
pub struct YPath {
    /// `values[k-1]` is the path at integer time `k`.
    pub values: Vec<f64>,
}

impl YPath {
    /// Linear interpolation; 0 at and below time 0, constant past the last
    /// integer node.
    pub fn at(&self, time: f64) -> f64 {
        if time <= 0.0 || self.values.is_empty() {
            return 0.0;
        }
        let tmax = self.values.len() as f64;
        if time >= tmax {
            return *self.values.last().unwrap();
        }
        let lo = time.floor();
        let frac = time - lo;
        let below = if lo < 1.0 {
            0.0
        } else {
            self.values[lo as usize - 1]
        };
        let above = self.values[lo as usize];
        (1.0 - frac) * below + frac * above
    }

    /// CSV export `time,component,value` of the integer nodes.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("time,component,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, i + 1, v);
        }
        out
    }
}

/// Gaussian sampler for the fluctuation path: factorizes the stationary
/// float covariance table once, then draws paths with independent seeds.
pub struct YSampler {
    factor: Vec<Vec<f64>>,
    /// Set when plain Cholesky failed and eigenvalue clipping was used.
    pub clipped: bool,
    pub tmax: usize,
}

impl YSampler {
    pub fn new(tmax: usize) -> Result<Self, SdeError> {
        if tmax == 0 || tmax > 2000 {
            return Err(SdeError::BadConfig(format!(
                "the float covariance path supports 1 <= tmax <= 2000, got {tmax}"
            )));
        }
        let table = stationary_cov_table_f64(tmax);
        let (factor, clipped) = psd_factor_with_clipping(&table);
        Ok(YSampler {
            factor,
            clipped,
            tmax,
        })
    }

    pub fn sample(&self, seed: u64, draw: u64) -> YPath {
        let mut rng = replica_rng(seed, draw);
        let xi: Vec<f64> = (0..self.tmax).map(|_| rng.sample(StandardNormal)).collect();
        let values = self
            .factor
            .iter()
            .map(|row| row.iter().zip(&xi).map(|(a, b)| a * b).sum())
            .collect();
        YPath { values }
    }
}

/// One Gaussian draw of the interpolated fluctuation path on `[1, tmax]`.
pub fn sample_y_path(tmax: usize, seed: u64) -> Result<(YPath, bool), SdeError> {
    let sampler = YSampler::new(tmax)?;
    let clipped = sampler.clipped;
    Ok((sampler.sample(seed, 0), clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::variance_stderr;
    use approx::assert_relative_eq;

    #[test]
    fn zero_noise_zero_state_stays_at_equilibrium() {
        let mut config = SdeConfig::z_system(3, 1e-2, 5.0, 4, 1);
        config.diffusion_scale = 0.0;
        let ens = em_integrate(&config, None).unwrap();
        for row in &ens.terminal {
            assert!(row.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ou_variance_reaches_one_half() {
        // n = 1 from zero init, T = 5: Var -> 1/2 within 3 stderr + dt bias.
        let config = SdeConfig::z_system(1, 1e-3, 5.0, 10_000, 11);
        let ens = em_integrate(&config, None).unwrap();
        let vals: Vec<f64> = ens.terminal.iter().map(|r| r[0]).collect();
        let (var, se) = variance_stderr(&vals);
        assert!(
            (var - 0.5).abs() < 3.0 * se + 2.0 * 1e-3,
            "Var = {var}, se = {se}"
        );
    }

    #[test]
    fn em_covariance_bias_is_first_order_in_dt() {
        // The discrete OU chain v' = v (1-dt)^2 + dt has closed-form variance
        // v_m = v*(1 - (1-dt)^{2m}), v* = dt/(1-(1-dt)^2). Check (a) the
        // integrator matches its own discrete law within MC error, and
        // (b) the discrete law's bias against (1-e^{-2T})/2 halves when dt
        // does (exact arithmetic, no MC noise).
        let t_final = 1.0;
        let exact = (1.0 - (-2.0f64 * t_final).exp()) / 2.0;
        let mut biases = Vec::new();
        for &dt in &[2e-3, 1e-3] {
            let m = (t_final / dt).round() as u32;
            let p = 1.0 - dt;
            let vstar = dt / (1.0 - p * p);
            let v_disc = vstar * (1.0 - p.powi(2 * m as i32));
            biases.push(v_disc - exact);
            let config = SdeConfig::z_system(1, dt, t_final, 20_000, 5);
            let ens = em_integrate(&config, None).unwrap();
            let vals: Vec<f64> = ens.terminal.iter().map(|r| r[0]).collect();
            let (var, se) = variance_stderr(&vals);
            assert!(
                (var - v_disc).abs() < 3.0 * se,
                "integrator off its discrete law: {var} vs {v_disc}"
            );
        }
        let ratio = biases[0] / biases[1];
        assert!(
            (1.9..=2.1).contains(&ratio),
            "bias ratio {ratio}, biases {biases:?}"
        );
    }

    #[test]
    fn non_psd_init_rejected() {
        let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let config = SdeConfig::z_system(2, 1e-2, 1.0, 8, 1);
        assert!(matches!(
            em_integrate(&config, Some(&bad)),
            Err(SdeError::NonPsdInit)
        ));
    }

    #[test]
    fn triangular_structure_under_dimension_growth() {
        // The first k equations are autonomous: growing n must not change
        // the leading components (bit for bit).
        let table = stationary_cov_table_f64(6);
        let small = em_integrate(&SdeConfig::z_system(2, 1e-2, 1.0, 16, 9), Some(&table)).unwrap();
        let large = em_integrate(&SdeConfig::z_system(6, 1e-2, 1.0, 16, 9), Some(&table)).unwrap();
        for p in 0..16 {
            for k in 0..2 {
                assert_eq!(small.terminal[p][k], large.terminal[p][k]);
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let cfg = SdeConfig::z_system(3, 1e-2, 1.0, 32, 77);
        let a = em_integrate(&cfg, None).unwrap();
        let b = em_integrate(&cfg, None).unwrap();
        assert_eq!(a.terminal, b.terminal);
    }

    #[test]
    fn cov_ode_matches_ou_closed_form() {
        let a = cov_ode_integrate(1, 1.0, 1e-4);
        let want = (1.0 - (-2.0f64).exp()) / 2.0;
        assert_relative_eq!(a[0][0], want, epsilon = 1e-6);
        // n = 4, T = 10: exponential relaxation to the stationary table.
        let a = cov_ode_integrate(4, 10.0, 1e-3);
        let table = stationary_cov_table_f64(4);
        for r in 0..4 {
            for s in 0..4 {
                assert!((a[r][s] - table[r][s]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn stationary_table_is_a_fixed_point() {
        let table = stationary_cov_table_f64(5);
        let out = cov_ode_integrate_from(&table, 1.0, 1e-3);
        let mut resid: f64 = 0.0;
        for r in 0..5 {
            for s in 0..5 {
                resid = resid.max((out[r][s] - table[r][s]).abs());
            }
        }
        assert!(resid < 1e-10, "fixed-point residual {resid}");
    }

    #[test]
    fn monotone_relaxation_from_zero() {
        // Var(Z^(1)) rises toward 1/2 monotonically in T.
        let mut last = -1.0;
        for &t_final in &[0.25, 0.5, 1.0, 2.0] {
            let a = cov_ode_integrate(1, t_final, 1e-3);
            assert!(a[0][0] > last);
            last = a[0][0];
        }
        assert!((last - 0.5).abs() < 0.01);
    }

    #[test]
    fn y_path_interpolation() {
        let path = YPath {
            values: vec![2.0, -1.0],
        };
        assert_eq!(path.at(0.0), 0.0);
        assert_eq!(path.at(0.5), 1.0);
        assert_eq!(path.at(1.0), 2.0);
        assert_eq!(path.at(1.5), 0.5);
        assert_eq!(path.at(7.0), -1.0);
    }

    #[test]
    fn y_sampler_variances_match_table() {
        let tmax = 10;
        let sampler = YSampler::new(tmax).unwrap();
        assert!(!sampler.clipped);
        let draws = 10_000u64;
        let table = stationary_cov_table_f64(tmax);
        let mut at_k: Vec<Vec<f64>> = vec![Vec::new(); 3];
        let mut at_half: Vec<f64> = Vec::new();
        for d in 0..draws {
            let path = sampler.sample(123, d);
            for (slot, &k) in [1usize, 5, 10].iter().enumerate() {
                at_k[slot].push(path.values[k - 1]);
            }
            at_half.push(path.at(5.5));
        }
        for (slot, &k) in [1usize, 5, 10].iter().enumerate() {
            let (var, se) = variance_stderr(&at_k[slot]);
            assert!(
                (var - table[k - 1][k - 1]).abs() < 3.0 * se,
                "Var(Y_{k}) = {var} vs {}",
                table[k - 1][k - 1]
            );
        }
        // Half-integer: (A_kk + 2 A_{k,k+1} + A_{k+1,k+1})/4 at k = 5.
        let want = (table[4][4] + 2.0 * table[4][5] + table[5][5]) / 4.0;
        let (var, se) = variance_stderr(&at_half);
        assert!((var - want).abs() < 3.0 * se);
    }

    #[test]
    fn y_sampler_guards() {
        assert!(YSampler::new(0).is_err());
        assert!(YSampler::new(2001).is_err());
    }
}
