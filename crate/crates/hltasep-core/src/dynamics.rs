//! Exact continuous-time simulation of slowed t-TASEP and of the
//! Hall-Littlewood partition process, plus the finite-state generator-matrix
//! cross-check that they are the same process up to the conjugate/time
//! reparametrization.
//!
//! Slowed t-TASEP: particle `k` at position `x_k` jumps right at rate
//! `t^{x_k+k} (1 - t^{x_{k-1}-x_k-1})` with `x_0 = infinity`. From any state
//! reachable from the packed initial condition the rates telescope,
//! `rate_k = t^{x_k+k} - t^{x_{k-1}+k-1}`, and sum to exactly 1, so the event
//! times are a unit-rate Poisson process and the jumping index has an exact
//! inverse-CDF sampler.
//!
//! Partition process: part `i` carries an exponential clock of rate `t^{i-1}`
//! (rows `i = 1..n`; for `n = infinity` the index is Geometric(1-t)); a ring
//! increments the part, reordering to stay weakly decreasing. Equivalently,
//! a maximal block of `b` parts equal to `k` starting at index `l` fires at
//! aggregate rate `t^{l-1}(1-t^b)/(1-t)`, and the total rate from any state
//! is `(1-t^n)/(1-t)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numerics::{mean_stderr, replica_rng};
use crate::partition::{
    partitions_up_to, planch_skew_q, principal_p, Partition, PartitionError, Rows,
};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("front positions must be strictly decreasing with x_k >= -k, got {0:?}")]
    InvalidFront(Vec<i64>),
    #[error("state-space guard: max_size must be <= 8, got {0}")]
    StateSpaceTooLarge(u64),
    #[error("|nu| = {size} requires max_size >= {required} for truncation headroom")]
    InsufficientHeadroom { size: u64, required: u64 },
}

/// Slowed t-TASEP state: explicit positions of the particles that have left
/// the packed configuration (`x_1 > x_2 > ... > x_F`), every particle beyond
/// sitting exactly at `x_k = -k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleConfig {
    front: Vec<i64>,
}

impl ParticleConfig {
    /// The packed initial condition `x_k = -k`.
    pub fn packed() -> Self {
        ParticleConfig { front: Vec::new() }
    }

    /// Build from explicit front positions; trailing packed particles are
    /// normalized away.
    pub fn from_front(front: Vec<i64>) -> Result<Self, DynamicsError> {
        let mut f = front.clone();
        while f.last().copied() == Some(-(f.len() as i64)) {
            f.pop();
        }
        let decreasing = f.windows(2).all(|w| w[0] > w[1]);
        let reachable = f.iter().enumerate().all(|(i, &x)| x > -(i as i64 + 1));
        if !decreasing || !reachable {
            return Err(DynamicsError::InvalidFront(front));
        }
        Ok(ParticleConfig { front: f })
    }

    /// Position of particle `k` (1-based), `-k` beyond the front.
    pub fn position(&self, k: usize) -> i64 {
        assert!(k >= 1);
        self.front.get(k - 1).copied().unwrap_or(-(k as i64))
    }

    pub fn front(&self) -> &[i64] {
        &self.front
    }

    fn jump(&mut self, k: usize) {
        if k <= self.front.len() {
            self.front[k - 1] += 1;
        } else {
            debug_assert_eq!(k, self.front.len() + 1);
            self.front.push(-(k as i64) + 1);
        }
    }
}

/// One jump of a simulated process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    /// 1-based particle index (t-TASEP) or part index (partition process).
    pub index: u32,
    /// Position or part value right after the jump.
    pub new_value: i64,
}

/// A replayable simulation run: initial state, ordered jump events, seed.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub initial: S,
    pub final_state: S,
    pub events: Vec<JumpEvent>,
    pub seed: u64,
}

impl<S> Trajectory<S> {
    /// CSV export with columns `time,index,new_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,index,new_value\n");
        for e in &self.events {
            let _ = writeln!(out, "{},{},{}", e.time, e.index, e.new_value);
        }
        out
    }
}

impl Trajectory<ParticleConfig> {
    /// Re-applies the events to the initial state; must reproduce
    /// `final_state`.
    pub fn replay(&self) -> ParticleConfig {
        let mut c = self.initial.clone();
        for e in &self.events {
            c.jump(e.index as usize);
        }
        c
    }
}

impl Trajectory<Partition> {
    pub fn replay(&self) -> Partition {
        let mut parts = self.initial.parts().to_vec();
        for e in &self.events {
            let i = e.index as usize;
            if i == parts.len() + 1 {
                parts.push(1);
            } else {
                parts[i - 1] += 1;
            }
        }
        Partition::new(parts).expect("replayed parts stay sorted")
    }
}

/// Jump rates `(k, rate_k)` of slowed t-TASEP, nonzero entries only.
///
/// Telescoping: with `e_k = t^{x_k+k}` (and `e_0 = 0`), `rate_k = e_k -
/// e_{k-1}`, so the rates sum to `e_{F+1} = 1` exactly from any reachable
/// state.
pub fn ttasep_rates(c: &ParticleConfig, t: f64) -> Vec<(u32, f64)> {
    let f = c.front.len();
    let mut out = Vec::with_capacity(f + 1);
    let mut prev = 0.0; // t^{x_0 + 0} with x_0 = infinity
    for k in 1..=f + 1 {
        let e = t.powi((c.position(k) + k as i64) as i32);
        if e > prev {
            out.push((k as u32, e - prev));
        }
        prev = e;
    }
    out
}

fn simulate_ttasep_with_rng(
    c0: &ParticleConfig,
    t: f64,
    horizon: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Trajectory<ParticleConfig> {
    let mut state = c0.clone();
    let mut events = Vec::new();
    let mut time = 0.0;
    loop {
        let wait: f64 = rng.sample(Exp1);
        time += wait; // total rate is exactly 1
        if time > horizon {
            break;
        }
        // Cumulative rate through k is e_k = t^{x_k+k}; invert the CDF.
        let u: f64 = rng.random();
        let mut k = 1usize;
        loop {
            let e = t.powi((state.position(k) + k as i64) as i32);
            if u < e || k == state.front.len() + 1 {
                break;
            }
            k += 1;
        }
        state.jump(k);
        events.push(JumpEvent {
            time,
            index: k as u32,
            new_value: state.position(k),
        });
    }
    Trajectory {
        initial: c0.clone(),
        final_state: state,
        events,
        seed,
    }
}

/// Simulate slowed t-TASEP to the given horizon. Inter-event times are
/// unit-rate exponentials (the total rate identity), so the event count over
/// a horizon `H` is exactly Poisson(H).
pub fn simulate_ttasep(
    c0: &ParticleConfig,
    t: f64,
    horizon: f64,
    seed: u64,
) -> Trajectory<ParticleConfig> {
    let mut rng = replica_rng(seed, 0);
    simulate_ttasep_with_rng(c0, t, horizon, seed, &mut rng)
}

/// Aggregate one-box jump rates of the partition process, keyed by the part
/// value `k` that gains a box (`k = 0` means a new part is created).
///
/// A block of `b` parts equal to `k >= 1` starting at index `l` fires at rate
/// `t^{l-1}(1-t^b)/(1-t)`; the zero block (indices `len+1 .. n`) at rate
/// `t^{len}(1-t^{n-len})/(1-t)`. The rates sum to `(1-t^n)/(1-t)`.
pub fn hl_part_rates(
    lambda: &Partition,
    t: f64,
    rows: Rows,
) -> Result<Vec<(u32, f64)>, DynamicsError> {
    if !rows.admits_length(lambda.len()) {
        let Rows::Finite(n) = rows else { unreachable!() };
        return Err(PartitionError::LengthExceedsRows {
            len: lambda.len(),
            rows: n,
        }
        .into());
    }
    let mut out = Vec::new();
    for block in lambda.blocks() {
        let rate = t.powi(block.start as i32 - 1) * (1.0 - t.powi(block.count as i32))
            / (1.0 - t);
        out.push((block.value, rate));
    }
    let len = lambda.len();
    let zero_rate = match rows {
        Rows::Infinite => t.powi(len as i32) / (1.0 - t),
        Rows::Finite(n) => {
            if (n as usize) > len {
                t.powi(len as i32) * (1.0 - t.powi(n as i32 - len as i32)) / (1.0 - t)
            } else {
                0.0
            }
        }
    };
    if zero_rate > 0.0 {
        out.push((0, zero_rate));
    }
    Ok(out)
}

fn simulate_hl_with_rng(
    lambda0: &Partition,
    t: f64,
    rows: Rows,
    horizon: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory<Partition>, DynamicsError> {
    if !rows.admits_length(lambda0.len()) {
        let Rows::Finite(n) = rows else { unreachable!() };
        return Err(PartitionError::LengthExceedsRows {
            len: lambda0.len(),
            rows: n,
        }
        .into());
    }
    let total_rate = (1.0 - rows.t_pow(t)) / (1.0 - t);
    let ln_t = t.ln();
    let mut parts = lambda0.parts().to_vec();
    let mut events = Vec::new();
    let mut time = 0.0;
    loop {
        let wait: f64 = rng.sample(Exp1);
        time += wait / total_rate;
        if time > horizon {
            break;
        }
        // Ringing row index: P(i) proportional to t^{i-1}, inverse CDF.
        let u: f64 = rng.sample(rand_distr::Open01);
        let i = match rows {
            Rows::Infinite => (u.ln() / ln_t).ceil().max(1.0) as usize,
            Rows::Finite(n) => {
                let i = ((1.0 - u * (1.0 - t.powi(n as i32))).ln() / ln_t).ceil().max(1.0);
                (i as usize).min(n as usize)
            }
        };
        let index = if i > parts.len() {
            // Rings of any empty row append a part equal to 1.
            parts.push(1);
            parts.len()
        } else {
            // Incrementing any part of a block reorders to incrementing its
            // first part.
            let mut j = i;
            while j > 1 && parts[j - 2] == parts[i - 1] {
                j -= 1;
            }
            parts[j - 1] += 1;
            j
        };
        events.push(JumpEvent {
            time,
            index: index as u32,
            new_value: parts[index - 1] as i64,
        });
    }
    Ok(Trajectory {
        initial: lambda0.clone(),
        final_state: Partition::new(parts).expect("block increments keep parts sorted"),
        events,
        seed,
    })
}

/// Simulate the Hall-Littlewood partition process by aggregate block rates.
/// `|lambda(tau)| - |lambda0|` is Poisson with mean `tau (1-t^n)/(1-t)`.
pub fn simulate_hl(
    lambda0: &Partition,
    t: f64,
    rows: Rows,
    horizon: f64,
    seed: u64,
) -> Result<Trajectory<Partition>, DynamicsError> {
    let mut rng = replica_rng(seed, 0);
    simulate_hl_with_rng(lambda0, t, rows, horizon, seed, &mut rng)
}

/// Truncated generator of the partition process on `{lambda : |lambda| <=
/// max_size}` (length restricted by `rows`), with one extra absorbing defect
/// state collecting the rate that leaks past the truncation.
#[derive(Debug, Clone)]
pub struct Generator {
    pub states: Vec<Partition>,
    index: HashMap<Partition, usize>,
    /// `(N+1) x (N+1)` rate matrix; last row/column is the defect state.
    rate: Vec<Vec<f64>>,
    pub t: f64,
    pub rows: Rows,
    pub max_size: u64,
}

impl Generator {
    pub fn state_index(&self, lambda: &Partition) -> Option<usize> {
        self.index.get(lambda).copied()
    }

    pub fn rate_entry(&self, mu: &Partition, nu: &Partition) -> f64 {
        let (i, j) = (self.index[mu], self.index[nu]);
        self.rate[i][j]
    }

    pub fn rate_matrix(&self) -> &[Vec<f64>] {
        &self.rate
    }

    /// Largest absolute row sum of the extended matrix; exactly zero rows is
    /// the stochasticity check.
    pub fn max_row_sum_residual(&self) -> f64 {
        self.rate
            .iter()
            .map(|row| row.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// `e^{tau B}` by scaling and squaring with a Taylor series whose tail is
    /// bounded below 1e-12 (well under the 1e-10 budget).
    pub fn transition_probs(&self, tau: f64) -> Vec<Vec<f64>> {
        let n = self.rate.len();
        let norm = self
            .rate
            .iter()
            .map(|row| row.iter().map(|v| (v * tau).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let scale = tau / 2f64.powi(squarings as i32);
        let a: Vec<Vec<f64>> = self
            .rate
            .iter()
            .map(|row| row.iter().map(|v| v * scale).collect())
            .collect();
        // Taylor series of e^A with ||A|| <= 0.5: terms decay faster than
        // geometrically; stop when the term norm is at rounding level.
        let mut result = identity(n);
        let mut term = identity(n);
        for k in 1..=64 {
            term = mat_mul(&term, &a);
            for (ri, ti) in result.iter_mut().zip(&term) {
                for (rv, tv) in ri.iter_mut().zip(ti) {
                    *rv += tv / factorial_cached(k);
                }
            }
            let term_norm = term
                .iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
                / factorial_cached(k);
            if term_norm < 1e-16 {
                break;
            }
        }
        for _ in 0..squarings {
            result = mat_mul(&result, &result);
        }
        result
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn factorial_cached(k: usize) -> f64 {
    crate::numerics::factorial_f64(k as u32)
}

/// Build the truncated generator. `max_size <= 8` keeps the state count at
/// desk scale.
pub fn transition_matrix_b(rows: Rows, t: f64, max_size: u64) -> Result<Generator, DynamicsError> {
    if max_size > 8 {
        return Err(DynamicsError::StateSpaceTooLarge(max_size));
    }
    let states = partitions_up_to(max_size, rows);
    let n = states.len();
    let index: HashMap<Partition, usize> = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let total_rate = (1.0 - rows.t_pow(t)) / (1.0 - t);
    let mut rate = vec![vec![0.0; n + 1]; n + 1];
    for (i, mu) in states.iter().enumerate() {
        rate[i][i] = -total_rate;
        for (value, r) in hl_part_rates(mu, t, rows)? {
            let nu = add_box_at_value(mu, value);
            match index.get(&nu) {
                Some(&j) => rate[i][j] += r,
                None => rate[i][n] += r, // leaks past the truncation
            }
        }
    }
    Ok(Generator {
        states,
        index,
        rate,
        t,
        rows,
        max_size,
    })
}

/// Add one box to the block of parts equal to `value` (`value = 0` appends a
/// new part equal to 1).
fn add_box_at_value(mu: &Partition, value: u32) -> Partition {
    let mut parts = mu.parts().to_vec();
    if value == 0 {
        parts.push(1);
    } else {
        let i = parts.iter().position(|&p| p == value).expect("block exists");
        parts[i] += 1;
    }
    Partition::new(parts).expect("one-box addition stays sorted")
}

/// The two independent transition-probability computations and their
/// discrepancy.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionProb {
    /// Truncated matrix exponential value (the returned probability).
    pub probability: f64,
    /// Plancherel/principal formula value.
    pub formula: f64,
    pub discrepancy: f64,
    /// Mass absorbed by the defect state from this row.
    pub leaked_mass: f64,
}

/// `Pr(lambda(tau) = nu | lambda(0) = mu)` computed both by the truncated
/// matrix exponential and by the closed formula
/// `Q_{nu/mu}(gamma(tau)) P_nu(principal) / (P_mu(principal) e^{tau(1-t^n)/(1-t)})`.
pub fn transition_prob_exact(
    mu: &Partition,
    nu: &Partition,
    tau: f64,
    t: f64,
    rows: Rows,
    max_size: u64,
) -> Result<TransitionProb, DynamicsError> {
    let largest = nu.size().max(mu.size());
    if largest + 2 > max_size {
        return Err(DynamicsError::InsufficientHeadroom {
            size: largest,
            required: largest + 2,
        });
    }
    let gen = transition_matrix_b(rows, t, max_size)?;
    let probs = gen.transition_probs(tau);
    let i = gen.state_index(mu).expect("mu fits by the headroom check");
    let j = gen.state_index(nu).expect("nu fits by the headroom check");
    let probability = probs[i][j];
    let leaked_mass = probs[i][gen.states.len()];
    let total_rate = (1.0 - rows.t_pow(t)) / (1.0 - t);
    let formula = planch_skew_q(nu, mu, tau, t) * principal_p(nu, 1.0, rows, t)?
        / (principal_p(mu, 1.0, rows, t)? * (tau * total_rate).exp());
    Ok(TransitionProb {
        probability,
        formula,
        discrepancy: (probability - formula).abs(),
        leaked_mass,
    })
}

/// Terminal positions `(x_1, ..., x_{k_max})` of independent t-TASEP runs,
/// one row per replica, using counter-based replica streams.
pub fn simulate_ttasep_ensemble_positions(
    c0: &ParticleConfig,
    t: f64,
    horizon: f64,
    k_max: u32,
    replicas: u64,
    seed: u64,
) -> Vec<Vec<i64>> {
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            let run = simulate_ttasep_with_rng(c0, t, horizon, seed, &mut rng);
            (1..=k_max as usize)
                .map(|k| run.final_state.position(k))
                .collect()
        })
        .collect()
}

/// Terminal conjugate parts `(lambda'_1, ..., lambda'_{k_max})` of
/// independent partition-process runs, one row per replica.
pub fn simulate_hl_ensemble_conjugates(
    lambda0: &Partition,
    t: f64,
    rows: Rows,
    horizon: f64,
    k_max: u32,
    replicas: u64,
    seed: u64,
) -> Result<Vec<Vec<i64>>, DynamicsError> {
    // Validate once up front; per-replica runs then cannot fail.
    hl_part_rates(lambda0, t, rows)?;
    Ok((0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            let run = simulate_hl_with_rng(lambda0, t, rows, horizon, seed, &mut rng)
                .expect("validated above");
            (1..=k_max)
                .map(|j| run.final_state.conjugate_part(j) as i64)
                .collect()
        })
        .collect())
}

/// Monte Carlo estimate with standard error, replica count and master seed.
#[derive(Debug, Clone, Serialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: u64,
    pub seed: u64,
    /// Raised when stderr/estimate exceeds 5% (heavy-tailed exponential
    /// functionals need large samples for small t).
    pub heavy_tail_warning: bool,
}

/// `sum_m sum_{j<=r_m} lambda'_j = sum_m sum_i min(lambda_i, r_m)`.
fn conjugate_partial_sums(lambda: &Partition, r_list: &[u32]) -> i64 {
    r_list
        .iter()
        .map(|&r| {
            lambda
                .parts()
                .iter()
                .map(|&p| p.min(r) as i64)
                .sum::<i64>()
        })
        .sum()
}

/// Monte Carlo estimate of `E[t^{-sum_m sum_{j<=r_m} lambda'_j(tau)}]` over
/// independent runs of the infinite-row partition process started empty.
/// Replicas use counter-based streams, so the estimate is independent of
/// evaluation order.
pub fn moment_mc(
    r_list: &[u32],
    t: f64,
    tau: f64,
    replicas: u64,
    seed: u64,
) -> MomentEstimate {
    let empty = Partition::empty();
    let values: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            let run = simulate_hl_with_rng(&empty, t, Rows::Infinite, tau, seed, &mut rng)
                .expect("empty start is always valid");
            let s = conjugate_partial_sums(&run.final_state, r_list);
            t.powi(-(s as i32))
        })
        .collect();
    let (estimate, stderr) = mean_stderr(&values);
    MomentEstimate {
        estimate,
        stderr,
        replicas,
        seed,
        heavy_tail_warning: stderr > 0.05 * estimate.abs(),
    }
}
