//! Integer partitions and the Hall-Littlewood polynomial evaluations the
//! transition formulas require.
//!
//! - [`Partition`]: weakly decreasing positive parts; conjugate,
//!   multiplicities and the statistic `n(lambda) = sum (i-1) lambda_i`.
//! - [`interlaces`]: the adjacency relation `mu ≺ lambda` of the branching rule.
//! - [`psi_coeff`] / [`phi_coeff`]: one-variable branching coefficients.
//! - [`monomial_p`]: brute-force symmetrization oracle for `P_lambda(x; t)`.
//! - [`skew_eval_alpha`]: skew `P`/`Q` at finitely many alpha variables via
//!   depth-first enumeration of interlacing chains.
//! - [`principal_p`]: closed form for `P_lambda(u, ut, ..., ut^{n-1}; t)`,
//!   including the infinite geometric progression.
//! - [`planch_skew_q`]: skew `Q` under the Plancherel specialization, as a
//!   one-box-chain sum (validated in tests against the alpha approximation).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Chain enumeration gives up beyond this many interlacing chains.
pub const CHAIN_BUDGET: u64 = 1_000_000;

/// Factors of an infinite q-Pochhammer product are dropped once they deviate
/// from 1 by less than this (double-precision floor; relative error of the
/// truncated product is then below 1e-14).
const POCHHAMMER_TRUNCATION: f64 = 1e-16;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("parts must be positive and weakly decreasing, got {0:?}")]
    InvalidParts(Vec<u32>),
    #[error("partitions do not interlace: required {0} ≺ {1}")]
    NotInterlacing(String, String),
    #[error("monomial_p requires pairwise distinct variables")]
    RepeatedVariable,
    #[error("monomial_p is a brute-force oracle, at most {max} variables (got {got})")]
    TooManyVariables { max: usize, got: usize },
    #[error("partition has {len} parts but only {rows} rows are available")]
    LengthExceedsRows { len: usize, rows: u32 },
    #[error("chain enumeration exceeded the budget of {CHAIN_BUDGET} chains")]
    ChainBudgetExceeded,
    #[error("t must lie in (0,1), got {0}")]
    InvalidT(f64),
    #[error("cannot parse partition from {0:?}")]
    Parse(String),
}

/// Number of rows of the Hall-Littlewood process: a finite count or the
/// infinite geometric specialization `1, t, t^2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rows {
    Finite(u32),
    Infinite,
}

impl Rows {
    /// `t^n`, with the convention `t^infinity = 0`.
    pub fn t_pow(self, t: f64) -> f64 {
        match self {
            Rows::Finite(n) => t.powi(n as i32),
            Rows::Infinite => 0.0,
        }
    }

    pub fn admits_length(self, len: usize) -> bool {
        match self {
            Rows::Finite(n) => len <= n as usize,
            Rows::Infinite => true,
        }
    }
}

impl fmt::Display for Rows {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rows::Finite(n) => write!(f, "{n}"),
            Rows::Infinite => write!(f, "inf"),
        }
    }
}

/// Hall-Littlewood parameter `t in (0,1)` together with the row count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlParams {
    t: f64,
    pub rows: Rows,
}

impl HlParams {
    pub fn new(t: f64) -> Result<Self, PartitionError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(PartitionError::InvalidT(t));
        }
        Ok(HlParams {
            t,
            rows: Rows::Infinite,
        })
    }

    pub fn with_rows(t: f64, rows: Rows) -> Result<Self, PartitionError> {
        Ok(HlParams { rows, ..Self::new(t)? })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `epsilon = -ln t > 0`.
    pub fn epsilon(&self) -> f64 {
        -self.t.ln()
    }
}

/// An integer partition: a weakly decreasing sequence of positive parts
/// (trailing zeros implicit).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    parts: Vec<u32>,
}

/// A maximal block of equal nonzero parts: `count` parts equal to `value`
/// occupying 1-based indices `start .. start + count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub value: u32,
    pub start: usize,
    pub count: usize,
}

impl Partition {
    /// The empty partition.
    pub fn empty() -> Self {
        Partition { parts: Vec::new() }
    }

    pub fn new(parts: impl Into<Vec<u32>>) -> Result<Self, PartitionError> {
        let mut parts = parts.into();
        // Trailing zeros are allowed on input and normalized away.
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if parts.windows(2).any(|w| w[0] < w[1]) || parts.iter().any(|&p| p == 0) {
            return Err(PartitionError::InvalidParts(parts));
        }
        Ok(Partition { parts })
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    /// `lambda_i` with 1-based index and implicit trailing zeros.
    pub fn part(&self, i: usize) -> u32 {
        if i == 0 || i > self.parts.len() {
            0
        } else {
            self.parts[i - 1]
        }
    }

    /// `|lambda|`.
    pub fn size(&self) -> u64 {
        self.parts.iter().map(|&p| p as u64).sum()
    }

    /// Number of nonzero parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// `m_i(lambda)`, the number of parts equal to `i >= 1`.
    pub fn multiplicity(&self, i: u32) -> usize {
        self.parts.iter().filter(|&&p| p == i).count()
    }

    /// Multiplicities of all nonzero part values.
    pub fn multiplicities(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for &p in &self.parts {
            *m.entry(p).or_insert(0) += 1;
        }
        m
    }

    /// Maximal blocks of equal nonzero parts, front to back.
    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.parts.len() {
            let mut j = i;
            while j < self.parts.len() && self.parts[j] == self.parts[i] {
                j += 1;
            }
            out.push(Block {
                value: self.parts[i],
                start: i + 1,
                count: j - i,
            });
            i = j;
        }
        out
    }

    /// `lambda'_i = #{j : lambda_j >= i}` for `i >= 1`.
    pub fn conjugate_part(&self, i: u32) -> usize {
        if i == 0 {
            return usize::MAX;
        }
        self.parts.iter().filter(|&&p| p >= i).count()
    }

    pub fn conjugate(&self) -> Partition {
        let max = self.parts.first().copied().unwrap_or(0);
        let parts = (1..=max).map(|i| self.conjugate_part(i) as u32).collect();
        Partition { parts }
    }

    /// `n(lambda) = sum_i (i-1) lambda_i`.
    pub fn n_stat(&self) -> u64 {
        self.parts
            .iter()
            .enumerate()
            .map(|(i, &p)| i as u64 * p as u64)
            .sum()
    }

    /// Containment `self ⊆ other` part by part.
    pub fn contained_in(&self, other: &Partition) -> bool {
        self.parts
            .iter()
            .enumerate()
            .all(|(i, &p)| p <= other.part(i + 1))
    }

    /// All partitions obtained from `self` by adding a single box, restricted
    /// to row count `rows` and (optionally) to partitions contained in `bound`.
    pub fn one_box_additions(&self, rows: Rows, bound: Option<&Partition>) -> Vec<Partition> {
        let mut out = Vec::new();
        let mut push = |nu: Partition| {
            if let Some(b) = bound {
                if !nu.contained_in(b) {
                    return;
                }
            }
            out.push(nu);
        };
        for block in self.blocks() {
            // Incrementing any part of the block yields the same partition;
            // incrementing the first keeps the parts sorted.
            let mut parts = self.parts.clone();
            parts[block.start - 1] += 1;
            push(Partition { parts });
        }
        if rows.admits_length(self.len() + 1) {
            let mut parts = self.parts.clone();
            parts.push(1);
            push(Partition { parts });
        }
        out
    }
}

impl fmt::Display for Partition {
    /// Comma-separated parts; the empty partition prints as an empty string.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for p in &self.parts {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Partition::empty());
        }
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| PartitionError::Parse(s.to_string()))?;
        Partition::new(parts)
    }
}

/// All partitions with `|lambda| <= max_size` and `len(lambda)` admitted by
/// `rows`, ordered by (size, lexicographic).
pub fn partitions_up_to(max_size: u64, rows: Rows) -> Vec<Partition> {
    let mut out = vec![Partition::empty()];
    let mut stack: Vec<Vec<u32>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let used: u64 = prefix.iter().map(|&p| p as u64).sum();
        let cap = prefix.last().copied().unwrap_or(max_size.min(u32::MAX as u64) as u32);
        if !rows.admits_length(prefix.len() + 1) {
            continue;
        }
        for p in 1..=cap {
            if used + p as u64 > max_size {
                break;
            }
            let mut next = prefix.clone();
            next.push(p);
            out.push(Partition {
                parts: next.clone(),
            });
            stack.push(next);
        }
    }
    out.sort_by_key(|l| (l.size(), l.parts.clone()));
    out
}

/// Interlacing `mu ≺ lambda`, i.e. `lambda_1 >= mu_1 >= lambda_2 >= mu_2 >= ...`.
pub fn interlaces(mu: &Partition, lambda: &Partition) -> bool {
    let n = mu.len().max(lambda.len()) + 1;
    (1..=n).all(|i| lambda.part(i) >= mu.part(i) && mu.part(i) >= lambda.part(i + 1))
}

fn require_interlacing(inner: &Partition, outer: &Partition) -> Result<(), PartitionError> {
    if interlaces(inner, outer) {
        Ok(())
    } else {
        Err(PartitionError::NotInterlacing(
            inner.to_string(),
            outer.to_string(),
        ))
    }
}

/// `psi_{mu/lambda} = prod over i > 0 with m_i(lambda) = m_i(mu) + 1 of (1 - t^{m_i(lambda)})`.
///
/// Requires `lambda ≺ mu`.
pub fn psi_coeff(mu: &Partition, lambda: &Partition, t: f64) -> Result<f64, PartitionError> {
    require_interlacing(lambda, mu)?;
    let mm = mu.multiplicities();
    let mut out = 1.0;
    for (&i, &ml) in lambda.multiplicities().iter() {
        if ml == mm.get(&i).copied().unwrap_or(0) + 1 {
            out *= 1.0 - t.powi(ml as i32);
        }
    }
    Ok(out)
}

/// `phi_{mu/lambda} = prod over i > 0 with m_i(mu) = m_i(lambda) + 1 of (1 - t^{m_i(mu)})`.
///
/// Requires `lambda ≺ mu`.
pub fn phi_coeff(mu: &Partition, lambda: &Partition, t: f64) -> Result<f64, PartitionError> {
    require_interlacing(lambda, mu)?;
    let ml = lambda.multiplicities();
    let mut out = 1.0;
    for (&i, &mm) in mu.multiplicities().iter() {
        if mm == ml.get(&i).copied().unwrap_or(0) + 1 {
            out *= 1.0 - t.powi(mm as i32);
        }
    }
    Ok(out)
}

/// `(t; t)_n = prod_{j=1}^{n} (1 - t^j)`, with the infinite product truncated
/// once `t^j` drops below the double-precision floor.
pub fn t_pochhammer(t: f64, n: Rows) -> f64 {
    let mut out = 1.0;
    let mut tj = t;
    match n {
        Rows::Finite(n) => {
            for _ in 0..n {
                out *= 1.0 - tj;
                tj *= t;
            }
        }
        Rows::Infinite => {
            while tj.abs() >= POCHHAMMER_TRUNCATION {
                out *= 1.0 - tj;
                tj *= t;
            }
        }
    }
    out
}

/// `v_lambda(t)` normalization of the symmetrization formula in `n` variables
/// (the zero parts count with multiplicity `n - len(lambda)`).
fn v_norm(lambda: &Partition, n: usize, t: f64) -> f64 {
    let mut out = pochhammer_over_one_minus(t, n - lambda.len());
    for (_, &m) in lambda.multiplicities().iter() {
        out *= pochhammer_over_one_minus(t, m);
    }
    out
}

/// `(t;t)_m / (1-t)^m`.
fn pochhammer_over_one_minus(t: f64, m: usize) -> f64 {
    let mut out = 1.0;
    let mut tj = t;
    for _ in 0..m {
        out *= (1.0 - tj) / (1.0 - t);
        tj *= t;
    }
    out
}

const MONOMIAL_P_MAX_VARS: usize = 8;

/// Brute-force `P_lambda(x_1, ..., x_n; t)` by symmetrizing
/// `x^lambda prod_{i<j} (x_i - t x_j)/(x_i - x_j)` over all `n!` permutations.
///
/// This is the oracle the structured evaluations are tested against; it
/// requires pairwise distinct `x_i` and small `n`.
pub fn monomial_p(lambda: &Partition, x: &[f64], t: f64) -> Result<f64, PartitionError> {
    let n = x.len();
    if n > MONOMIAL_P_MAX_VARS {
        return Err(PartitionError::TooManyVariables {
            max: MONOMIAL_P_MAX_VARS,
            got: n,
        });
    }
    if lambda.len() > n {
        return Err(PartitionError::LengthExceedsRows {
            len: lambda.len(),
            rows: n as u32,
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            if x[i] == x[j] {
                return Err(PartitionError::RepeatedVariable);
            }
        }
    }

    let mut sum = 0.0;
    let mut idx: Vec<usize> = (0..n).collect();
    permute(&mut idx, n, &mut |perm| {
        let mut term = 1.0;
        for (i, &pi) in perm.iter().enumerate() {
            term *= x[pi].powi(lambda.part(i + 1) as i32);
        }
        for i in 0..n {
            for j in i + 1..n {
                term *= (x[perm[i]] - t * x[perm[j]]) / (x[perm[i]] - x[perm[j]]);
            }
        }
        sum += term;
    });
    Ok(sum / v_norm(lambda, n, t))
}

/// Heap's algorithm; calls `f` on every permutation of `idx`.
fn permute(idx: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        f(idx);
        return;
    }
    for i in 0..k {
        permute(idx, k - 1, f);
        if k % 2 == 0 {
            idx.swap(i, k - 1);
        } else {
            idx.swap(0, k - 1);
        }
    }
}

/// Which of the two Hall-Littlewood families a skew evaluation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkewKind {
    P,
    Q,
}

/// Skew `P_{lambda/mu}` or `Q_{lambda/mu}` at the alpha specialization
/// `x = (x_1, ..., x_k)`, by the branching rule: a sum over interlacing chains
/// `mu = kappa^(0) ≺ kappa^(1) ≺ ... ≺ kappa^(k) = lambda`, the `i`-th variable
/// contributing `x_i^{|kappa^(i)| - |kappa^(i-1)|}` times a `psi` (for `P`) or
/// `phi` (for `Q`) coefficient.
///
/// Returns 0 when no chain exists (in particular when `mu` is not contained
/// in `lambda`). Chain enumeration is depth-first and aborts with
/// [`PartitionError::ChainBudgetExceeded`] beyond [`CHAIN_BUDGET`] chains.
pub fn skew_eval_alpha(
    lambda: &Partition,
    mu: &Partition,
    x: &[f64],
    t: f64,
    kind: SkewKind,
) -> Result<f64, PartitionError> {
    if x.is_empty() {
        return Ok(if lambda == mu { 1.0 } else { 0.0 });
    }
    if !mu.contained_in(lambda) {
        return Ok(0.0);
    }
    let mut budget = CHAIN_BUDGET;
    chain_sum(lambda, mu, x, t, kind, &mut budget)
}

fn chain_sum(
    lambda: &Partition,
    kappa: &Partition,
    x: &[f64],
    t: f64,
    kind: SkewKind,
    budget: &mut u64,
) -> Result<f64, PartitionError> {
    let coeff = |outer: &Partition, inner: &Partition| match kind {
        SkewKind::P => psi_coeff(outer, inner, t),
        SkewKind::Q => phi_coeff(outer, inner, t),
    };
    if x.len() == 1 {
        // Last step must land exactly on lambda.
        if !interlaces(kappa, lambda) {
            return Ok(0.0);
        }
        if *budget == 0 {
            return Err(PartitionError::ChainBudgetExceeded);
        }
        *budget -= 1;
        let step = (lambda.size() - kappa.size()) as i32;
        return Ok(coeff(lambda, kappa)? * x[0].powi(step));
    }
    let mut sum = 0.0;
    for nu in successors_within(kappa, lambda) {
        let step = (nu.size() - kappa.size()) as i32;
        let c = coeff(&nu, kappa)? * x[0].powi(step);
        sum += c * chain_sum(lambda, &nu, &x[1..], t, kind, budget)?;
    }
    Ok(sum)
}

/// All `nu` with `kappa ≺ nu` and `nu ⊆ lambda`.
fn successors_within(kappa: &Partition, lambda: &Partition) -> Vec<Partition> {
    // nu_1 in [kappa_1, lambda_1]; nu_i in [kappa_i, min(lambda_i, kappa_{i-1})].
    let max_len = lambda.len();
    let mut out = Vec::new();
    let mut current: Vec<u32> = Vec::new();
    build_successors(kappa, lambda, max_len, &mut current, &mut out);
    out
}

fn build_successors(
    kappa: &Partition,
    lambda: &Partition,
    max_len: usize,
    current: &mut Vec<u32>,
    out: &mut Vec<Partition>,
) {
    let i = current.len() + 1;
    if i > max_len {
        out.push(Partition {
            parts: {
                let mut p = current.clone();
                while p.last() == Some(&0) {
                    p.pop();
                }
                p
            },
        });
        return;
    }
    let lo = kappa.part(i);
    let hi = if i == 1 {
        lambda.part(1)
    } else {
        lambda.part(i).min(kappa.part(i - 1))
    };
    if lo > hi {
        return;
    }
    for v in lo..=hi {
        current.push(v);
        build_successors(kappa, lambda, max_len, current, out);
        current.pop();
    }
}

/// Principal specialization
/// `P_lambda(u, ut, ..., ut^{n-1}; t) = u^{|lambda|} t^{n(lambda)} (t;t)_n /
/// ((t;t)_{n - len} prod_i (t;t)_{m_i})`.
///
/// For `n = infinity` the two length-dependent Pochhammer factors cancel and
/// the truncated infinite products are used.
pub fn principal_p(
    lambda: &Partition,
    u: f64,
    n: Rows,
    t: f64,
) -> Result<f64, PartitionError> {
    if !n.admits_length(lambda.len()) {
        let Rows::Finite(rows) = n else { unreachable!() };
        return Err(PartitionError::LengthExceedsRows {
            len: lambda.len(),
            rows,
        });
    }
    let num = t_pochhammer(t, n);
    let den_len = match n {
        Rows::Finite(rows) => t_pochhammer(t, Rows::Finite(rows - lambda.len() as u32)),
        Rows::Infinite => t_pochhammer(t, Rows::Infinite),
    };
    let mut den = den_len;
    for (_, &m) in lambda.multiplicities().iter() {
        den *= t_pochhammer(t, Rows::Finite(m as u32));
    }
    Ok(u.powi(lambda.size() as i32) * t.powf(lambda.n_stat() as f64) * num / den)
}

/// Skew `Q_{nu/mu}` under the Plancherel specialization `gamma(tau)`:
///
/// `(tau/(1-t))^m / m! * sum over one-box chains mu ≺ ... ≺ nu of prod phi`,
/// with `m = |nu| - |mu|`. Returns 0 unless `mu ⊆ nu`.
pub fn planch_skew_q(nu: &Partition, mu: &Partition, tau: f64, t: f64) -> f64 {
    if !mu.contained_in(nu) {
        return 0.0;
    }
    let m = (nu.size() - mu.size()) as u32;
    if m == 0 {
        return 1.0;
    }
    let phi_sum = one_box_phi_sum(nu, mu, t);
    let mut factorial = 1.0;
    for j in 1..=m {
        factorial *= j as f64;
    }
    (tau / (1.0 - t)).powi(m as i32) / factorial * phi_sum
}

fn one_box_phi_sum(nu: &Partition, kappa: &Partition, t: f64) -> f64 {
    if kappa == nu {
        return 1.0;
    }
    let mut sum = 0.0;
    for next in kappa.one_box_additions(Rows::Infinite, Some(nu)) {
        let phi = phi_coeff(&next, kappa, t).expect("one-box additions interlace");
        sum += phi * one_box_phi_sum(nu, &next, t);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(parts: &[u32]) -> Partition {
        Partition::new(parts.to_vec()).unwrap()
    }

    #[test]
    fn partition_basics() {
        let l = p(&[3, 1, 1]);
        assert_eq!(l.size(), 5);
        assert_eq!(l.len(), 3);
        assert_eq!(l.n_stat(), 3); // 0*3 + 1*1 + 2*1
        assert_eq!(l.multiplicity(1), 2);
        assert_eq!(l.conjugate(), p(&[3, 1, 1]));
        assert_eq!(p(&[2, 1]).conjugate(), p(&[2, 1]));
        assert_eq!(p(&[4, 2, 1]).conjugate(), p(&[3, 2, 1, 1]));
        assert!(Partition::new(vec![1, 2]).is_err());
        assert!(Partition::new(vec![2, 0, 1]).is_err());
        // trailing zeros normalize
        assert_eq!(Partition::new(vec![2, 1, 0, 0]).unwrap(), p(&[2, 1]));
    }

    #[test]
    fn serialization_round_trip() {
        assert_eq!(p(&[3, 1, 1]).to_string(), "3,1,1");
        assert_eq!(Partition::empty().to_string(), "");
        assert_eq!("3,1,1".parse::<Partition>().unwrap(), p(&[3, 1, 1]));
        assert_eq!("".parse::<Partition>().unwrap(), Partition::empty());
        assert!("1,3".parse::<Partition>().is_err());
    }

    #[test]
    fn interlacing_examples() {
        assert!(interlaces(&Partition::empty(), &Partition::empty()));
        assert!(interlaces(&p(&[1]), &p(&[2, 1])));
        assert!(!interlaces(&p(&[2]), &p(&[1, 1])));
        assert!(interlaces(&p(&[2]), &p(&[2, 1])));
        assert!(!interlaces(&p(&[1, 1]), &p(&[2])));
    }

    #[test]
    fn psi_phi_examples() {
        let t = 0.37;
        // psi_{(1,1)/(1)} = 1: no value has m_i(lambda) = m_i(mu) + 1.
        assert_relative_eq!(psi_coeff(&p(&[1, 1]), &p(&[1]), t).unwrap(), 1.0);
        // psi_{(2,1)/(1,1)} = 1 - t^2: fires at i = 1 with m_1(lambda) = 2.
        assert_relative_eq!(
            psi_coeff(&p(&[2, 1]), &p(&[1, 1]), t).unwrap(),
            1.0 - t * t
        );
        // phi_{(1)/empty} = 1 - t.
        assert_relative_eq!(
            phi_coeff(&p(&[1]), &Partition::empty(), t).unwrap(),
            1.0 - t
        );
        assert!(psi_coeff(&p(&[1, 1]), &p(&[2]), t).is_err());
    }

    #[test]
    fn monomial_p_examples() {
        let t = 0.5;
        assert_relative_eq!(
            monomial_p(&p(&[1]), &[1.0, t], t).unwrap(),
            1.0 + t,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            monomial_p(&Partition::empty(), &[0.3, 0.7, 1.9], t).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_eq!(
            monomial_p(&p(&[1]), &[0.5, 0.5], t),
            Err(PartitionError::RepeatedVariable)
        );
    }

    #[test]
    fn skew_eval_examples() {
        let t = 0.5;
        // Q_{(1)/empty}(x1) = (1-t) x1.
        assert_relative_eq!(
            skew_eval_alpha(&p(&[1]), &Partition::empty(), &[0.4], t, SkewKind::Q).unwrap(),
            (1.0 - t) * 0.4
        );
        // P_{lambda/lambda} = 1.
        assert_relative_eq!(
            skew_eval_alpha(&p(&[3, 1]), &p(&[3, 1]), &[0.4, 0.9], t, SkewKind::P).unwrap(),
            1.0
        );
        // P_{(1)}(x1, x2) = x1 + x2.
        assert_relative_eq!(
            skew_eval_alpha(&p(&[1]), &Partition::empty(), &[0.4, 0.9], t, SkewKind::P).unwrap(),
            1.3,
            max_relative = 1e-12
        );
        // No chain when mu is not contained in lambda.
        assert_eq!(
            skew_eval_alpha(&p(&[1]), &p(&[2]), &[0.4], t, SkewKind::P).unwrap(),
            0.0
        );
    }

    #[test]
    fn branching_matches_monomial_oracle() {
        // P_lambda(x; t) = skew_eval_alpha(lambda, empty, x, t, P) on random draws.
        let mut state = 0x243F6A8885A308D3u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let shapes: Vec<Partition> = partitions_up_to(4, Rows::Infinite)
            .into_iter()
            .filter(|l| l.len() <= 3)
            .collect();
        for trial in 0..100 {
            let t = 0.05 + 0.9 * next();
            let n = 1 + (trial % 3);
            let x: Vec<f64> = (0..n).map(|_| 0.1 + next()).collect();
            let distinct = x
                .iter()
                .enumerate()
                .all(|(i, a)| x[i + 1..].iter().all(|b| a != b));
            if !distinct {
                continue;
            }
            for l in shapes.iter().filter(|l| l.len() <= n) {
                let brute = monomial_p(l, &x, t).unwrap();
                let branch =
                    skew_eval_alpha(l, &Partition::empty(), &x, t, SkewKind::P).unwrap();
                assert_relative_eq!(brute, branch, max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn q_is_p_times_multiplicity_factor() {
        // Q_lambda = prod_i (t;t)_{m_i} P_lambda.
        let t = 0.6;
        let x = [0.3, 0.8, 1.1];
        for l in partitions_up_to(4, Rows::Finite(3)) {
            let q = skew_eval_alpha(&l, &Partition::empty(), &x, t, SkewKind::Q).unwrap();
            let p_val = skew_eval_alpha(&l, &Partition::empty(), &x, t, SkewKind::P).unwrap();
            let mut b = 1.0;
            for (_, &m) in l.multiplicities().iter() {
                b *= t_pochhammer(t, Rows::Finite(m as u32));
            }
            assert_relative_eq!(q, b * p_val, max_relative = 1e-11, epsilon = 1e-13);
        }
    }

    #[test]
    fn principal_specialization_examples() {
        let t = 0.5;
        // (1-t^2)/(1-t) = 1 + t.
        assert_relative_eq!(
            principal_p(&p(&[1]), 1.0, Rows::Finite(2), t).unwrap(),
            1.0 + t
        );
        assert_relative_eq!(
            principal_p(&Partition::empty(), 1.0, Rows::Finite(5), t).unwrap(),
            1.0
        );
        assert_relative_eq!(
            principal_p(&p(&[1]), 1.0, Rows::Infinite, t).unwrap(),
            1.0 / (1.0 - t),
            max_relative = 1e-13
        );
        assert!(principal_p(&p(&[1, 1]), 1.0, Rows::Finite(1), t).is_err());
    }

    #[test]
    fn principal_consistency_with_monomial() {
        // P_lambda(1, t, ..., t^{n-1}) vs the brute-force oracle on a slightly
        // perturbed geometric progression (monomial_p needs distinct x_i).
        for l in partitions_up_to(4, Rows::Infinite) {
            for n in l.len().max(1)..=4 {
                for &t in &[0.3f64, 0.55, 0.8] {
                    let x: Vec<f64> = (0..n)
                        .map(|i| t.powi(i as i32) + (i as f64 + 1.0) * 3e-10)
                        .collect();
                    let brute = monomial_p(&l, &x, t).unwrap();
                    let closed = principal_p(&l, 1.0, Rows::Finite(n as u32), t).unwrap();
                    assert_relative_eq!(brute, closed, max_relative = 1e-6, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn planch_skew_q_examples() {
        let t = 0.4;
        let tau = 0.7;
        assert_relative_eq!(
            planch_skew_q(&p(&[1]), &Partition::empty(), tau, t),
            tau
        );
        assert_relative_eq!(planch_skew_q(&p(&[2, 1]), &p(&[2, 1]), tau, t), 1.0);
        assert_eq!(planch_skew_q(&p(&[1]), &p(&[2]), tau, t), 0.0);
        // (1,1)/empty: tau^2 (1+t) / 2, from the single chain through (1).
        assert_relative_eq!(
            planch_skew_q(&p(&[1, 1]), &Partition::empty(), tau, t),
            tau * tau * (1.0 + t) / 2.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn chain_budget_is_enforced() {
        // 24 variables on a size-6 shape blows past 1e6 chains.
        let x = vec![0.01; 24];
        let err = skew_eval_alpha(
            &p(&[2, 2, 1, 1]),
            &Partition::empty(),
            &x,
            0.5,
            SkewKind::P,
        );
        assert_eq!(err, Err(PartitionError::ChainBudgetExceeded));
    }

    #[test]
    fn hl_params_validation() {
        assert!(HlParams::new(0.5).is_ok());
        assert!(HlParams::new(0.0).is_err());
        assert!(HlParams::new(1.0).is_err());
        assert!((HlParams::new(0.5).unwrap().epsilon() - 0.5f64.ln().abs()).abs() < 1e-15);
    }

    #[test]
    fn partitions_enumeration_counts() {
        // Partitions of size <= 6 with at most 3 rows: 1+1+2+3+4+5+7 = 23.
        assert_eq!(partitions_up_to(6, Rows::Finite(3)).len(), 23);
        // All partitions of size <= 8: cumulative p(n) = 1+1+2+3+5+7+11+15+22 = 67.
        assert_eq!(partitions_up_to(8, Rows::Infinite).len(), 67);
    }
}
