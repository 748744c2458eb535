//! Numerical evaluation of the moment and covariance contour integrals by
//! trapezoidal quadrature on nested circles.
//!
//! All target integrands are analytic in an annulus around each circle, so
//! the N-point trapezoid rule converges geometrically; the error proxy is the
//! Richardson estimate `|I_N - I_{N/2}|`. Every operation evaluates at
//! `N`, `N/2` and `N/4` nodes, so the caller can see whether the error
//! estimate dropped by the expected factor on the last doubling.
//!
//! Conventions: one factor of `(2 pi i)^{-1}` per variable is built into the
//! quadrature rule (`(1/N) sum_j f(z_j) z_j` per circle), contours are
//! counterclockwise, and prefactors such as `(-1)^{C(r,2)}/r!` live in the
//! individual operations.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::factorial_f64;
use crate::oracles::{d_exact, rational_to_f64};

pub const DEFAULT_NODES: usize = 64;

/// Richardson estimates below `floor * max(1, |value|)` count as converged
/// regardless of the drop ratio (the quadrature has bottomed out at rounding
/// noise, which no longer decays on refinement).
const CONVERGENCE_FLOOR: f64 = 1e-12;

/// Required decay of the Richardson estimate per node doubling.
const CONVERGENCE_RATIO: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum ContourError {
    #[error("node count must be a power of two >= 16, got {0}")]
    BadNodeCount(usize),
    #[error("invalid contour nesting: {0}")]
    InvalidNesting(String),
    #[error("tensor grids are capped at {max} variables, got {got}")]
    TooManyVariables { max: usize, got: usize },
    #[error("the covariance formula requires r >= s >= 1, got r={r}, s={s}")]
    BadCovOrder { r: u32, s: u32 },
    #[error("{0}")]
    Invalid(String),
}

/// Radii for the circular contours of each variable group plus the per-circle
/// node count.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSpec {
    pub group_radii: Vec<f64>,
    pub nodes: usize,
}

impl ContourSpec {
    pub fn new(group_radii: Vec<f64>, nodes: usize) -> Result<Self, ContourError> {
        if nodes < 16 || !nodes.is_power_of_two() {
            return Err(ContourError::BadNodeCount(nodes));
        }
        if group_radii.iter().any(|&r| !(r > 0.0)) {
            return Err(ContourError::InvalidNesting(
                "all radii must be positive".into(),
            ));
        }
        Ok(ContourSpec { group_radii, nodes })
    }

    /// Default contours for the finite-time moment formula: outermost radius
    /// `0.9 min(1, 0.99/t)`, shrunk for large `tau` so the `e^{tau z}` factor
    /// stays resolvable at the default node count, with strict nesting factor
    /// `0.5 t` between groups.
    pub fn t_moment_default(m: usize, t: f64, tau: f64) -> Self {
        let scale = if tau > 8.0 { 8.0 / tau } else { 1.0 };
        let r1 = 0.9 * (0.99 / t).min(1.0) * scale;
        let radii = (0..m).map(|i| r1 * (0.5 * t).powi(i as i32)).collect();
        ContourSpec {
            group_radii: radii,
            nodes: DEFAULT_NODES,
        }
    }

    /// Default contours for the fixed-t limit formula (no `1/t` bound here).
    pub fn fixed_t_default(m: usize, t: f64) -> Self {
        let radii = (0..m).map(|i| 2.0 * (0.5 * t).powi(i as i32)).collect();
        ContourSpec {
            group_radii: radii,
            nodes: DEFAULT_NODES,
        }
    }

    /// Default `(R_z, R_w)` for the finite-tau covariance formula, scaled
    /// down at large `tau`.
    pub fn cov_default(tau: f64) -> Self {
        let scale = if tau > 8.0 { 8.0 / tau } else { 1.0 };
        ContourSpec {
            group_radii: vec![scale, 0.5 * scale],
            nodes: DEFAULT_NODES,
        }
    }

    /// Default `(R_z, R_w)` for the `D(r,s)` double integral.
    pub fn d_default() -> Self {
        ContourSpec {
            group_radii: vec![2.0, 1.0],
            nodes: DEFAULT_NODES,
        }
    }
}

/// Outcome of a contour evaluation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    /// `|Im|` relative to `max(1, |value|)`; all target integrals are real.
    pub imag_residual: f64,
    pub nodes: usize,
    /// `|I_N - I_{N/2}|`.
    pub richardson_error: f64,
    /// `|I_{N/2} - I_{N/4}|`, for judging the decay of the estimate.
    pub prev_richardson_error: f64,
    /// Whether the Richardson estimate dropped by at least 10x on the last
    /// node doubling, or has already reached rounding level.
    pub converged: bool,
}

fn result_from_levels(levels: [Complex64; 3], nodes: usize) -> QuadratureResult {
    let [full, half, quarter] = levels;
    let value = full.re;
    let scale = value.abs().max(1.0);
    let richardson_error = (full - half).norm();
    let prev_richardson_error = (half - quarter).norm();
    let converged = richardson_error <= CONVERGENCE_FLOOR * scale
        || richardson_error * CONVERGENCE_RATIO <= prev_richardson_error;
    QuadratureResult {
        value,
        imag_residual: full.im.abs() / scale,
        nodes,
        richardson_error,
        prev_richardson_error,
        converged,
    }
}

const MAX_TENSOR_VARS: usize = 5;

/// `prod_v (2 pi i)^{-1} oint f dz_v` over circles of the given radii, with
/// `n` nodes per circle.
fn tensor_integral<F>(f: &F, radii: &[f64], n: usize) -> Complex64
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    let d = radii.len();
    if d == 0 {
        return f(&[]);
    }
    let nodes: Vec<Vec<Complex64>> = radii
        .iter()
        .map(|&r| {
            (0..n)
                .map(|j| {
                    Complex64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64)
                })
                .collect()
        })
        .collect();
    let partials: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|j0| {
            let mut z = vec![Complex64::new(0.0, 0.0); d];
            let mut idx = vec![0usize; d];
            z[0] = nodes[0][j0];
            let mut sum = Complex64::new(0.0, 0.0);
            loop {
                for v in 1..d {
                    z[v] = nodes[v][idx[v]];
                }
                let weight: Complex64 = z.iter().product();
                sum += f(&z) * weight;
                let mut v = 1;
                while v < d {
                    idx[v] += 1;
                    if idx[v] < n {
                        break;
                    }
                    idx[v] = 0;
                    v += 1;
                }
                if v >= d {
                    break;
                }
            }
            sum
        })
        .collect();
    partials.into_iter().sum::<Complex64>() / (n as f64).powi(d as i32)
}

fn tensor_levels<F>(f: &F, radii: &[f64], nodes: usize) -> [Complex64; 3]
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    [
        tensor_integral(f, radii, nodes),
        tensor_integral(f, radii, nodes / 2),
        tensor_integral(f, radii, nodes / 4),
    ]
}

/// Tensorized contour integral of `f` with one radius per variable. Returns
/// the value at the full node count together with the Richardson error
/// estimates from the two coarser grids.
pub fn circle_integral<F>(
    f: &F,
    radii: &[f64],
    nodes: usize,
) -> Result<QuadratureResult, ContourError>
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    if nodes < 16 || !nodes.is_power_of_two() {
        return Err(ContourError::BadNodeCount(nodes));
    }
    if radii.len() > MAX_TENSOR_VARS {
        return Err(ContourError::TooManyVariables {
            max: MAX_TENSOR_VARS,
            got: radii.len(),
        });
    }
    Ok(result_from_levels(tensor_levels(f, radii, nodes), nodes))
}

fn vandermonde_sq(z: &[Complex64]) -> Complex64 {
    let mut out = Complex64::new(1.0, 0.0);
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let d = z[i] - z[j];
            out *= d * d;
        }
    }
    out
}

/// `(-1)^{binom(r,2)}`.
fn sign_binom2(r: u32) -> f64 {
    if (r * r.saturating_sub(1) / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn expand_group_radii(r_list: &[u32], group_radii: &[f64]) -> Vec<f64> {
    r_list
        .iter()
        .zip(group_radii)
        .flat_map(|(&r, &rad)| std::iter::repeat(rad).take(r as usize))
        .collect()
}

fn check_group_count(r_list: &[u32], spec: &ContourSpec) -> Result<(), ContourError> {
    if r_list.is_empty() || r_list.iter().any(|&r| r == 0) {
        return Err(ContourError::Invalid(
            "group sizes must be positive and nonempty".into(),
        ));
    }
    if spec.group_radii.len() != r_list.len() {
        return Err(ContourError::Invalid(format!(
            "spec has {} radii but {} groups were requested",
            spec.group_radii.len(),
            r_list.len()
        )));
    }
    Ok(())
}

fn group_bounds(r_list: &[u32]) -> Vec<usize> {
    let mut bounds = vec![0usize];
    for &r in r_list {
        bounds.push(bounds.last().unwrap() + r as usize);
    }
    bounds
}

/// Cross-group factor `prod (1 - z_b/z_a) / (1 - t^{-1} z_b/z_a)` over all
/// variable pairs with group(a) < group(b).
fn cross_group_factor(z: &[Complex64], bounds: &[usize], t: f64) -> Complex64 {
    let mut out = Complex64::new(1.0, 0.0);
    let m = bounds.len() - 1;
    for a in 0..m {
        for b in a + 1..m {
            for i in bounds[a]..bounds[a + 1] {
                for j in bounds[b]..bounds[b + 1] {
                    let ratio = z[j] / z[i];
                    out *= (1.0 - ratio) / (1.0 - ratio / t);
                }
            }
        }
    }
    out
}

/// Joint t-moment `E[t^{-sum_m sum_{j<=r_m} lambda'_j(tau)}]` by the
/// finite-time contour formula: per group `m` the integrand carries
/// `Delta^2 prod_s e^{tau z}(1 + 1/(t z)) z^{-r_m}`, groups interact through
/// [`cross_group_factor`], and the contours satisfy `|z_beta| < t |z_alpha|`
/// for `alpha < beta` with every radius below `1/t`.
pub fn t_moment_integral(
    r_list: &[u32],
    t: f64,
    tau: f64,
    spec: &ContourSpec,
) -> Result<QuadratureResult, ContourError> {
    check_group_count(r_list, spec)?;
    let total: u32 = r_list.iter().sum();
    if total as usize > 4 {
        return Err(ContourError::TooManyVariables {
            max: 4,
            got: total as usize,
        });
    }
    for (i, &r) in spec.group_radii.iter().enumerate() {
        if r >= 1.0 / t {
            return Err(ContourError::InvalidNesting(format!(
                "group {} radius {} violates R < 1/t = {}",
                i + 1,
                r,
                1.0 / t
            )));
        }
        if i + 1 < spec.group_radii.len() && spec.group_radii[i + 1] >= t * r {
            return Err(ContourError::InvalidNesting(format!(
                "group {} radius {} violates R < t * {}",
                i + 2,
                spec.group_radii[i + 1],
                r
            )));
        }
    }
    let bounds = group_bounds(r_list);
    let radii = expand_group_radii(r_list, &spec.group_radii);
    let prefactor: f64 = r_list
        .iter()
        .map(|&r| sign_binom2(r) / factorial_f64(r))
        .product();
    let groups = r_list.to_vec();
    let f = move |z: &[Complex64]| {
        let mut out = cross_group_factor(z, &bounds, t);
        for (m, &r) in groups.iter().enumerate() {
            let zg = &z[bounds[m]..bounds[m + 1]];
            out *= vandermonde_sq(zg);
            for &zi in zg {
                out *= (tau * zi).exp() * (1.0 + 1.0 / (t * zi)) * zi.powi(-(r as i32));
            }
        }
        out
    };
    let mut levels = tensor_levels(&f, &radii, spec.nodes);
    for l in &mut levels {
        *l *= prefactor;
    }
    Ok(result_from_levels(levels, spec.nodes))
}

/// The `tau -> infinity` limit of the shifted joint t-moments: per group the
/// integrand is `Delta^2 prod_s e^w w^{-(r_m+1)}` with prefactor
/// `(-1)^{binom(r_m,2)}/(r_m! t^{r_m})` and the same cross-group factor.
pub fn fixed_t_limit_integral(
    r_list: &[u32],
    t: f64,
    spec: &ContourSpec,
) -> Result<QuadratureResult, ContourError> {
    check_group_count(r_list, spec)?;
    let total: u32 = r_list.iter().sum();
    if total as usize > 4 {
        return Err(ContourError::TooManyVariables {
            max: 4,
            got: total as usize,
        });
    }
    for i in 0..spec.group_radii.len().saturating_sub(1) {
        if spec.group_radii[i + 1] >= t * spec.group_radii[i] {
            return Err(ContourError::InvalidNesting(format!(
                "group {} radius {} violates R < t * {}",
                i + 2,
                spec.group_radii[i + 1],
                spec.group_radii[i]
            )));
        }
    }
    let bounds = group_bounds(r_list);
    let radii = expand_group_radii(r_list, &spec.group_radii);
    let prefactor: f64 = r_list
        .iter()
        .map(|&r| sign_binom2(r) / (factorial_f64(r) * t.powi(r as i32)))
        .product();
    let groups = r_list.to_vec();
    let f = move |w: &[Complex64]| {
        let mut out = cross_group_factor(w, &bounds, t);
        for (m, &r) in groups.iter().enumerate() {
            let wg = &w[bounds[m]..bounds[m + 1]];
            out *= vandermonde_sq(wg);
            for &wi in wg {
                out *= wi.exp() * wi.powi(-(r as i32) - 1);
            }
        }
        out
    };
    let mut levels = tensor_levels(&f, &radii, spec.nodes);
    for l in &mut levels {
        *l *= prefactor;
    }
    Ok(result_from_levels(levels, spec.nodes))
}

/// Weight of the fluctuation covariance formula:
/// `F_tau(z_1..z_k) = Delta^2 prod e^{tau z}(1+z) z^{-(k+1)}`.
fn cov_weight(z: &[Complex64], tau: f64) -> Complex64 {
    let k = z.len() as i32;
    let mut out = vandermonde_sq(z);
    for &zi in z {
        out *= (tau * zi).exp() * (1.0 + zi) * zi.powi(-k - 1);
    }
    out
}

/// The normalized covariance integral without the `r >= s` order check; the
/// differencing in [`cov_x`] needs it at index pairs like `(r-1, r)`.
fn cov_partial_sums_unchecked(
    r: u32,
    s: u32,
    tau: f64,
    spec: &ContourSpec,
) -> Result<[Complex64; 3], ContourError> {
    if spec.group_radii.len() != 2 {
        return Err(ContourError::Invalid(
            "covariance spec needs exactly (R_z, R_w)".into(),
        ));
    }
    let (rz, rw) = (spec.group_radii[0], spec.group_radii[1]);
    if rw >= rz {
        return Err(ContourError::InvalidNesting(format!(
            "inner radius {rw} must be strictly below outer radius {rz}"
        )));
    }
    if r == 0 || s == 0 {
        return Ok([Complex64::new(0.0, 0.0); 3]);
    }
    let d = (r + s) as usize;
    if d > MAX_TENSOR_VARS {
        return Err(ContourError::TooManyVariables {
            max: MAX_TENSOR_VARS,
            got: d,
        });
    }
    let mut radii = vec![rz; r as usize];
    radii.extend(vec![rw; s as usize]);
    let ru = r as usize;
    // By symmetry of the weight, the double sum over coupling terms collapses
    // to r s w_1/(z_1 - w_1).
    let num = move |z: &[Complex64]| {
        let coupling = (r as f64) * (s as f64) * z[ru] / (z[0] - z[ru]);
        coupling * cov_weight(&z[..ru], tau) * cov_weight(&z[ru..], tau)
    };
    let den = move |z: &[Complex64]| cov_weight(z, tau);
    let num_levels = tensor_levels(&num, &radii, spec.nodes);
    let den_r_levels = tensor_levels(&den, &radii[..ru], spec.nodes);
    let den_s_levels = tensor_levels(&den, &radii[ru..], spec.nodes);
    Ok([
        num_levels[0] / (den_r_levels[0] * den_s_levels[0]),
        num_levels[1] / (den_r_levels[1] * den_s_levels[1]),
        num_levels[2] / (den_r_levels[2] * den_s_levels[2]),
    ])
}

/// `Cov(X^(1)+...+X^(r), X^(1)+...+X^(s))` at finite `tau` (valid for
/// `r >= s >= 1` only).
pub fn finite_tau_cov(
    r: u32,
    s: u32,
    tau: f64,
    spec: &ContourSpec,
) -> Result<QuadratureResult, ContourError> {
    if r < s || s == 0 {
        return Err(ContourError::BadCovOrder { r, s });
    }
    let levels = cov_partial_sums_unchecked(r, s, tau, spec)?;
    Ok(result_from_levels(levels, spec.nodes))
}

/// `Cov(X^(r), X^(s))` by differencing four partial-sum covariances.
pub fn cov_x(
    r: u32,
    s: u32,
    tau: f64,
    spec: &ContourSpec,
) -> Result<QuadratureResult, ContourError> {
    if r < s || s == 0 {
        return Err(ContourError::BadCovOrder { r, s });
    }
    let mut levels = [Complex64::new(0.0, 0.0); 3];
    for (dr, ds, sign) in [(0u32, 0u32, 1.0), (1, 0, -1.0), (0, 1, -1.0), (1, 1, 1.0)] {
        if r <= dr || s <= ds {
            continue; // C(0, .) = C(., 0) = 0
        }
        let part = cov_partial_sums_unchecked(r - dr, s - ds, tau, spec)?;
        for (l, p) in levels.iter_mut().zip(part) {
            *l += sign * p;
        }
    }
    Ok(result_from_levels(levels, spec.nodes))
}

/// `D(r,s)` by double-contour quadrature plus the comparison against the
/// exact rational value.
#[derive(Debug, Clone)]
pub struct DQuadrature {
    pub quad: QuadratureResult,
    pub exact: f64,
    /// Set when quadrature and the exact residue value disagree beyond 1e-8.
    pub disagrees_with_exact: bool,
}

/// Numerical `D(r,s)`: `-(2 pi i)^{-2} oint oint w/(z-w) r! s! e^{z+w}
/// (1-z/r)(1-w/s) z^{-r-1} w^{-s-1} dz dw` with the `w`-circle inside the
/// `z`-circle (the `1/(4 pi^2)` prefactor of the definition equals
/// `-(2 pi i)^{-2}` for counterclockwise contours). Small indices only; the
/// exact oracle covers the rest.
pub fn d_quadrature(r: u32, s: u32, spec: &ContourSpec) -> Result<DQuadrature, ContourError> {
    if r == 0 || s == 0 || r > 20 || s > 20 {
        return Err(ContourError::Invalid(format!(
            "d_quadrature supports 1 <= r, s <= 20, got ({r},{s})"
        )));
    }
    if spec.group_radii.len() != 2 || spec.group_radii[1] >= spec.group_radii[0] {
        return Err(ContourError::InvalidNesting(
            "need (R_z, R_w) with R_w < R_z".into(),
        ));
    }
    let pref = factorial_f64(r) * factorial_f64(s);
    let (rf, sf) = (r as f64, s as f64);
    let f = move |v: &[Complex64]| {
        let (z, w) = (v[0], v[1]);
        w / (z - w)
            * pref
            * (z + w).exp()
            * (1.0 - z / rf)
            * (1.0 - w / sf)
            * z.powi(-(r as i32) - 1)
            * w.powi(-(s as i32) - 1)
    };
    let mut levels = tensor_levels(&f, &spec.group_radii, spec.nodes);
    for l in &mut levels {
        *l = -*l;
    }
    let quad = result_from_levels(levels, spec.nodes);
    let exact = rational_to_f64(&d_exact(r, s));
    let disagrees = (quad.value - exact).abs() > 1e-8 * exact.abs().max(1.0);
    Ok(DQuadrature {
        quad,
        exact,
        disagrees_with_exact: disagrees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn residue_basics() {
        // e^z/z around the origin: residue 1.
        let r = circle_integral(&|z: &[Complex64]| z[0].exp() / z[0], &[1.0], 64).unwrap();
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-12);
        assert!(r.imag_residual < 1e-12);
        assert!(r.converged);
        // 1/z^2: no residue.
        let r = circle_integral(&|z: &[Complex64]| 1.0 / (z[0] * z[0]), &[1.0], 64).unwrap();
        assert!(r.value.abs() < 1e-14);
        // e^{tau z}(1 + z/t)/z^2 at t=0.5, tau=1: residue 1 + tau/t = 3.
        let (t, tau) = (0.5, 1.0);
        let r = circle_integral(
            &|z: &[Complex64]| (tau * z[0]).exp() * (1.0 + z[0] / t) / (z[0] * z[0]),
            &[1.0],
            64,
        )
        .unwrap();
        assert_relative_eq!(r.value, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn t_moment_single_group_matches_closed_form() {
        // E[t^{-sum_{j<=r} lambda'_j(tau)}] = sum_{j=0}^r tau^j t^{-j} / j!.
        for &t in &[0.3, 0.5, 0.7] {
            for &tau in &[0.5, 1.0, 2.0] {
                for r in 1..=3u32 {
                    let spec = ContourSpec::t_moment_default(1, t, tau);
                    let got = t_moment_integral(&[r], t, tau, &spec).unwrap();
                    let want: f64 = (0..=r)
                        .map(|j| tau.powi(j as i32) / (t.powi(j as i32) * factorial_f64(j)))
                        .sum();
                    assert_relative_eq!(got.value, want, max_relative = 1e-8);
                    assert!(got.imag_residual < 1e-8);
                    assert!(got.converged, "not converged at t={t}, tau={tau}, r={r}");
                }
            }
        }
    }

    #[test]
    fn t_moment_two_groups_closed_form() {
        // M=2, r=(1,1): (1+tau/t)^2 + (1-t)/t^2 (tau + tau^2/(2t)) by residue
        // expansion of the cross factor; 13 at t=0.5, tau=1.
        let (t, tau) = (0.5, 1.0);
        let spec = ContourSpec::t_moment_default(2, t, tau);
        let got = t_moment_integral(&[1, 1], t, tau, &spec).unwrap();
        let want = (1.0 + tau / t).powi(2) + (1.0 - t) / (t * t) * (tau + tau * tau / (2.0 * t));
        assert_relative_eq!(got.value, want, max_relative = 1e-8);
        assert_relative_eq!(got.value, 13.0, max_relative = 1e-8);
    }

    #[test]
    fn t_moment_rejects_bad_contours() {
        let spec = ContourSpec::new(vec![0.9, 0.9], 64).unwrap();
        assert!(matches!(
            t_moment_integral(&[1, 1], 0.5, 1.0, &spec),
            Err(ContourError::InvalidNesting(_))
        ));
        let spec = ContourSpec::new(vec![2.5], 64).unwrap();
        assert!(t_moment_integral(&[1], 0.5, 1.0, &spec).is_err());
        let spec = ContourSpec::t_moment_default(1, 0.5, 1.0);
        assert!(matches!(
            t_moment_integral(&[5], 0.5, 1.0, &spec),
            Err(ContourError::TooManyVariables { .. })
        ));
    }

    #[test]
    fn fixed_t_limit_values() {
        let t = 0.5;
        let spec = ContourSpec::fixed_t_default(1, t);
        let r1 = fixed_t_limit_integral(&[1], t, &spec).unwrap();
        assert_relative_eq!(r1.value, 1.0 / t, max_relative = 1e-10);
        // r=2: 1/(2 t^2).
        let r2 = fixed_t_limit_integral(&[2], t, &spec).unwrap();
        assert_relative_eq!(r2.value, 1.0 / (2.0 * t * t), max_relative = 1e-10);
        // Stability under node doubling.
        let spec128 = ContourSpec::new(spec.group_radii.clone(), 128).unwrap();
        let r2b = fixed_t_limit_integral(&[2], t, &spec128).unwrap();
        assert!((r2.value - r2b.value).abs() < 1e-10);
    }

    #[test]
    fn fixed_t_is_the_large_tau_limit_of_t_moments() {
        // tau^{-r} E[t^{-sum lambda'}] -> limit value. The exact M=1 ratio is
        // 1 + r t/tau + O(tau^{-2}), so the gap decays like 1/tau.
        let t = 0.5;
        for r in 1..=2u32 {
            let lim = fixed_t_limit_integral(&[r], t, &ContourSpec::fixed_t_default(1, t))
                .unwrap()
                .value;
            let mut prev_gap = f64::INFINITY;
            for &tau in &[10.0, 100.0] {
                let spec = ContourSpec::t_moment_default(1, t, tau);
                let moment = t_moment_integral(&[r], t, tau, &spec).unwrap().value;
                let ratio = moment / tau.powi(r as i32) / lim;
                let gap = (ratio - 1.0).abs();
                assert!(
                    (gap - r as f64 * t / tau).abs() < 3.0 / (tau * tau),
                    "unexpected gap {gap} at r={r}, tau={tau}"
                );
                assert!(gap < prev_gap);
                prev_gap = gap;
            }
        }
    }

    #[test]
    fn finite_tau_cov_values() {
        // r=s=1: (tau^2/2 + tau)/(tau+1)^2, so 3/8 at tau=1.
        let spec = ContourSpec::cov_default(1.0);
        let got = finite_tau_cov(1, 1, 1.0, &spec).unwrap();
        assert_relative_eq!(got.value, 0.375, epsilon = 1e-10);
        assert!(got.converged);
        // Large tau approaches D(1,1) = 1/2 like O(1/tau).
        let spec = ContourSpec::cov_default(100.0);
        let got = finite_tau_cov(1, 1, 100.0, &spec).unwrap();
        assert_relative_eq!(got.value, 5100.0 / 10201.0, max_relative = 1e-8);
        assert!((got.value - 0.5).abs() < 0.01 * 0.5);
        // Order enforcement (the formula is not valid for r < s).
        assert!(matches!(
            finite_tau_cov(1, 2, 1.0, &spec),
            Err(ContourError::BadCovOrder { .. })
        ));
    }

    #[test]
    fn cov_x_reduces_to_partial_sums_at_r1() {
        let spec = ContourSpec::cov_default(1.0);
        let direct = finite_tau_cov(1, 1, 1.0, &spec).unwrap().value;
        let diffed = cov_x(1, 1, 1.0, &spec).unwrap().value;
        assert_relative_eq!(direct, diffed, epsilon = 1e-12);
    }

    #[test]
    fn d_quadrature_matches_exact() {
        let spec = ContourSpec::d_default();
        let d11 = d_quadrature(1, 1, &spec).unwrap();
        assert_relative_eq!(d11.quad.value, 0.5, epsilon = 1e-10);
        assert!(!d11.disagrees_with_exact);
        let d21 = d_quadrature(2, 1, &spec).unwrap();
        assert_relative_eq!(d21.quad.value, 1.0 / 6.0, epsilon = 1e-10);
        // D(1,2) - D(2,1) = 1 (note D(1,2) is not a covariance).
        let d12 = d_quadrature(1, 2, &spec).unwrap();
        assert_relative_eq!(d12.quad.value - d21.quad.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn radius_independence() {
        // Results must be invariant under admissible radius perturbations.
        let (t, tau) = (0.5, 1.0);
        let base = ContourSpec::t_moment_default(2, t, tau);
        let v0 = t_moment_integral(&[1, 1], t, tau, &base).unwrap().value;
        for factor in [0.9, 1.1] {
            let radii: Vec<f64> = base.group_radii.iter().map(|r| r * factor).collect();
            let spec = ContourSpec::new(radii, 128).unwrap();
            let v = t_moment_integral(&[1, 1], t, tau, &spec).unwrap().value;
            assert!((v - v0).abs() < 1e-9 * v0.abs().max(1.0));
        }
        let v0 = d_quadrature(2, 2, &ContourSpec::d_default()).unwrap().quad.value;
        for radii in [vec![1.8, 1.1], vec![2.2, 0.9]] {
            let spec = ContourSpec::new(radii, 64).unwrap();
            let v = d_quadrature(2, 2, &spec).unwrap().quad.value;
            assert!((v - v0).abs() < 1e-9);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ContourSpec::new(vec![1.0], 48).is_err());
        assert!(ContourSpec::new(vec![-1.0], 64).is_err());
        assert!(ContourSpec::new(vec![1.0, 0.5], 64).is_ok());
    }
}
