//! Exact rational evaluation of the limiting covariances `D(r,s)`, the two
//! residue identities behind stationarity, and the stationary covariance
//! recursion. Everything here is the ground truth the quadrature, SDE and
//! Monte Carlo layers are checked against.
//!
//! `D(r,s)` is defined by a double contour integral with prefactor
//! `1/(4 pi^2)` and counterclockwise contours, `|w| < |z|`. Since
//! `(2 pi i)^2 = -4 pi^2`, the value equals minus the `z^{-1} w^{-1}` Laurent
//! coefficient of the integrand. Expanding `w/(z-w) = sum_{n>=1} (w/z)^n`
//! terminates after `n = s` terms, so the evaluation is a finite sum of
//! rationals with no truncation error. The sign is pinned by two anchors:
//! `D(1,1) = 1/2` (the stationary variance of `dZ = -Z dT + dW`) and
//! `D(r-1,r) - D(r,r-1) = 1/(r-1) > 0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::numerics::{ldlt_pivots, ln_factorial};

fn big_factorial(n: i64) -> BigInt {
    let mut out = BigInt::one();
    for k in 2..=n {
        out *= k;
    }
    out
}

/// `1/m!` for integer `m`, zero when `m < 0` (the convention that makes the
/// residue sums below terminate).
fn inv_factorial(m: i64) -> BigRational {
    if m < 0 {
        BigRational::zero()
    } else {
        BigRational::new(BigInt::one(), big_factorial(m))
    }
}

/// A Laurent polynomial in one variable with rational coefficients.
#[derive(Debug, Clone, Default)]
struct Laurent {
    coeffs: BTreeMap<i64, BigRational>,
}

impl Laurent {
    fn term(exp: i64, coeff: BigRational) -> Self {
        let mut coeffs = BTreeMap::new();
        if !coeff.is_zero() {
            coeffs.insert(exp, coeff);
        }
        Laurent { coeffs }
    }

    fn add_term(mut self, exp: i64, coeff: BigRational) -> Self {
        if !coeff.is_zero() {
            let entry = self.coeffs.entry(exp).or_insert_with(BigRational::zero);
            *entry += coeff;
            if entry.is_zero() {
                self.coeffs.remove(&exp);
            }
        }
        self
    }
}

/// `z`-side factor of the `D` integrand:
/// `u_r(z) = r! z^{-r-1} - (r-1)! z^{-r}`, i.e. `(r-1)!(r - z) z^{-r-1}`.
fn u_factor(r: i64) -> Laurent {
    let rm1 = BigRational::from(big_factorial(r - 1));
    Laurent::term(-r - 1, BigRational::from(big_factorial(r)))
        .add_term(-r, -rm1)
}

/// The combination `(r-1) u_{r-1}(z)` written as
/// `(r-1)! ((r-1) - z) z^{-r}`, which stays well-defined at `r = 1` (where it
/// degenerates to the constant `-1`) even though `u_0` itself does not exist.
fn boundary_factor(r: i64) -> Laurent {
    let rm1 = BigRational::from(big_factorial(r - 1));
    Laurent::term(-r, rm1.clone() * BigRational::from(BigInt::from(r - 1)))
        .add_term(-r + 1, -rm1)
}

/// Minus the `z^{-1} w^{-1}` coefficient of `w/(z-w) e^{z+w} P(z) Q(w)` under
/// the `|w| < |z|` expansion. Finite: the `n`-sum is cut off by the lowest
/// exponent of `Q`.
fn pair_residue(p: &Laurent, q: &Laurent) -> BigRational {
    // [w^{-1}] e^w Q(w) w^n vanishes once n > -1 - b for every exponent b of Q.
    let n_max = q.coeffs.keys().map(|&b| -b - 1).max().unwrap_or(0);
    let mut total = BigRational::zero();
    for n in 1..=n_max.max(0) {
        // [z^{-1}] e^z P(z) z^{-n} and [w^{-1}] e^w Q(w) w^{n}
        let mut zc = BigRational::zero();
        for (&a, c) in &p.coeffs {
            zc += c * inv_factorial(n - 1 - a);
        }
        let mut wc = BigRational::zero();
        for (&b, c) in &q.coeffs {
            wc += c * inv_factorial(-1 - n - b);
        }
        total += zc * wc;
    }
    -total
}

/// Exact `D(r, s)` as a rational number.
pub fn d_exact(r: u32, s: u32) -> BigRational {
    assert!(r >= 1 && s >= 1, "D(r,s) requires r, s >= 1");
    pair_residue(&u_factor(r as i64), &u_factor(s as i64))
}

/// Float path for `D(r, s)` via log-factorial differences; every term of the
/// finite sum is positive, so there is no cancellation and the path is safe
/// up to bulk-scale indices (r, s of order a few thousand).
pub fn d_float(r: u32, s: u32) -> f64 {
    assert!(r >= 1 && s >= 1);
    let (r, s) = (r as usize, s as usize);
    let lr = ln_factorial(r);
    let ls = ln_factorial(s);
    let mut total = 0.0;
    for n in 1..=s {
        let c1 = n as f64 / (r as f64 * (r + n) as f64);
        let (c2, l2) = if n < s {
            (n as f64 / (s as f64 * (s - n) as f64), ln_factorial(s - n - 1))
        } else {
            (1.0, 0.0)
        };
        total += c1 * c2 * (lr + ls - ln_factorial(r + n - 1) - l2).exp();
    }
    total
}

/// Which residue identity to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityKind {
    /// `(r-1) D(r-1,s) + (s-1) D(r,s-1) - (r+s) D(r,s)`, zero for `r >= s >= 1`.
    Zero,
    /// `D(r-1,r) - D(r,r-1) - 1/(r-1)`, zero for `r >= 2` (`s` ignored).
    One,
}

/// Exact defect of the requested identity; a correct implementation returns
/// the rational number zero.
///
/// For `kind = Zero` the boundary terms `(r-1) D(r-1, s)` and
/// `(s-1) D(r, s-1)` are evaluated through the combined integrand
/// `(r-1)! ((r-1) - z) z^{-r}` (see [`boundary_factor`]): at `r = 1` this is
/// the constant `-1` rather than literally `0 * D(0, s)`, which is what makes
/// the identity hold down to `(r, s) = (1, 1)`.
pub fn identity_defect(kind: IdentityKind, r: u32, s: u32) -> BigRational {
    match kind {
        IdentityKind::Zero => {
            assert!(r >= s && s >= 1, "identity Zero requires r >= s >= 1");
            let (ri, si) = (r as i64, s as i64);
            let z_boundary = pair_residue(&boundary_factor(ri), &u_factor(si));
            let w_boundary = pair_residue(&u_factor(ri), &boundary_factor(si));
            let main = BigRational::from(BigInt::from(ri + si)) * d_exact(r, s);
            z_boundary + w_boundary - main
        }
        IdentityKind::One => {
            assert!(r >= 2, "identity One requires r >= 2");
            d_exact(r - 1, r)
                - d_exact(r, r - 1)
                - BigRational::new(BigInt::one(), BigInt::from(r as i64 - 1))
        }
    }
}

/// How a covariance table was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Residue,
    Recursion,
    Quadrature,
    MonteCarlo,
}

/// Symmetric table of fluctuation covariances `A[r][s]`, `1 <= s <= r <= n`,
/// kept both as exact rationals and as doubles.
#[derive(Debug, Clone)]
pub struct CovarianceTable {
    n: usize,
    /// Lower triangle, row-major: entry `(r, s)` at `r(r-1)/2 + (s-1)`.
    entries: Vec<BigRational>,
    pub provenance: Provenance,
}

impl CovarianceTable {
    pub fn from_fn(
        n: usize,
        provenance: Provenance,
        mut f: impl FnMut(u32, u32) -> BigRational,
    ) -> Self {
        let mut entries = Vec::with_capacity(n * (n + 1) / 2);
        for r in 1..=n as u32 {
            for s in 1..=r {
                entries.push(f(r, s));
            }
        }
        CovarianceTable {
            n,
            entries,
            provenance,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry with symmetric completion.
    pub fn get(&self, r: usize, s: usize) -> &BigRational {
        assert!(r >= 1 && s >= 1 && r <= self.n && s <= self.n);
        let (r, s) = if r >= s { (r, s) } else { (s, r) };
        &self.entries[r * (r - 1) / 2 + (s - 1)]
    }

    pub fn get_f64(&self, r: usize, s: usize) -> f64 {
        rational_to_f64(self.get(r, s))
    }

    /// Dense symmetric double-precision matrix.
    pub fn to_f64_matrix(&self) -> Vec<Vec<f64>> {
        (1..=self.n)
            .map(|r| (1..=self.n).map(|s| self.get_f64(r, s)).collect())
            .collect()
    }

    /// Smallest LDL^T pivot of the double view; the table is positive
    /// semidefinite when this is nonnegative up to rounding.
    pub fn min_ldlt_pivot(&self) -> f64 {
        ldlt_pivots(&self.to_f64_matrix())
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV rows `r,s,numerator,denominator,double` over the lower triangle.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,s,numerator,denominator,double\n");
        for r in 1..=self.n {
            for s in 1..=r {
                let v = self.get(r, s);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    r,
                    s,
                    v.numer(),
                    v.denom(),
                    self.get_f64(r, s)
                );
            }
        }
        out
    }
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    // Good enough for the magnitudes in the tables (no overflow for the
    // sizes used; splitting keeps precision for large numerators).
    let n = q.numer();
    let d = q.denom();
    let nf = n.to_string().parse::<f64>().unwrap_or(f64::NAN);
    let df = d.to_string().parse::<f64>().unwrap_or(f64::NAN);
    nf / df
}

/// Stationary covariance table of the linear SDE chain, by triangular fill of
/// the fixed-point equations of the covariance ODE:
///
/// `A[1][1] = 1/2`, `A[r][s] = ((r-1) A[r-1][s] + (s-1) A[r][s-1]) / (r+s)`
/// for `r > s`, and `A[r][r] = (1 + 2 (r-1) A[r-1][r]) / (2r)`, using the
/// symmetry `A[r][s] = A[s][r]`. Exact rationals throughout.
pub fn stationary_cov_table(nmax: usize) -> CovarianceTable {
    assert!(nmax >= 1);
    let mut rows: Vec<Vec<BigRational>> = Vec::with_capacity(nmax);
    for r in 1..=nmax {
        let mut row: Vec<BigRational> = Vec::with_capacity(r);
        for s in 1..=r {
            let val = if r == 1 && s == 1 {
                BigRational::new(BigInt::one(), BigInt::from(2))
            } else if r == s {
                // A[r][r] = (1 + 2(r-1) A[r-1][r]) / (2r); A[r-1][r] = A[r][r-1].
                let below: BigRational = row[r - 2].clone();
                (BigRational::one()
                    + BigRational::from(BigInt::from(2 * (r as i64 - 1))) * below)
                    / BigRational::from(BigInt::from(2 * r as i64))
            } else {
                let left = rows[r - 2][s - 1].clone(); // A[r-1][s]
                let down = if s >= 2 {
                    row[s - 2].clone() // A[r][s-1]
                } else {
                    BigRational::zero()
                };
                (BigRational::from(BigInt::from(r as i64 - 1)) * left
                    + BigRational::from(BigInt::from(s as i64 - 1)) * down)
                    / BigRational::from(BigInt::from((r + s) as i64))
            };
            row.push(val);
        }
        rows.push(row);
    }
    CovarianceTable::from_fn(nmax, Provenance::Recursion, |r, s| {
        rows[r as usize - 1][s as usize - 1].clone()
    })
}

/// Double-precision stationary table by the same recursion (forward stable:
/// all coefficients are positive). Used for bulk-scale sampling where the
/// rational fill would be wasteful.
pub fn stationary_cov_table_f64(nmax: usize) -> Vec<Vec<f64>> {
    assert!(nmax >= 1);
    let mut a = vec![vec![0.0; nmax]; nmax];
    a[0][0] = 0.5;
    for r in 1..=nmax {
        for s in 1..=r {
            if r == 1 && s == 1 {
                continue;
            }
            let v = if r == s {
                (1.0 + 2.0 * (r as f64 - 1.0) * a[r - 1][r - 2]) / (2.0 * r as f64)
            } else {
                let left = a[r - 2][s - 1];
                let down = if s >= 2 { a[r - 1][s - 2] } else { 0.0 };
                ((r as f64 - 1.0) * left + (s as f64 - 1.0) * down) / (r + s) as f64
            };
            a[r - 1][s - 1] = v;
            a[s - 1][r - 1] = v;
        }
    }
    a
}

/// Monic orthogonal polynomials of the contour weight `e^z z^{-n}`
/// (the two closed forms and the exact norm, used as optional cross-checks of
/// the covariance reduction).
pub mod orthopoly {
    use super::*;

    /// Coefficients (by ascending degree) of `p_k^n` from the explicit sum:
    /// coefficient of `(-z)^l` is `k!/(n-k-1)! * (n-1-l)!/((k-l)! l!)`.
    pub fn coeffs_sum_form(k: u32, n: u32) -> Vec<BigRational> {
        assert!(n >= k + 1);
        let (k, n) = (k as i64, n as i64);
        let pref = BigRational::new(big_factorial(k), big_factorial(n - k - 1));
        (0..=k)
            .map(|l| {
                let sign = if l % 2 == 0 { 1 } else { -1 };
                pref.clone()
                    * BigRational::new(
                        big_factorial(n - 1 - l) * BigInt::from(sign),
                        big_factorial(k - l) * big_factorial(l),
                    )
            })
            .collect()
    }

    /// Coefficients from the integral form
    /// `p_k^n(z) = 1/(n-1-k)! * int_0^inf (y-z)^k y^{n-1-k} e^{-y} dy`,
    /// evaluated exactly through gamma moments `int y^m e^{-y} = m!`.
    pub fn coeffs_integral_form(k: u32, n: u32) -> Vec<BigRational> {
        assert!(n >= k + 1);
        let (k, n) = (k as i64, n as i64);
        (0..=k)
            .map(|j| {
                let sign = if j % 2 == 0 { 1 } else { -1 };
                // C(k, j) (-1)^j (n-1-j)! / (n-1-k)!
                BigRational::new(
                    big_factorial(k) * big_factorial(n - 1 - j) * BigInt::from(sign),
                    big_factorial(j) * big_factorial(k - j) * big_factorial(n - 1 - k),
                )
            })
            .collect()
    }

    /// `<p_k^n, p_k^n>_n = (-1)^k k!/(n-k-1)!`.
    pub fn norm_exact(k: u32, n: u32) -> BigRational {
        assert!(n >= k + 1);
        let (k, n) = (k as i64, n as i64);
        let sign = if k % 2 == 0 { 1 } else { -1 };
        BigRational::new(big_factorial(k) * BigInt::from(sign), big_factorial(n - k - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn d_exact_anchors() {
        assert_eq!(d_exact(1, 1), rat(1, 2));
        assert_eq!(d_exact(2, 1), rat(1, 6));
        assert_eq!(d_exact(2, 2), rat(1, 3));
        // (1,2) is not a covariance; the asymmetry is the content of the
        // second residue identity.
        assert_eq!(d_exact(1, 2) - d_exact(2, 1), BigRational::one());
    }

    #[test]
    fn identities_vanish_exactly() {
        for r in 1..=12u32 {
            for s in 1..=r {
                assert!(
                    identity_defect(IdentityKind::Zero, r, s).is_zero(),
                    "zero identity failed at ({r},{s})"
                );
            }
        }
        for r in 2..=12u32 {
            assert!(identity_defect(IdentityKind::One, r, 0).is_zero());
        }
        // Spot value: D(2,3) - D(3,2) = 1/2.
        assert_eq!(d_exact(2, 3) - d_exact(3, 2), rat(1, 2));
    }

    #[test]
    fn recursion_equals_residue_oracle() {
        let table = stationary_cov_table(12);
        assert_eq!(*table.get(1, 1), rat(1, 2));
        assert_eq!(*table.get(2, 1), rat(1, 6));
        assert_eq!(*table.get(2, 2), rat(1, 3));
        for r in 1..=12 {
            for s in 1..=r {
                assert_eq!(
                    *table.get(r, s),
                    d_exact(r as u32, s as u32),
                    "table/residue mismatch at ({r},{s})"
                );
            }
        }
    }

    #[test]
    fn table_is_positive_semidefinite() {
        let table = stationary_cov_table(12);
        assert!(table.min_ldlt_pivot() >= -1e-14);
    }

    #[test]
    fn float_paths_agree_with_rational() {
        for r in 1..=64u32 {
            for s in (1..=64u32).step_by(7) {
                let exact = rational_to_f64(&d_exact(r, s));
                let float = d_float(r, s);
                assert!(
                    (float - exact).abs() <= 1e-12 * exact.abs().max(1e-300),
                    "float path off at ({r},{s}): {float} vs {exact}"
                );
            }
        }
        let f64_table = stationary_cov_table_f64(20);
        let exact = stationary_cov_table(20);
        for r in 1..=20 {
            for s in 1..=r {
                assert!((f64_table[r - 1][s - 1] - exact.get_f64(r, s)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn csv_export_shape() {
        let table = stationary_cov_table(2);
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "r,s,numerator,denominator,double");
        assert_eq!(lines[1], "1,1,1,2,0.5");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn orthopoly_two_forms_agree() {
        for n in 1..=8u32 {
            for k in 0..n.min(6) {
                assert_eq!(
                    orthopoly::coeffs_sum_form(k, n),
                    orthopoly::coeffs_integral_form(k, n),
                    "forms differ at k={k}, n={n}"
                );
            }
        }
        // p_1^3(z) = 2 - z, norm -1.
        assert_eq!(orthopoly::coeffs_sum_form(1, 3), vec![rat(2, 1), rat(-1, 1)]);
        assert_eq!(orthopoly::norm_exact(1, 3), rat(-1, 1));
    }
}
