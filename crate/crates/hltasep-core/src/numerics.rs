//! Shared numerical helpers: log-factorials, ensemble statistics, adaptive
//! quadrature, symmetric factorizations and reproducible RNG streams.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest `n` for which `ln n!` is tabulated. Covers the bulk experiments
/// (indices up to a few thousand) with room to spare.
const LN_FACTORIAL_MAX: usize = 8192;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_MAX + 1);
        t.push(0.0);
        for k in 1..=LN_FACTORIAL_MAX {
            t.push(t[k - 1] + (k as f64).ln());
        }
        t
    })
}

/// `ln n!` by cumulative summation (relative error well below 1e-13 over the
/// tabulated range).
pub fn ln_factorial(n: usize) -> f64 {
    ln_factorial_table()[n]
}

pub fn factorial_f64(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance together with the standard error of the variance
/// estimator, `sqrt((m4 - var^2)/n)`.
pub fn variance_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (var, ((m4 - var * var).max(0.0) / n).sqrt())
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Total-variation distance between the empirical pmfs of two integer samples.
pub fn tv_distance(a: &[i64], b: &[i64]) -> f64 {
    use std::collections::BTreeMap;
    let mut pa: BTreeMap<i64, f64> = BTreeMap::new();
    let mut pb: BTreeMap<i64, f64> = BTreeMap::new();
    for &x in a {
        *pa.entry(x).or_insert(0.0) += 1.0 / a.len() as f64;
    }
    for &x in b {
        *pb.entry(x).or_insert(0.0) += 1.0 / b.len() as f64;
    }
    let keys: std::collections::BTreeSet<i64> = pa.keys().chain(pb.keys()).copied().collect();
    0.5 * keys
        .iter()
        .map(|k| (pa.get(k).unwrap_or(&0.0) - pb.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Pivots of the LDL^T factorization of a symmetric matrix, for positive
/// semidefiniteness checks (no pivoting; a tiny negative pivot within the
/// caller's tolerance is acceptable for float tables).
pub fn ldlt_pivots(mat: &[Vec<f64>]) -> Vec<f64> {
    let n = mat.len();
    let mut l = vec![vec![0.0; n]; n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = mat[j][j];
        for k in 0..j {
            dj -= l[j][k] * l[j][k] * d[k];
        }
        d[j] = dj;
        l[j][j] = 1.0;
        for i in j + 1..n {
            let mut v = mat[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k] * d[k];
            }
            l[i][j] = if dj != 0.0 { v / dj } else { 0.0 };
        }
    }
    d
}

/// Lower Cholesky factor, or `None` when the matrix is not numerically
/// positive definite.
pub fn cholesky_lower(mat: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = mat.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = mat[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

/// Symmetric factor `L` with `L L^T ~ mat`, clipping negative eigenvalues to
/// zero when plain Cholesky fails. Returns the factor and whether clipping
/// was needed.
pub fn psd_factor_with_clipping(mat: &[Vec<f64>]) -> (Vec<Vec<f64>>, bool) {
    if let Some(l) = cholesky_lower(mat) {
        return (l, false);
    }
    let n = mat.len();
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (mat[i][j] + mat[j][i]));
    let eig = dm.symmetric_eigen();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            l[i][j] = eig.eigenvectors[(i, j)] * s;
        }
    }
    (l, true)
}

/// Multiply a lower-triangular-ish factor by a standard normal vector.
pub fn factor_times(l: &[Vec<f64>], xi: &[f64]) -> Vec<f64> {
    l.iter()
        .map(|row| row.iter().zip(xi).map(|(a, b)| a * b).sum())
        .collect()
}

/// SplitMix64 — used to derive independent sub-seeds from a master seed.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Counter-based per-replica RNG stream: all replicas share the master seed
/// and differ only in the stream index, so ensembles are order-independent
/// under parallel execution.
pub fn replica_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_factorial_values() {
        assert_relative_eq!(ln_factorial(0), 0.0);
        assert_relative_eq!(ln_factorial(5), 120f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            ln_factorial(170),
            7.257415615307999e306f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn simpson_gaussian_moment() {
        // int_0^inf y^2 e^{-y^2} dy = sqrt(pi)/4, integrand negligible past 10.
        let v = adaptive_simpson(&|y: f64| y * y * (-y * y).exp(), 0.0, 10.0, 1e-12);
        assert_relative_eq!(v, std::f64::consts::PI.sqrt() / 4.0, epsilon = 1e-11);
    }

    #[test]
    fn tv_distance_simple() {
        assert_relative_eq!(tv_distance(&[0, 0, 1, 1], &[0, 0, 1, 1]), 0.0);
        assert_relative_eq!(tv_distance(&[0, 0], &[1, 1]), 1.0);
        assert_relative_eq!(tv_distance(&[0, 1], &[1, 1]), 0.5);
    }

    #[test]
    fn cholesky_and_clipping() {
        let m = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let l = cholesky_lower(&m).unwrap();
        assert_relative_eq!(l[0][0], 2.0);
        let (_, clipped) = psd_factor_with_clipping(&m);
        assert!(!clipped);
        // Indefinite matrix forces the clipping path.
        let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let (l, clipped) = psd_factor_with_clipping(&bad);
        assert!(clipped);
        // L L^T reproduces the clipped (psd) projection, whose diagonal
        // dominates the original one.
        let d0: f64 = l[0].iter().map(|v| v * v).sum();
        assert!(d0 >= 1.0);
    }

    #[test]
    fn ldlt_detects_signature() {
        let m = vec![vec![2.0, 0.0], vec![0.0, -3.0]];
        let d = ldlt_pivots(&m);
        assert!(d[0] > 0.0 && d[1] < 0.0);
    }

    #[test]
    fn replica_streams_are_independent_of_order() {
        use rand::RngCore;
        let mut a = replica_rng(7, 3);
        let mut b = replica_rng(7, 3);
        assert_eq!(a.next_u64(), b.next_u64());
        let mut c = replica_rng(7, 4);
        assert_ne!(replica_rng(7, 3).next_u64(), c.next_u64());
    }
}
