//! Dense symmetric eigen-solvers used by every estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrices up to this order fall back to a full eigendecomposition when
/// power iteration stalls.
pub const DENSE_FALLBACK_MAX: usize = 512;

pub const DEFAULT_EIG_TOL: f64 = 1e-10;

/// Relative asymmetry `max|M - M^T| / max|M|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

// Largest-magnitude component positive, so eigenvectors are reproducible.
fn fix_sign(v: &mut DVector<f64>) {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

fn start_vector(n: usize) -> DVector<f64> {
    // Deterministic, not orthogonal to the constant vector or to its complement.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    v /= v.norm();
    v
}

fn power_iterate(
    m: &DMatrix<f64>,
    shift: f64,
    tol_abs: f64,
    cap: usize,
) -> std::result::Result<(f64, DVector<f64>), f64> {
    let n = m.nrows();
    let mut v = start_vector(n);
    let mut residual = f64::INFINITY;
    for _ in 0..cap {
        let mv = m * &v;
        let theta = v.dot(&mv);
        residual = (&mv - &v * theta).norm();
        if residual <= tol_abs {
            return Ok((theta, v));
        }
        let mut next = mv + &v * shift;
        let norm = next.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(residual);
        }
        next /= norm;
        v = next;
    }
    Err(residual)
}

fn dense_top(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let idx = eig.eigenvalues.imax();
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector with
/// `|M v - lambda v| <= tol * |M|_F`.
///
/// Runs power iteration, shifting by the dominant eigenvalue when that one
/// turns out negative; stalls fall back to a dense decomposition for small
/// matrices.
pub fn largest_eigenvalue_sym(m: &DMatrix<f64>, tol: f64) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::input("matrix must be square and non-empty"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix has non-finite entries"));
    }
    if asymmetry(m) > 1e-10 {
        return Err(Error::input(format!(
            "matrix not symmetric (relative asymmetry {:e})",
            asymmetry(m)
        )));
    }
    let norm = m.norm();
    if norm == 0.0 {
        let mut v = DVector::zeros(n);
        v[0] = 1.0;
        return Ok((0.0, v));
    }
    let tol_abs = tol * norm;
    let cap = 10 * n;

    let attempt = match power_iterate(m, 0.0, tol_abs, cap) {
        Ok((theta, v)) if theta >= 0.0 => Ok((theta, v)),
        // Dominant eigenvalue is negative: shift so the top of the spectrum dominates.
        Ok((theta, _)) => power_iterate(m, -theta, tol_abs, cap),
        Err(r) => Err(r),
    };
    let (value, mut v) = match attempt {
        Ok(pair) => pair,
        Err(_) if n <= DENSE_FALLBACK_MAX => dense_top(m),
        Err(residual) => {
            return Err(Error::NoConvergence {
                iterations: cap,
                residual,
            })
        }
    };
    fix_sign(&mut v);
    Ok((value, v))
}

/// Maximizes `v^T A v / v^T B v` for symmetric `A` and SPD `B`; the
/// maximizer is normalized so that `v^T B v = 1`.
///
/// Reduces to a standard problem through the Cholesky factor of `B`; small
/// problems are solved densely, larger ones by [`largest_eigenvalue_sym`].
pub fn generalized_eig_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let m = a.nrows();
    if a.shape() != (m, m) || b.shape() != (m, m) {
        return Err(Error::input("generalized eigenproblem needs equal square matrices"));
    }
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("denominator matrix is not positive definite"))?;
    let l = chol.l();
    // L^{-1} A L^{-T}
    let left = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
    let mut whitened = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
    crate::kernel::symmetrize(&mut whitened);
    let (value, y) = if m <= DENSE_FALLBACK_MAX {
        dense_top(&whitened)
    } else {
        largest_eigenvalue_sym(&whitened, DEFAULT_EIG_TOL)?
    };
    let mut v = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
    fix_sign(&mut v);
    Ok((value, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random_sym(n: usize, salt: f64) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) as f64 * 0.37 + salt).sin());
        (&raw + raw.transpose()) * 0.5
    }

    #[test]
    fn identity_and_diagonal() {
        let (l, v) = largest_eigenvalue_sym(&DMatrix::identity(3, 3), 1e-10).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 5.0]));
        let (l, v) = largest_eigenvalue_sym(&d, 1e-10).unwrap();
        assert!((l - 5.0).abs() < 1e-12);
        assert!((v[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_dense_oracle_on_random_matrices() {
        for salt in [0.0, 0.5, 1.7, 2.9] {
            let m = pseudo_random_sym(6, salt);
            let oracle = m.clone().symmetric_eigenvalues().max();
            let (l, v) = largest_eigenvalue_sym(&m, 1e-10).unwrap();
            assert!((l - oracle).abs() < 1e-9, "{l} vs {oracle}");
            assert!((&m * &v - &v * l).norm() <= 1e-9 * m.norm());
        }
    }

    #[test]
    fn negative_dominant_eigenvalue_is_shifted() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-10.0, 1.0, 3.0]));
        let (l, _) = largest_eigenvalue_sym(&d, 1e-10).unwrap();
        assert!((l - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(largest_eigenvalue_sym(&m, 1e-10).unwrap_err().is_input());
    }

    #[test]
    fn generalized_trivial_cases() {
        let (l, v) = generalized_eig_max(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let (l, v) = generalized_eig_max(&a, &DMatrix::identity(2, 2)).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-9);
        let not_spd = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            generalized_eig_max(&a, &not_spd),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn generalized_matches_whitened_dense_oracle() {
        let n = 5;
        let g = DMatrix::from_fn(n, n, |i, j| ((i * 3 + j * 5) as f64 * 0.91).cos());
        let b = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
        let h = DMatrix::from_fn(n, n, |i, j| ((i * 11 + j * 2) as f64 * 0.43).sin());
        let a = &h * h.transpose();
        // Oracle: B^{-1/2} A B^{-1/2} through the eigendecomposition of B.
        let eb = b.clone().symmetric_eigen();
        let inv_sqrt = &eb.eigenvectors
            * DMatrix::from_diagonal(&eb.eigenvalues.map(|x| 1.0 / x.sqrt()))
            * eb.eigenvectors.transpose();
        let oracle = (&inv_sqrt * &a * &inv_sqrt).symmetric_eigenvalues().max();
        let (l, v) = generalized_eig_max(&a, &b).unwrap();
        assert!((l - oracle).abs() < 1e-9 * oracle.max(1.0));
        assert!((v.dot(&(&b * &v)) - 1.0).abs() < 1e-9);
        let rq = v.dot(&(&a * &v)) / v.dot(&(&b * &v));
        assert!((rq - l).abs() < 1e-9 * l);
    }
}
