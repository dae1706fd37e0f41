//! Closed-form regularized Poincaré constant of a one-dimensional Gaussian
//! `N(0, 1/(4a))` under the kernel `exp(-b (x - y)^2)`.
//!
//! In the Hermite-function basis `f_i` (orthonormal in `L^2(mu)`) the RKHS
//! norm is diagonal with weights `1/lambda_i`, the variance is
//! `alpha^T (I - eta eta^T) alpha` and the Dirichlet energy is
//! `alpha^T M^T M alpha`. The basis is truncated to indices `0..=2m+1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::largest_eigenvalue_sym;

/// Entries of `kappa / lambda_i` are capped here.
pub const PENALTY_CAP: f64 = 1e300;

#[derive(Debug, Clone, PartialEq)]
pub struct HermiteModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub u: f64,
    pub m: usize,
    pub lambda_vec: DVector<f64>,
    pub eta: DVector<f64>,
    pub mtm: DMatrix<f64>,
}

/// Target variance and kernel bandwidth to the `(a, b)` parametrization:
/// `N(0, variance)` has `a = 1 / (4 variance)` and `exp(-gamma r^2)` has `b = gamma`.
pub fn params_for_gaussian(variance: f64, gamma: f64) -> (f64, f64) {
    (1.0 / (4.0 * variance), gamma)
}

impl HermiteModel {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
            return Err(Error::input(format!("need a, b > 0, got a={a}, b={b}")));
        }
        if m < 2 {
            return Err(Error::input(format!("truncation m must be at least 2, got {m}")));
        }
        let c = (a * a + 2.0 * a * b).sqrt();
        let s = a + b + c;
        let u = b / s;
        let size = 2 * m + 2;

        let log_l0 = 0.5 * (2.0 * a / s).ln();
        let lambda_vec = DVector::from_fn(size, |i, _| (log_l0 + i as f64 * u.ln()).exp());

        // eta_{2k+2} / eta_{2k} = u sqrt((2k+1)(2k+2)) / (2(k+1)), carried in log space.
        let mut eta = DVector::zeros(size);
        let mut log_eta = 0.25 * (c / a).ln() + 0.5 * (2.0 * a / (a + c)).ln();
        for k in 0..=m {
            eta[2 * k] = log_eta.exp();
            let kf = k as f64;
            log_eta += u.ln() + 0.5 * ((2.0 * kf + 1.0) * (2.0 * kf + 2.0)).ln() - (2.0 * (kf + 1.0)).ln();
        }

        let mut mtm = DMatrix::zeros(size, size);
        for i in 0..size {
            let fi = i as f64;
            mtm[(i, i)] = (2.0 * fi * (a * a + c * c) + (a - c) * (a - c)) / c;
            if i + 2 < size {
                let off = (a * a - c * c) * ((fi + 1.0) * (fi + 2.0)).sqrt() / c;
                mtm[(i, i + 2)] = off;
                mtm[(i + 2, i)] = off;
            }
        }
        Ok(Self {
            a,
            b,
            c,
            u,
            m,
            lambda_vec,
            eta,
            mtm,
        })
    }

    /// Model for `N(0, variance)` with kernel `exp(-gamma r^2)`.
    pub fn for_gaussian(variance: f64, gamma: f64, m: usize) -> Result<Self> {
        let (a, b) = params_for_gaussian(variance, gamma);
        Self::new(a, b, m)
    }

    pub fn size(&self) -> usize {
        self.lambda_vec.len()
    }

    /// The unregularized constant `1 / (4a)`.
    pub fn poincare_constant(&self) -> f64 {
        1.0 / (4.0 * self.a)
    }

    /// `M^T M + kappa Diag(lambda)^{-1}` with the penalty capped at
    /// [`PENALTY_CAP`]; also returns how many entries hit the cap.
    pub fn numerator(&self, kappa: f64) -> (DMatrix<f64>, usize) {
        let mut n = self.mtm.clone();
        let mut capped = 0;
        for i in 0..self.size() {
            let mut pen = kappa / self.lambda_vec[i];
            if !(pen <= PENALTY_CAP) {
                pen = PENALTY_CAP;
                capped += 1;
            }
            n[(i, i)] += pen;
        }
        (n, capped)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedNu {
    pub nu: DVector<f64>,
}

/// Coefficients of `f(x) = x` in the basis, truncated at index `2m+1`.
pub fn truncated_nu(model: &HermiteModel) -> TruncatedNu {
    let (a, c, u) = (model.a, model.c, model.u);
    let mut nu = DVector::zeros(model.size());
    let mut log_nu = 0.25 * (c / a).ln() + 0.5 * a.ln() - (2.0 * c).ln() + 1.5 * (2.0 * c / (a + c)).ln();
    for k in 0..=model.m {
        nu[2 * k + 1] = log_nu.exp();
        let kf = k as f64;
        // nu_{2k+3} / nu_{2k+1} = u sqrt((2k+2)(2k+3)) / (2(k+1))
        log_nu += u.ln() + 0.5 * ((2.0 * kf + 2.0) * (2.0 * kf + 3.0)).ln() - (2.0 * (kf + 1.0)).ln();
    }
    TruncatedNu { nu }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedPoincare {
    pub value: f64,
    /// Lower bound on `value` from the Rayleigh ratio at `alpha = nu`.
    pub nu_lower_bound: f64,
    pub capped_entries: usize,
}

/// Regularized constant `P_kappa` on the truncated basis, with details.
///
/// `1 / P_kappa` is the smallest eigenvalue of the Schur complement of the
/// numerator after eliminating the constant direction `eta`. Equivalently
/// `P_kappa = lambda_max(L^{-1} (I - e e^T) L^{-T})` with `N = L L^T` and
/// `e = eta / |eta|`, which is how it is computed: this never mixes the
/// exponentially large penalty entries into the low-order coordinates.
pub fn regularized_poincare_detailed(model: &HermiteModel, kappa: f64) -> Result<RegularizedPoincare> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::input(format!("kappa must be positive, got {kappa}")));
    }
    let (num, capped_entries) = model.numerator(kappa);
    let chol = num
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("numerator matrix is not positive definite"))?;
    let l = chol.l();
    let size = model.size();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(size, size))
        .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
    let e = &model.eta / model.eta.norm();
    let y = &l_inv * &e;
    let mut g = &l_inv * l_inv.transpose() - &y * y.transpose();
    crate::kernel::symmetrize(&mut g);
    let (value, _) = largest_eigenvalue_sym(&g, 1e-12)?;

    let nu = truncated_nu(model).nu;
    let proj = e.dot(&nu);
    let denom = nu.norm_squared() - proj * proj;
    let ratio = nu.dot(&(&num * &nu)) / denom;
    let nu_lower_bound = 1.0 / ratio;
    if value < nu_lower_bound * (1.0 - 1e-9) {
        return Err(Error::numerical(format!(
            "regularized constant {value} below the nu bound {nu_lower_bound}"
        )));
    }
    Ok(RegularizedPoincare {
        value,
        nu_lower_bound,
        capped_entries,
    })
}

pub fn regularized_poincare(model: &HermiteModel, kappa: f64) -> Result<f64> {
    regularized_poincare_detailed(model, kappa).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_constants() {
        let m = HermiteModel::new(1.0, 1.0, 10).unwrap();
        assert!((m.c - 3f64.sqrt()).abs() < 1e-15);
        assert!((m.u - (2.0 - 3f64.sqrt())).abs() < 1e-15);
        assert!((m.u - 0.267_949).abs() < 1e-6);
        assert!((m.lambda_vec[0] - (2.0 / (2.0 + 3f64.sqrt())).sqrt()).abs() < 1e-15);
        assert!((m.c * m.c - (m.a * m.a + 2.0 * m.a * m.b)).abs() < 1e-15 * m.c * m.c);
        assert!(m.lambda_vec.iter().zip(m.lambda_vec.iter().skip(1)).all(|(x, y)| y < x));
        assert_eq!(m.mtm, m.mtm.transpose());
        assert!(HermiteModel::new(1.0, 1.0, 1).is_err());
        assert!(HermiteModel::new(0.0, 1.0, 5).is_err());
    }

    #[test]
    fn eta_matches_factorial_formula_for_small_k() {
        let m = HermiteModel::new(0.25, 1.0, 8).unwrap();
        let (a, c, u) = (m.a, m.c, m.u);
        let fact = |k: u64| (1..=k).map(|v| v as f64).product::<f64>();
        for k in 0..=8u64 {
            let want = (c / a).powf(0.25) * (2.0 * a / (a + c)).sqrt() * u.powi(k as i32)
                * fact(2 * k).sqrt()
                / (2f64.powi(k as i32) * fact(k));
            assert!((m.eta[2 * k as usize] - want).abs() < 1e-13 * want.max(1e-300));
            assert_eq!(m.eta[2 * k as usize + 1], 0.0);
        }
    }

    #[test]
    fn eta_is_unit_and_annihilated_by_derivative() {
        let m = HermiteModel::new(0.25, 1.0, 60).unwrap();
        assert!((m.eta.norm_squared() - 1.0).abs() < 1e-8);
        // M eta = 0, so eta^T M^T M eta vanishes up to the truncation edge.
        assert!(m.eta.dot(&(&m.mtm * &m.eta)).abs() < 1e-10);
    }

    #[test]
    fn nu_properties() {
        let m = HermiteModel::new(0.25, 1.0, 60).unwrap();
        let nu = truncated_nu(&m).nu;
        assert_eq!(m.eta.dot(&nu), 0.0);
        assert!((nu.norm_squared() - 1.0 / (4.0 * m.a)).abs() < 1e-10);
        let mv = &m.mtm * &nu;
        let interior = 2 * m.m - 4;
        let resid = (0..interior).map(|i| (mv[i] - 4.0 * m.a * nu[i]).powi(2)).sum::<f64>().sqrt();
        assert!(resid / nu.norm() < 1e-6);
    }

    #[test]
    fn regularized_value_is_sandwiched_and_monotone() {
        let m = HermiteModel::new(0.25, 1.0, 60).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let kappa = 10f64.powi(-k);
            let r = regularized_poincare_detailed(&m, kappa).unwrap();
            assert!(r.value <= 1.0 + 1e-12);
            assert!(r.value >= r.nu_lower_bound * (1.0 - 1e-9));
            assert!(r.value >= prev.min(r.value));
            prev = r.value;
        }
        let big = regularized_poincare(&m, 1e-1).unwrap();
        let small = regularized_poincare(&m, 1e-3).unwrap();
        assert!(small >= big);
    }

    #[test]
    fn truncation_converged() {
        let vals: Vec<f64> = [40, 60, 80]
            .iter()
            .map(|&mm| regularized_poincare(&HermiteModel::new(0.25, 1.0, mm).unwrap(), 1e-2).unwrap())
            .collect();
        assert!((vals[0] - vals[2]).abs() < 1e-6 && (vals[1] - vals[2]).abs() < 1e-6, "{vals:?}");
    }

    #[test]
    fn small_kappa_approaches_unregularized_constant() {
        let m = HermiteModel::new(0.25, 1.0, 80).unwrap();
        let v = regularized_poincare(&m, 1e-6).unwrap();
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn gaussian_parameter_mapping() {
        assert_eq!(params_for_gaussian(1.0, 1.0), (0.25, 1.0));
        let m = HermiteModel::for_gaussian(0.25, 2.0, 10).unwrap();
        assert_eq!((m.a, m.b), (1.0, 2.0));
        assert!((m.poincare_constant() - 0.25).abs() < 1e-15);
    }
}
