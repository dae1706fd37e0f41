//! Diffusion-maps baseline: spectral gap of the density-normalized
//! random-walk operator on the sample graph.
//!
//! Affinities `exp(-|x_j - x_k|^2 / (4 eps))` are renormalized by
//! `q_j^alpha q_k^alpha` (`q` the degrees), then row-normalized to a Markov
//! matrix `P`. For `alpha = 1/2`, `(P - I) / eps` approximates the Langevin
//! generator `Delta - grad V . grad` of the sampling density, so
//! `1 / ((1 - lambda_2) / eps)` estimates the Poincaré constant.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{Method, PoincareEstimate};
use crate::linalg::{largest_eigenvalue_sym, DEFAULT_EIG_TOL};
use crate::samples::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `alpha = 1/2`: limit is the Langevin (backward Kolmogorov) generator.
    FokkerPlanck,
    /// `alpha = 1`: limit is the Laplace-Beltrami operator, density removed.
    LaplaceBeltrami,
}

impl Normalization {
    pub fn alpha(&self) -> f64 {
        match self {
            Normalization::FokkerPlanck => 0.5,
            Normalization::LaplaceBeltrami => 1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::FokkerPlanck => "fokker_planck",
            Normalization::LaplaceBeltrami => "laplace_beltrami",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionMapConfig {
    pub epsilon: f64,
    /// The constant `c` in `eps = c / n^(1/4)`, kept for reporting.
    pub c_eps: f64,
    pub normalization: Normalization,
}

impl DiffusionMapConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            c_eps: epsilon,
            normalization: Normalization::FokkerPlanck,
        })
    }

    /// `eps = c / n^(1/4)`.
    pub fn scaled(c_eps: f64, n: usize) -> Result<Self> {
        let mut cfg = Self::new(c_eps / (n as f64).powf(0.25))?;
        cfg.c_eps = c_eps;
        Ok(cfg)
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

/// Spectrum of the normalized operator, sorted decreasingly, and the
/// right eigenvector of `P` for the second eigenvalue.
pub struct DiffusionSpectrum {
    pub eigenvalues: Vec<f64>,
    pub second_vector: DVector<f64>,
    pub affinity: DMatrix<f64>,
}

struct Normalized {
    affinity: DMatrix<f64>,
    /// `D^{-1/2} W~ D^{-1/2}`; symmetric PSD with top eigenvector `sqrt(deg)`.
    sym: DMatrix<f64>,
    deg: Vec<f64>,
}

fn normalized_operator(x: &SampleSet, cfg: &DiffusionMapConfig) -> Result<Normalized> {
    let n = x.n();
    if n < 3 {
        return Err(Error::input(format!("diffusion maps need at least 3 samples, got {n}")));
    }
    let data = x.data();
    let d = x.dim();
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let r2: f64 = (0..d).map(|i| (data[(j, i)] - data[(k, i)]).powi(2)).sum();
            let v = (-r2 / (4.0 * cfg.epsilon)).exp();
            w[(j, k)] = v;
            w[(k, j)] = v;
        }
    }
    let alpha = cfg.normalization.alpha();
    let q: Vec<f64> = (0..n).map(|j| w.row(j).sum().powf(alpha)).collect();
    let wt = DMatrix::from_fn(n, n, |j, k| w[(j, k)] / (q[j] * q[k]));
    let deg: Vec<f64> = (0..n).map(|j| wt.row(j).sum()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut sym = DMatrix::from_fn(n, n, |j, k| wt[(j, k)] * inv_sqrt[j] * inv_sqrt[k]);
    crate::kernel::symmetrize(&mut sym);
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite normalized affinity"));
    }
    Ok(Normalized { affinity: w, sym, deg })
}

pub fn diffusion_spectrum(x: &SampleSet, cfg: &DiffusionMapConfig) -> Result<DiffusionSpectrum> {
    let Normalized { affinity: w, sym, deg } = normalized_operator(x, cfg)?;
    let n = x.n();
    let inv_sqrt: Vec<f64> = deg.iter().map(|v| 1.0 / v.sqrt()).collect();
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    // Right eigenvectors of P = D^{-1} W~ are D^{-1/2} psi.
    let psi = eig.eigenvectors.column(order[1]);
    let mut second_vector = DVector::from_fn(n, |j, _| psi[j] * inv_sqrt[j]);
    let norm = second_vector.norm();
    if norm > 0.0 {
        second_vector /= norm;
    }
    if second_vector[second_vector.iamax()] < 0.0 {
        second_vector.neg_mut();
    }
    Ok(DiffusionSpectrum {
        eigenvalues,
        second_vector,
        affinity: w,
    })
}

/// `(lambda_1, lambda_2, second right eigenvector)` by deflating the known
/// top eigenvector `sqrt(deg)` and iterating on the remainder.
fn top_two(x: &SampleSet, cfg: &DiffusionMapConfig) -> Result<(f64, f64, DVector<f64>)> {
    let Normalized { mut sym, deg, .. } = normalized_operator(x, cfg)?;
    let n = x.n();
    let mut psi1 = DVector::from_iterator(n, deg.iter().map(|v| v.sqrt()));
    psi1 /= psi1.norm();
    let l1 = (&sym * &psi1).dot(&psi1);
    sym -= &psi1 * psi1.transpose() * l1;
    crate::kernel::symmetrize(&mut sym);
    let (l2, psi) = largest_eigenvalue_sym(&sym, DEFAULT_EIG_TOL)?;
    let mut v = DVector::from_fn(n, |j, _| psi[j] / deg[j].sqrt());
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    if v[v.iamax()] < 0.0 {
        v.neg_mut();
    }
    Ok((l1, l2, v))
}

/// Returns `value = +inf` with diagnostic `disconnected = 1` when the graph
/// splits at working precision.
pub fn estimate_poincare_dm(x: &SampleSet, cfg: &DiffusionMapConfig) -> Result<PoincareEstimate> {
    let (l1, l2, second_vector) = top_two(x, cfg)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("lambda1".to_string(), l1);
    diagnostics.insert("lambda2".to_string(), l2);
    diagnostics.insert("epsilon".to_string(), cfg.epsilon);
    diagnostics.insert("alpha".to_string(), cfg.normalization.alpha());
    let disconnected = l2 >= 1.0 - 1e-12;
    diagnostics.insert("disconnected".to_string(), if disconnected { 1.0 } else { 0.0 });
    let value = if disconnected {
        f64::INFINITY
    } else {
        cfg.epsilon / (1.0 - l2)
    };
    Ok(PoincareEstimate {
        value,
        lambda: cfg.epsilon,
        method: Method::DiffusionMaps,
        eigvec: second_vector,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    ClosestToOracle,
    /// Point of maximal discrete curvature of the estimate-vs-c curve.
    Elbow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSearch {
    pub best_c: f64,
    pub curve: Vec<(f64, f64)>,
    pub selection: Selection,
}

pub(crate) fn elbow_index(values: &[f64]) -> usize {
    if values.len() < 3 {
        return 0;
    }
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..values.len() - 1 {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            continue;
        }
        let slope = (c - a) / 2.0;
        let curvature = (a - 2.0 * b + c).abs() / (1.0 + slope * slope).powf(1.5);
        if curvature > best.1 {
            best = (i, curvature);
        }
    }
    best.0
}

/// Evaluates the diffusion-maps estimate at `eps = c / n^(1/4)` for every `c`.
pub fn bandwidth_grid_search(
    x: &SampleSet,
    c_grid: &[f64],
    oracle_value: Option<f64>,
    normalization: Normalization,
) -> Result<BandwidthSearch> {
    if c_grid.is_empty() {
        return Err(Error::input("bandwidth grid is empty"));
    }
    let curve = c_grid
        .iter()
        .map(|&c| {
            let cfg = DiffusionMapConfig::scaled(c, x.n())?.with_normalization(normalization);
            Ok((c, estimate_poincare_dm(x, &cfg)?.value))
        })
        .collect::<Result<Vec<_>>>()?;
    let (idx, selection) = match oracle_value {
        Some(target) => {
            let idx = curve
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 .1 - target).abs().total_cmp(&(b.1 .1 - target).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            (idx, Selection::ClosestToOracle)
        }
        None => {
            let values: Vec<f64> = curve.iter().map(|p| p.1).collect();
            (elbow_index(&values), Selection::Elbow)
        }
    };
    Ok(BandwidthSearch {
        best_c: curve[idx].0,
        curve,
        selection,
    })
}
