//! Random Fourier features for the Gaussian kernel and the `M x M`
//! covariance / Dirichlet matrices built from them.
//!
//! `exp(-gamma |d|^2)` is the characteristic function of `N(0, 2 gamma I)`,
//! so frequencies are drawn from that law and phases uniformly on `[0, 2pi)`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimator::{Method, PoincareEstimate};
use crate::linalg::generalized_eig_max;
use crate::sampling::stream_rng;
use crate::samples::SampleSet;

#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureMap {
    /// `M x dim` frequencies.
    pub w: DMatrix<f64>,
    /// Phases in `[0, 2pi)`.
    pub b: DVector<f64>,
    /// `sqrt(2 / M)`.
    pub scale: f64,
    pub gamma: f64,
}

impl RandomFeatureMap {
    /// Builds a map from explicit frequencies and phases, reducing phases mod `2pi`.
    pub fn from_parts(w: DMatrix<f64>, b: DVector<f64>, gamma: f64) -> Result<Self> {
        if w.nrows() != b.len() || w.nrows() == 0 {
            return Err(Error::input("need one phase per frequency and at least one feature"));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!("gamma must be positive, got {gamma}")));
        }
        let b = b.map(|v| {
            let r = v.rem_euclid(TAU);
            if r >= TAU { 0.0 } else { r }
        });
        let scale = (2.0 / w.nrows() as f64).sqrt();
        Ok(Self { w, b, scale, gamma })
    }

    pub fn num_features(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// Phases `X W^T + b` (n x M).
    fn phases(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::input(format!(
                "samples have dimension {}, feature map expects {}",
                x.ncols(),
                self.dim()
            )));
        }
        let mut z = x * self.w.transpose();
        for mut row in z.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(self.b.iter()) {
                *v += b;
            }
        }
        Ok(z)
    }
}

fn check_sizes(dim: usize, num_features: usize, gamma: f64) -> Result<()> {
    if dim == 0 || num_features == 0 {
        return Err(Error::input("feature dimension and count must be positive"));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::input(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// I.i.d. frequencies `w ~ N(0, 2 gamma I)` and phases `b ~ U[0, 2pi)`.
pub fn sample_features(dim: usize, num_features: usize, gamma: f64, seed: u64) -> Result<RandomFeatureMap> {
    check_sizes(dim, num_features, gamma)?;
    let mut rng = stream_rng(seed, 0);
    let sd = (2.0 * gamma).sqrt();
    let mut w = DMatrix::zeros(num_features, dim);
    let mut b = DVector::zeros(num_features);
    for m in 0..num_features {
        for l in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            w[(m, l)] = sd * z;
        }
        b[m] = rng.random::<f64>() * TAU;
    }
    RandomFeatureMap::from_parts(w, b, gamma)
}

/// Like [`sample_features`] but every frequency `w` is followed by `-w`
/// with the same phase. The feature set is then closed under `x -> -x`, so
/// estimates on `x` and `-x` coincide up to summation order.
pub fn sample_features_antithetic(
    dim: usize,
    num_features: usize,
    gamma: f64,
    seed: u64,
) -> Result<RandomFeatureMap> {
    check_sizes(dim, num_features, gamma)?;
    let mut rng = stream_rng(seed, 0);
    let sd = (2.0 * gamma).sqrt();
    let mut w = DMatrix::zeros(num_features, dim);
    let mut b = DVector::zeros(num_features);
    let mut m = 0;
    while m < num_features {
        let phase = rng.random::<f64>() * TAU;
        for l in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            w[(m, l)] = sd * z;
        }
        b[m] = phase;
        if m + 1 < num_features {
            for l in 0..dim {
                w[(m + 1, l)] = -w[(m, l)];
            }
            b[m + 1] = phase;
        }
        m += 2;
    }
    RandomFeatureMap::from_parts(w, b, gamma)
}

/// `Phi[i, m] = scale * cos(w_m . x_i + b_m)`.
pub fn featurize(map: &RandomFeatureMap, x: &SampleSet) -> Result<DMatrix<f64>> {
    featurize_matrix(map, x.data())
}

pub(crate) fn featurize_matrix(map: &RandomFeatureMap, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(map.phases(x)?.map(|z| map.scale * z.cos()))
}

/// Gradients of the features with respect to the input point, stored as one
/// `n x M` slice per input coordinate: `slices[l][(i, m)] = dPhi[i, m] / dx^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGradients {
    pub slices: Vec<DMatrix<f64>>,
}

impl FeatureGradients {
    pub fn get(&self, i: usize, m: usize, l: usize) -> f64 {
        self.slices[l][(i, m)]
    }

    pub fn n(&self) -> usize {
        self.slices.first().map_or(0, DMatrix::nrows)
    }
}

/// `Gamma[i, m, l] = -scale * sin(w_m . x_i + b_m) * W[m, l]`.
pub fn featurize_grad(map: &RandomFeatureMap, x: &SampleSet) -> Result<FeatureGradients> {
    featurize_grad_matrix(map, x.data())
}

pub(crate) fn featurize_grad_matrix(map: &RandomFeatureMap, x: &DMatrix<f64>) -> Result<FeatureGradients> {
    let sines = map.phases(x)?.map(|z| -map.scale * z.sin());
    let slices = (0..map.dim())
        .map(|l| {
            let mut s = sines.clone();
            for (m, mut col) in s.column_iter_mut().enumerate() {
                col *= map.w[(m, l)];
            }
            s
        })
        .collect();
    Ok(FeatureGradients { slices })
}

/// Empirical centered feature covariance `c` and Dirichlet matrix `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrices {
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

pub fn build_feature_matrices(phi: &DMatrix<f64>, grads: &FeatureGradients) -> Result<FeatureMatrices> {
    let n = phi.nrows();
    let m = phi.ncols();
    if n == 0 {
        return Err(Error::input("no samples"));
    }
    if grads.slices.iter().any(|s| s.shape() != (n, m)) {
        return Err(Error::input("feature and gradient shapes disagree"));
    }
    let nf = n as f64;
    let mean = DVector::from_fn(m, |j, _| phi.column(j).mean());
    let mut c = phi.tr_mul(phi) / nf - &mean * mean.transpose();
    let mut d = DMatrix::zeros(m, m);
    for s in &grads.slices {
        d += s.tr_mul(s);
    }
    d /= nf;
    crate::kernel::symmetrize(&mut c);
    crate::kernel::symmetrize(&mut d);
    Ok(FeatureMatrices { c, d })
}

pub fn feature_matrices_for(map: &RandomFeatureMap, x: &DMatrix<f64>) -> Result<FeatureMatrices> {
    let phi = featurize_matrix(map, x)?;
    let grads = featurize_grad_matrix(map, x)?;
    build_feature_matrices(&phi, &grads)
}

/// Top generalized eigenpair of `(C, D + lambda I)`; the vector satisfies
/// `v^T (D + lambda I) v = 1`.
pub fn solve_regularized(mats: &FeatureMatrices, lambda: f64) -> Result<(f64, DVector<f64>)> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::input(format!("lambda must be positive, got {lambda}")));
    }
    let m = mats.d.nrows();
    let den = &mats.d + DMatrix::identity(m, m) * lambda;
    generalized_eig_max(&mats.c, &den)
}

pub fn estimate_poincare_rf(x: &SampleSet, map: &RandomFeatureMap, lambda: f64) -> Result<PoincareEstimate> {
    let mats = feature_matrices_for(map, x.data())?;
    let (value, v) = solve_regularized(&mats, lambda)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("num_features".to_string(), map.num_features() as f64);
    diagnostics.insert("top_eigenvalue".to_string(), value);
    let norm = v.norm();
    let eigvec = if norm > 0.0 { v / norm } else { v };
    Ok(PoincareEstimate {
        value: value.max(0.0),
        lambda,
        method: Method::RandomFeatures,
        eigvec,
        diagnostics,
    })
}
