//! Linear reaction coordinates: maximize the random-feature Poincaré
//! estimate of projected samples `A x` over row-orthonormal `A` (p x d).
//!
//! Each iteration solves the inner generalized eigenproblem for `v`, then
//! takes one ascent step along the tangent-projected gradient of
//! `F(A, v) = v^T C_A v / v^T (D_A + lambda I) v`, mapped back onto the
//! manifold with a QR retraction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::random_features::{
    estimate_poincare_rf, feature_matrices_for, sample_features_antithetic, solve_regularized,
    RandomFeatureMap,
};
use crate::sampling::stream_rng;
use crate::samples::SampleSet;

/// Tolerance on `|A A^T - I|_F` for a valid Stiefel point.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    a: DMatrix<f64>,
}

pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    (a * a.transpose() - DMatrix::identity(a.nrows(), a.nrows())).norm()
}

impl StiefelPoint {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() > a.ncols() {
            return Err(Error::input(format!(
                "Stiefel point needs 0 < p <= d, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let defect = orthonormality_defect(&a);
        if defect > FEASIBILITY_TOL {
            return Err(Error::input(format!("rows are not orthonormal (defect {defect:e})")));
        }
        Ok(Self { a })
    }

    /// Row-orthonormalized Gaussian matrix.
    pub fn random(p: usize, d: usize, seed: u64) -> Result<Self> {
        if p == 0 || p > d {
            return Err(Error::input(format!("need 0 < p <= d, got p={p}, d={d}")));
        }
        let mut rng = stream_rng(seed, 0);
        let g = DMatrix::from_fn(p, d, |_, _| StandardNormal.sample(&mut rng));
        Ok(Self { a: orthonormalize_rows(&g)? })
    }

    /// The unit row `(cos theta, sin theta)`.
    pub fn from_angle(theta: f64) -> Self {
        Self {
            a: DMatrix::from_row_slice(1, 2, &[theta.cos(), theta.sin()]),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    pub fn defect(&self) -> f64 {
        orthonormality_defect(&self.a)
    }
}

/// `Q^T` from the thin QR of `M^T`, columns of `Q` signed so `diag(R) > 0`.
fn orthonormalize_rows(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    let qr = m.transpose().qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..p {
        let rii = r[(i, i)];
        if rii.abs() <= 1e-12 * scale {
            return Err(Error::numerical("rank-deficient matrix in retraction"));
        }
        if rii < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    Ok(q.transpose())
}

/// Affine map `x -> half_inv_cov (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenTransform {
    pub mean: DVector<f64>,
    pub half_inv_cov: DMatrix<f64>,
}

impl WhitenTransform {
    pub fn apply(&self, x: &SampleSet) -> Result<SampleSet> {
        if x.dim() != self.mean.len() {
            return Err(Error::input("dimension mismatch in whitening"));
        }
        let data = x.data();
        let centered = DMatrix::from_fn(x.n(), x.dim(), |i, j| data[(i, j)] - self.mean[j]);
        SampleSet::new(centered * &self.half_inv_cov)
    }
}

/// Zero mean and identity covariance through the inverse principal square
/// root of the sample covariance.
pub fn whiten(x: &SampleSet) -> Result<(SampleSet, WhitenTransform)> {
    let cov = x.covariance();
    let eig = cov.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::input(
            "sample covariance is singular; reduce the dimension before whitening",
        ));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let mut half_inv_cov = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    crate::kernel::symmetrize(&mut half_inv_cov);
    let transform = WhitenTransform {
        mean: DVector::from_vec(x.column_means()),
        half_inv_cov,
    };
    Ok((transform.apply(x)?, transform))
}

/// Rows `A x_i`.
pub fn project_samples(x: &SampleSet, a: &StiefelPoint) -> Result<SampleSet> {
    if x.dim() != a.d() {
        return Err(Error::input(format!(
            "projection expects dimension {}, samples have {}",
            a.d(),
            x.dim()
        )));
    }
    SampleSet::new(x.data() * a.matrix().transpose())
}

fn check_v(v: &DVector<f64>, map: &RandomFeatureMap) -> Result<()> {
    if v.len() != map.num_features() {
        return Err(Error::input("coefficient vector length differs from the feature count"));
    }
    if v.iter().all(|&c| c == 0.0) {
        return Err(Error::input("coefficient vector must be nonzero"));
    }
    Ok(())
}

pub fn objective_f(
    a: &StiefelPoint,
    v: &DVector<f64>,
    x: &SampleSet,
    map: &RandomFeatureMap,
    lambda: f64,
) -> Result<f64> {
    check_v(v, map)?;
    let projected = project_samples(x, a)?;
    let mats = feature_matrices_for(map, projected.data())?;
    let num = v.dot(&(&mats.c * v));
    let den = v.dot(&(&mats.d * v)) + lambda * v.norm_squared();
    Ok(num / den)
}

/// `v*(A)` and `max_v F(A, v)`.
pub fn inner_solve_v(
    a: &StiefelPoint,
    x: &SampleSet,
    map: &RandomFeatureMap,
    lambda: f64,
) -> Result<(f64, DVector<f64>)> {
    let projected = project_samples(x, a)?;
    let mats = feature_matrices_for(map, projected.data())?;
    solve_regularized(&mats, lambda)
}

/// Ambient gradient `dF/dA` at fixed `v`.
pub fn euclid_grad_a(
    a: &StiefelPoint,
    v: &DVector<f64>,
    x: &SampleSet,
    map: &RandomFeatureMap,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_v(v, map)?;
    let xm = x.data();
    let proj = project_samples(x, a)?;
    let n = x.n() as f64;
    let s = map.scale;
    let w = &map.w;

    let mut z = proj.data() * w.transpose();
    for mut row in z.row_iter_mut() {
        for (val, b) in row.iter_mut().zip(map.b.iter()) {
            *val += b;
        }
    }
    let cos = z.map(f64::cos);
    let sin = z.map(f64::sin);

    // u_i = s sum_m v_m cos z_im, h_il = -s sum_m v_m w_ml sin z_im.
    let u = &cos * v * s;
    let u_mean = u.mean();
    let vw = DMatrix::from_fn(w.nrows(), w.ncols(), |m, l| v[m] * w[(m, l)]);
    let h = &sin * &vw * (-s);
    let num = u.iter().map(|ui| (ui - u_mean).powi(2)).sum::<f64>() / n;
    let den = h.norm_squared() / n + lambda * v.norm_squared();

    // Sensitivities with respect to the phases z_im.
    let hw = &h * w.transpose();
    let g_num = DMatrix::from_fn(z.nrows(), z.ncols(), |i, m| {
        (2.0 / n) * (u[i] - u_mean) * (-s * sin[(i, m)] * v[m])
    });
    let g_den = DMatrix::from_fn(z.nrows(), z.ncols(), |i, m| {
        (2.0 / n) * (-s * v[m] * cos[(i, m)]) * hw[(i, m)]
    });
    let g_f = (g_num * den - g_den * num) / (den * den);
    // dz_im / dA = w_m x_i^T.
    Ok(w.transpose() * g_f.transpose() * xm)
}

/// `G - sym(G A^T) A`.
pub fn tangent_project(a: &StiefelPoint, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if g.shape() != a.matrix().shape() {
        return Err(Error::input("gradient shape differs from the point"));
    }
    let gat = g * a.matrix().transpose();
    let sym = (&gat + gat.transpose()) * 0.5;
    Ok(g - sym * a.matrix())
}

/// QR retraction of `A + step * xi`.
pub fn retract(a: &StiefelPoint, xi: &DMatrix<f64>, step: f64) -> Result<StiefelPoint> {
    if xi.shape() != a.matrix().shape() {
        return Err(Error::input("tangent shape differs from the point"));
    }
    if step == 0.0 || xi.iter().all(|&v| v == 0.0) {
        return Ok(a.clone());
    }
    let moved = a.matrix() + xi * step;
    Ok(StiefelPoint {
        a: orthonormalize_rows(&moved)?,
    })
}

/// Angle of a 1x2 Stiefel point, reduced to `[0, pi)`.
pub fn recovered_angle(a: &StiefelPoint) -> f64 {
    let m = a.matrix();
    let theta = m[(0, 1)].atan2(m[(0, 0)]).rem_euclid(PI);
    if theta >= PI {
        0.0
    } else {
        theta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub num_features: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub steps: usize,
    pub step_size: f64,
    pub restarts: usize,
    pub seed: u64,
    pub backtracking: bool,
    pub max_halvings: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            num_features: 200,
            lambda: 1e-2,
            gamma: 1.0,
            steps: 100,
            step_size: 0.1,
            restarts: 5,
            seed: 0,
            backtracking: true,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionCoordinateModel {
    /// Projection acting on whitened coordinates.
    pub a: StiefelPoint,
    /// `(iteration, max_v F)`; ends early when backtracking finds no ascent step.
    pub objective_trace: Vec<(usize, f64)>,
    pub v: DVector<f64>,
    pub map: RandomFeatureMap,
    pub lambda: f64,
    pub whitening: WhitenTransform,
    pub restart: usize,
    /// Final `max_v F` of every restart, in restart order.
    pub restart_values: Vec<f64>,
    /// Largest `|A A^T - I|_F` over all iterates of all restarts.
    pub max_defect: f64,
}

impl ReactionCoordinateModel {
    pub fn final_value(&self) -> f64 {
        self.objective_trace.last().map_or(0.0, |t| t.1)
    }

    /// Unit directions in the original coordinates: rows of `A W`, normalized.
    pub fn original_directions(&self) -> DMatrix<f64> {
        let mut dirs = self.a.matrix() * &self.whitening.half_inv_cov;
        for mut row in dirs.row_iter_mut() {
            let n = row.norm();
            row /= n;
        }
        dirs
    }
}

struct RestartRun {
    a: StiefelPoint,
    trace: Vec<(usize, f64)>,
    v: DVector<f64>,
    map: RandomFeatureMap,
    max_defect: f64,
}

fn run_restart(x: &SampleSet, p: usize, cfg: &LearnConfig, restart: usize) -> Result<RestartRun> {
    let mut seeds = stream_rng(cfg.seed, restart as u64);
    let map = sample_features_antithetic(p, cfg.num_features, cfg.gamma, seeds.random())?;
    let mut a = StiefelPoint::random(p, x.dim(), seeds.random())?;
    let (mut value, mut v) = inner_solve_v(&a, x, &map, cfg.lambda)?;
    let mut trace = vec![(0, value)];
    let mut max_defect = a.defect();
    let mut last_step = cfg.step_size;
    for t in 1..=cfg.steps {
        let g = euclid_grad_a(&a, &v, x, &map, cfg.lambda)?;
        let xi = tangent_project(&a, &g)?;
        // Start from twice the last accepted step, never above the configured one.
        let mut step = if cfg.backtracking {
            (2.0 * last_step).min(cfg.step_size)
        } else {
            cfg.step_size
        };
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let candidate = match retract(&a, &xi, step) {
                Ok(c) => c,
                Err(_) => {
                    step *= 0.5;
                    continue;
                }
            };
            let (cv, cvec) = inner_solve_v(&candidate, x, &map, cfg.lambda)?;
            if !cfg.backtracking || cv >= value {
                last_step = step;
                accepted = Some((candidate, cv, cvec));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((candidate, cv, cvec)) => {
                max_defect = max_defect.max(candidate.defect());
                a = candidate;
                value = cv;
                v = cvec;
                trace.push((t, value));
            }
            // No ascent step survived the halvings: a local maximum at this resolution.
            None => break,
        }
    }
    Ok(RestartRun {
        a,
        trace,
        v,
        map,
        max_defect,
    })
}

/// Whitens `x`, then runs the alternating eigen/ascent scheme from
/// `cfg.restarts` random starts and keeps the best final objective (ties go
/// to the lowest restart index).
pub fn learn_reaction_coordinate(x: &SampleSet, p: usize, cfg: &LearnConfig) -> Result<ReactionCoordinateModel> {
    if p == 0 || p >= x.dim() {
        return Err(Error::input(format!(
            "reaction coordinate dimension must satisfy 0 < p < d, got p={p}, d={}",
            x.dim()
        )));
    }
    if cfg.restarts == 0 || cfg.num_features == 0 {
        return Err(Error::input("need at least one restart and one feature"));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda > 0.0 && cfg.step_size > 0.0) {
        return Err(Error::input("lambda and step size must be positive"));
    }
    let (white, whitening) = whiten(x)?;
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(&white, p, cfg, r))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let restart_values: Vec<f64> = runs.iter().map(|r| r.trace.last().map_or(0.0, |t| t.1)).collect();
    let mut best = 0;
    for (i, &val) in restart_values.iter().enumerate() {
        if val > restart_values[best] + 1e-12 {
            best = i;
        }
    }
    let max_defect = runs.iter().map(|r| r.max_defect).fold(0.0, f64::max);
    let run = runs.into_iter().nth(best).expect("at least one restart");
    Ok(ReactionCoordinateModel {
        a: run.a,
        objective_trace: run.trace,
        v: run.v,
        map: run.map,
        lambda: cfg.lambda,
        whitening,
        restart: best,
        restart_values,
        max_defect,
    })
}

/// Random-feature estimate of the samples projected on `(cos theta, sin theta)`
/// for each angle, with one shared antithetic feature draw.
pub fn sweep_angle_1d(
    x: &SampleSet,
    thetas: &[f64],
    num_features: usize,
    lambda: f64,
    gamma: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if x.dim() != 2 {
        return Err(Error::input(format!("angle sweep needs 2-D samples, got {}", x.dim())));
    }
    let map = sample_features_antithetic(1, num_features, gamma, seed)?;
    thetas
        .iter()
        .map(|&theta| {
            let proj = project_samples(x, &StiefelPoint::from_angle(theta))?;
            Ok((theta, estimate_poincare_rf(&proj, &map, lambda)?.value))
        })
        .collect()
}

/// `count` equally spaced angles on `[0, pi)`.
pub fn angle_grid(count: usize) -> Vec<f64> {
    (0..count).map(|k| PI * k as f64 / count as f64).collect()
}
