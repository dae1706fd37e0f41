//! Benchmark samplers and an Euler-Maruyama integrator for the overdamped
//! Langevin diffusion `dX = -grad V(X) dt + sqrt(2) dB`.
//!
//! All randomness comes from ChaCha streams keyed by `(seed, stream)`, so
//! results never depend on execution order.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::samples::SampleSet;

/// States whose largest absolute coordinate exceeds this abort the integrator.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn cholesky_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::input("covariance must be square"));
    }
    if crate::linalg::asymmetry(cov) > 1e-12 {
        return Err(Error::input("covariance must be symmetric"));
    }
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::input("covariance is not positive definite"))
}

fn draw_gaussian_row(rng: &mut ChaCha8Rng, mean: &[f64], chol: &DMatrix<f64>, out: &mut [f64]) {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    for i in 0..d {
        let mut acc = mean[i];
        for j in 0..=i {
            acc += chol[(i, j)] * z[j];
        }
        out[i] = acc;
    }
}

pub fn sample_gaussian(mean: &[f64], cov: &DMatrix<f64>, n: usize, seed: u64) -> Result<SampleSet> {
    if cov.nrows() != mean.len() {
        return Err(Error::input("mean and covariance dimensions differ"));
    }
    let chol = cholesky_factor(cov)?;
    let d = mean.len();
    let mut rng = stream_rng(seed, 0);
    let mut data = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        draw_gaussian_row(&mut rng, mean, &chol, &mut row);
        for j in 0..d {
            data[(i, j)] = row[j];
        }
    }
    SampleSet::new(data)
}

pub fn sample_gaussian_mixture(
    weights: &[f64],
    means: &[Vec<f64>],
    covs: &[DMatrix<f64>],
    n: usize,
    seed: u64,
) -> Result<SampleSet> {
    if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len() {
        return Err(Error::input("mixture needs matching weights, means and covariances"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::input("mixture weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("mixture weights sum to {total}, expected 1")));
    }
    if weights.len() == 1 {
        return sample_gaussian(&means[0], &covs[0], n, seed);
    }
    let d = means[0].len();
    if means.iter().any(|m| m.len() != d) || covs.iter().any(|c| c.nrows() != d) {
        return Err(Error::input("mixture components have inconsistent dimensions"));
    }
    let chols = covs.iter().map(cholesky_factor).collect::<Result<Vec<_>>>()?;
    let mut rng = stream_rng(seed, 0);
    let mut data = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (idx, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = idx;
                break;
            }
        }
        draw_gaussian_row(&mut rng, &means[k], &chols[k], &mut row);
        for j in 0..d {
            data[(i, j)] = row[j];
        }
    }
    SampleSet::new(data)
}

/// The symmetric two-component mixture `N(+-a/2, sigma^2)` in one dimension.
pub fn sample_two_gaussians(separation: f64, sigma: f64, n: usize, seed: u64) -> Result<SampleSet> {
    let cov = DMatrix::from_element(1, 1, sigma * sigma);
    sample_gaussian_mixture(
        &[0.5, 0.5],
        &[vec![-separation / 2.0], vec![separation / 2.0]],
        &[cov.clone(), cov],
        n,
        seed,
    )
}

/// Three isotropic Gaussians with means (0,0), (1,1), (2,2) in the plane.
pub fn sample_three_gaussians(sigma: f64, n: usize, seed: u64) -> Result<SampleSet> {
    let cov = DMatrix::identity(2, 2) * (sigma * sigma);
    sample_gaussian_mixture(
        &[1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0],
        &[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]],
        &[cov.clone(), cov.clone(), cov],
        n,
        seed,
    )
}

/// Standard exponential draws on the half-line.
pub fn sample_exponential(n: usize, seed: u64) -> Result<SampleSet> {
    let mut rng = stream_rng(seed, 0);
    let values: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    SampleSet::from_column(&values)
}

pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Potential `V` of a Gibbs measure `exp(-V)`, described through its gradient.
#[derive(Clone)]
pub enum PotentialSpec {
    /// `V(x) = sum_i x_i^2 / (2 s_i)`: the law `N(0, diag(s))`.
    Quadratic { variances: Vec<f64> },
    /// Negative log-density of an isotropic Gaussian mixture.
    GaussianMixtureNeglog {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variance: f64,
    },
    Custom { dim: usize, gradient: GradientFn },
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Quadratic { variances } => {
                f.debug_struct("Quadratic").field("variances", variances).finish()
            }
            PotentialSpec::GaussianMixtureNeglog { weights, means, variance } => f
                .debug_struct("GaussianMixtureNeglog")
                .field("weights", weights)
                .field("means", means)
                .field("variance", variance)
                .finish(),
            PotentialSpec::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish(),
        }
    }
}

impl PotentialSpec {
    /// Ornstein-Uhlenbeck potential for `N(0, variance I_d)`.
    pub fn ornstein_uhlenbeck(dim: usize, variance: f64) -> Self {
        PotentialSpec::Quadratic {
            variances: vec![variance; dim],
        }
    }

    /// Double well built from `N(+-a/2, sigma^2)` in one dimension.
    pub fn double_well(separation: f64, sigma: f64) -> Self {
        PotentialSpec::GaussianMixtureNeglog {
            weights: vec![0.5, 0.5],
            means: vec![vec![-separation / 2.0], vec![separation / 2.0]],
            variance: sigma * sigma,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PotentialSpec::Quadratic { variances } => variances.len(),
            PotentialSpec::GaussianMixtureNeglog { means, .. } => means.first().map_or(0, Vec::len),
            PotentialSpec::Custom { dim, .. } => *dim,
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            PotentialSpec::Quadratic { variances } => {
                for ((o, xi), s) in out.iter_mut().zip(x).zip(variances) {
                    *o = xi / s;
                }
            }
            PotentialSpec::GaussianMixtureNeglog { weights, means, variance } => {
                // Responsibilities via log-sum-exp.
                let logs: Vec<f64> = weights
                    .iter()
                    .zip(means)
                    .map(|(w, m)| {
                        let r2: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                        w.ln() - r2 / (2.0 * variance)
                    })
                    .collect();
                let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let resp: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
                let z: f64 = resp.iter().sum();
                for (i, o) in out.iter_mut().enumerate() {
                    let pulled: f64 = resp.iter().zip(means).map(|(r, m)| r * m[i]).sum::<f64>() / z;
                    *o = (x[i] - pulled) / variance;
                }
            }
            PotentialSpec::Custom { gradient, .. } => gradient(x, out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `(steps + 1) x d`, initial state first.
    pub states: DMatrix<f64>,
    pub dt: f64,
    pub seed: u64,
}

impl Trajectory {
    pub fn last(&self) -> Vec<f64> {
        let r = self.states.nrows() - 1;
        self.states.row(r).iter().copied().collect()
    }
}

/// One Euler-Maruyama step in place: `x <- x - grad V(x) dt + sqrt(2 dt) xi`.
fn em_step(
    pot: &PotentialSpec,
    x: &mut [f64],
    grad: &mut [f64],
    dt: f64,
    noise: Option<&mut ChaCha8Rng>,
) {
    pot.gradient(x, grad);
    let amp = (2.0 * dt).sqrt();
    match noise {
        Some(rng) => {
            for (xi, g) in x.iter_mut().zip(grad.iter()) {
                let z: f64 = StandardNormal.sample(rng);
                *xi += -g * dt + amp * z;
            }
        }
        None => {
            for (xi, g) in x.iter_mut().zip(grad.iter()) {
                *xi -= g * dt;
            }
        }
    }
}

fn check_state(x: &[f64], step: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD) {
        return Err(Error::numerical(format!(
            "Langevin trajectory blew up at step {step}"
        )));
    }
    Ok(())
}

pub fn langevin_euler_maruyama(
    pot: &PotentialSpec,
    x0: &[f64],
    dt: f64,
    steps: usize,
    seed: u64,
    noise_on: bool,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::input(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != pot.dim() {
        return Err(Error::input("initial state dimension does not match the potential"));
    }
    let d = x0.len();
    let mut rng = stream_rng(seed, 0);
    let mut states = DMatrix::zeros(steps + 1, d);
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; d];
    for (j, v) in x.iter().enumerate() {
        states[(0, j)] = *v;
    }
    for k in 1..=steps {
        em_step(pot, &mut x, &mut grad, dt, noise_on.then_some(&mut rng));
        check_state(&x, k)?;
        for (j, v) in x.iter().enumerate() {
            states[(k, j)] = *v;
        }
    }
    let times = (0..=steps).map(|k| k as f64 * dt).collect();
    Ok(Trajectory {
        times,
        states,
        dt,
        seed,
    })
}

/// Approximate draws from `exp(-V)` by a long run: `burn_in` steps, then one
/// state every `thin` steps.
pub fn langevin_stationary_samples(
    pot: &PotentialSpec,
    x0: &[f64],
    dt: f64,
    burn_in: usize,
    thin: usize,
    n: usize,
    seed: u64,
) -> Result<SampleSet> {
    if x0.len() != pot.dim() {
        return Err(Error::input("initial state dimension does not match the potential"));
    }
    let thin = thin.max(1);
    let d = x0.len();
    let mut rng = stream_rng(seed, 0);
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; d];
    let mut data = DMatrix::zeros(n, d);
    let mut step = 0;
    for _ in 0..burn_in {
        step += 1;
        em_step(pot, &mut x, &mut grad, dt, Some(&mut rng));
        check_state(&x, step)?;
    }
    for i in 0..n {
        for _ in 0..thin {
            step += 1;
            em_step(pot, &mut x, &mut grad, dt, Some(&mut rng));
            check_state(&x, step)?;
        }
        for j in 0..d {
            data[(i, j)] = x[j];
        }
    }
    SampleSet::new(data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    pub t: f64,
    /// Bias-corrected estimate of `Var_mu(P_t f)`, clamped at zero.
    pub variance: f64,
    pub std_error: f64,
    pub clamped: bool,
}

/// Nested Monte Carlo estimate of `t -> Var_mu(P_t f)`.
///
/// Each row of `starts` is a draw from `mu`; `P_t f` at that start is the
/// average of `f(X_t)` over `n_inner` independent trajectories. The outer
/// variance is corrected for inner noise by subtracting the mean inner
/// sample variance divided by `n_inner`. Grid times are rounded to whole
/// multiples of `dt`.
pub fn variance_decay_experiment(
    pot: &PotentialSpec,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    starts: &SampleSet,
    t_grid: &[f64],
    n_inner: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<DecayPoint>> {
    if n_inner < 2 {
        return Err(Error::input("variance decay needs at least 2 inner trajectories"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::input(format!("dt must be positive, got {dt}")));
    }
    if starts.dim() != pot.dim() {
        return Err(Error::input("start dimension does not match the potential"));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::input("time grid must be finite and nonnegative"));
    }
    let grid_steps: Vec<usize> = t_grid.iter().map(|t| (t / dt).round() as usize).collect();
    let max_steps = grid_steps.iter().copied().max().unwrap_or(0);
    let n_outer = starts.n();
    let d = starts.dim();
    let n_t = t_grid.len();

    // Per start: (inner mean, inner unbiased variance) at every grid time.
    let per_start: Vec<Result<Vec<(f64, f64)>>> = (0..n_outer)
        .into_par_iter()
        .map(|o| {
            let x0 = starts.row(o);
            let mut values = vec![vec![0.0; n_inner]; n_t];
            let mut grad = vec![0.0; d];
            for inner in 0..n_inner {
                let mut rng = stream_rng(seed, (o * n_inner + inner) as u64);
                let mut x = x0.clone();
                for (ti, &s) in grid_steps.iter().enumerate() {
                    if s == 0 {
                        values[ti][inner] = f(&x);
                    }
                }
                for k in 1..=max_steps {
                    em_step(pot, &mut x, &mut grad, dt, Some(&mut rng));
                    check_state(&x, k)?;
                    for (ti, &s) in grid_steps.iter().enumerate() {
                        if s == k {
                            values[ti][inner] = f(&x);
                        }
                    }
                }
            }
            Ok(values
                .iter()
                .map(|v| {
                    let m = v.iter().sum::<f64>() / n_inner as f64;
                    let s2 = v.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n_inner - 1) as f64;
                    (m, s2)
                })
                .collect())
        })
        .collect();
    let per_start = per_start.into_iter().collect::<Result<Vec<_>>>()?;

    let no = n_outer as f64;
    let points = (0..n_t)
        .map(|ti| {
            let grand = per_start.iter().map(|s| s[ti].0).sum::<f64>() / no;
            // Per-start contributions whose average is the corrected estimate.
            let z: Vec<f64> = per_start
                .iter()
                .map(|s| {
                    let dev = s[ti].0 - grand;
                    dev * dev * no / (no - 1.0) - s[ti].1 / n_inner as f64
                })
                .collect();
            let est = z.iter().sum::<f64>() / no;
            let var_z = z.iter().map(|v| (v - est) * (v - est)).sum::<f64>() / (no - 1.0);
            DecayPoint {
                t: grid_steps[ti] as f64 * dt,
                variance: est.max(0.0),
                std_error: (var_z / no).sqrt(),
                clamped: est < 0.0,
            }
        })
        .collect();
    Ok(points)
}

/// Empirical mean and covariance helpers for moment checks.
pub fn empirical_mean(x: &SampleSet) -> DVector<f64> {
    DVector::from_vec(x.column_means())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments_and_determinism() {
        let n = 100_000;
        let x = sample_gaussian(&[0.0, 0.0], &DMatrix::identity(2, 2), n, 11).unwrap();
        for m in x.column_means() {
            assert!(m.abs() < 3.0 / (n as f64).sqrt());
        }
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 4.0]));
        let y = sample_gaussian(&[1.0, -2.0], &cov, n, 12).unwrap();
        let c = y.covariance();
        assert!((c[(0, 0)] / 0.25 - 1.0).abs() < 0.05);
        assert!((c[(1, 1)] / 4.0 - 1.0).abs() < 0.05);
        let again = sample_gaussian(&[1.0, -2.0], &cov, n, 12).unwrap();
        assert_eq!(y, again);
    }

    #[test]
    fn rejects_non_spd_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(sample_gaussian(&[0.0, 0.0], &cov, 10, 0).unwrap_err().is_input());
    }

    #[test]
    fn mixture_validation_and_degenerate_case() {
        let cov = DMatrix::identity(1, 1);
        assert!(sample_gaussian_mixture(&[0.5, 0.6], &[vec![0.0], vec![1.0]], &[cov.clone(), cov.clone()], 10, 0).is_err());
        assert!(sample_gaussian_mixture(&[-0.5, 1.5], &[vec![0.0], vec![1.0]], &[cov.clone(), cov.clone()], 10, 0).is_err());
        let single = sample_gaussian_mixture(&[1.0], &[vec![0.5]], &[cov.clone()], 50, 3).unwrap();
        assert_eq!(single, sample_gaussian(&[0.5], &cov, 50, 3).unwrap());
    }

    #[test]
    fn exponential_moments() {
        let x = sample_exponential(100_000, 5).unwrap();
        assert!(x.data().iter().all(|&v| v >= 0.0));
        assert!((x.column_means()[0] - 1.0).abs() < 0.02);
    }

    #[test]
    fn three_gaussians_centered_on_diagonal() {
        let x = sample_three_gaussians(0.1, 3000, 1).unwrap();
        let m = x.column_means();
        assert!((m[0] - 1.0).abs() < 0.1 && (m[1] - 1.0).abs() < 0.1);
    }

    #[test]
    fn mixture_gradient_matches_finite_differences() {
        let pot = PotentialSpec::double_well(1.0, 0.3);
        let v = |x: f64| {
            let s2 = 0.09;
            -(0.5 * (-(x + 0.5).powi(2) / (2.0 * s2)).exp() + 0.5 * (-(x - 0.5).powi(2) / (2.0 * s2)).exp()).ln()
        };
        for x in [-1.2, -0.3, 0.0, 0.2, 0.9] {
            let mut g = [0.0];
            pot.gradient(&[x], &mut g);
            let h = 1e-6;
            let fd = (v(x + h) - v(x - h)) / (2.0 * h);
            assert!((g[0] - fd).abs() < 1e-5 * fd.abs().max(1.0), "{x}: {} vs {fd}", g[0]);
        }
    }

    #[test]
    fn noiseless_quadratic_flow() {
        let pot = PotentialSpec::ornstein_uhlenbeck(1, 1.0);
        let tr = langevin_euler_maruyama(&pot, &[1.0], 1e-3, 1000, 0, false).unwrap();
        assert!((tr.last()[0] - (-1f64).exp()).abs() < 5e-4);
        // Bitwise gradient descent.
        let mut x = 1.0f64;
        for _ in 0..1000 {
            x -= x * 1e-3;
        }
        assert_eq!(tr.last()[0], x);
        assert!((tr.times[1] - tr.times[0] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn blowup_is_reported() {
        let pot = PotentialSpec::Custom {
            dim: 1,
            gradient: Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0] * x[0]),
        };
        let err = langevin_euler_maruyama(&pot, &[2.0], 0.1, 10_000, 0, false).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref m) if m.contains("step")));
    }

    #[test]
    fn langevin_is_deterministic_per_seed() {
        let pot = PotentialSpec::ornstein_uhlenbeck(2, 1.0);
        let a = langevin_euler_maruyama(&pot, &[0.5, -0.5], 1e-2, 200, 9, true).unwrap();
        let b = langevin_euler_maruyama(&pot, &[0.5, -0.5], 1e-2, 200, 9, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decay_at_time_zero_is_empirical_variance() {
        let pot = PotentialSpec::ornstein_uhlenbeck(1, 1.0);
        let starts = sample_gaussian(&[0.0], &DMatrix::identity(1, 1), 400, 2).unwrap();
        let pts = variance_decay_experiment(&pot, &|x: &[f64]| x[0], &starts, &[0.0, 0.5], 4, 1e-2, 3)
            .unwrap();
        let col = starts.data().column(0);
        let m = col.mean();
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 399.0;
        assert!((pts[0].variance - var).abs() < 1e-12);
        assert!(pts[1].variance < pts[0].variance);
    }
}
