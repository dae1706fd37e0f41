//! Gaussian kernel `K(x, y) = exp(-gamma * |x - y|^2)` with its first and
//! mixed second derivatives, and the Gram blocks used by the exact estimator.
//!
//! Flattened gradient indices are sample-major: the pair (sample `j`,
//! coordinate `i`) lives at `j * d + i`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::samples::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernelConfig {
    gamma: f64,
}

impl GaussianKernelConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!("kernel gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for GaussianKernelConfig {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn eval(x: &[f64], y: &[f64], cfg: &GaussianKernelConfig) -> Result<f64> {
    check_dims(x, y)?;
    Ok((-cfg.gamma * sq_dist(x, y)).exp())
}

/// Gradient of `K(x, y)` with respect to `y`: `2 gamma (x - y) K(x, y)`.
pub fn grad_y(x: &[f64], y: &[f64], cfg: &GaussianKernelConfig) -> Result<Vec<f64>> {
    check_dims(x, y)?;
    let k = (-cfg.gamma * sq_dist(x, y)).exp();
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| 2.0 * cfg.gamma * (a - b) * k)
        .collect())
}

/// Mixed Hessian `d^2 K / dx^i dy^j`.
pub fn cross_hessian(x: &[f64], y: &[f64], cfg: &GaussianKernelConfig) -> Result<DMatrix<f64>> {
    check_dims(x, y)?;
    let d = x.len();
    let g = cfg.gamma;
    let k = (-g * sq_dist(x, y)).exp();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let delta = if i == j { 2.0 * g } else { 0.0 };
        (delta - 4.0 * g * g * (x[i] - y[i]) * (x[j] - y[j])) * k
    }))
}

/// The three `1/n`-scaled Gram blocks: kernel values `kk` (n x n),
/// kernel/gradient cross terms `kg` (n x nd) and gradient/gradient terms
/// `gg` (nd x nd).
#[derive(Debug, Clone)]
pub struct GramBlocks {
    pub kk: DMatrix<f64>,
    pub kg: DMatrix<f64>,
    pub gg: DMatrix<f64>,
}

pub fn assemble_gram_blocks(x: &SampleSet, cfg: &GaussianKernelConfig) -> Result<GramBlocks> {
    let n = x.n();
    let d = x.dim();
    let g = cfg.gamma;
    let inv_n = 1.0 / n as f64;
    let data = x.data();

    let mut kk = DMatrix::zeros(n, n);
    let mut kg = DMatrix::zeros(n, n * d);
    let mut gg = DMatrix::zeros(n * d, n * d);
    let mut diff = vec![0.0; d];

    for k in 0..n {
        for j in 0..n {
            let mut r2 = 0.0;
            for (i, di) in diff.iter_mut().enumerate() {
                *di = data[(j, i)] - data[(k, i)];
                r2 += *di * *di;
            }
            let kv = (-g * r2).exp();
            kk[(j, k)] = kv * inv_n;
            for i in 0..d {
                kg[(j, k * d + i)] = 2.0 * g * diff[i] * kv * inv_n;
            }
            for ip in 0..d {
                for i in 0..d {
                    let delta = if i == ip { 2.0 * g } else { 0.0 };
                    gg[(j * d + i, k * d + ip)] =
                        (delta - 4.0 * g * g * diff[i] * diff[ip]) * kv * inv_n;
                }
            }
        }
    }
    symmetrize(&mut kk);
    symmetrize(&mut gg);
    Ok(GramBlocks { kk, kg, gg })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
