//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use poincare::kernel::{cross_hessian, eval, grad_y};
use poincare::sampling::stream_rng;
use poincare::{GaussianKernelConfig, SampleSet};
use rand::Rng;

/// Maximizes `Var(f) / (E|grad f|^2 + lambda |f|_H^2)` over
/// `f = sum_j a_j K(., x_j) + sum_{j,i} b_ji d_{y_i} K(., y)|_{y = x_j}`
/// with a dense generalized eigensolve in that coordinate basis.
pub fn representer_oracle(x: &SampleSet, gamma: f64, lambda: f64) -> f64 {
    let cfg = GaussianKernelConfig::new(gamma).unwrap();
    let (n, d) = (x.n(), x.dim());
    let size = n + n * d;
    let pts: Vec<Vec<f64>> = (0..n).map(|i| x.row(i)).collect();

    // Values f(x_l) and gradients grad f(x_l) as linear maps of the coefficients.
    let mut values = DMatrix::zeros(n, size);
    let mut grads = DMatrix::zeros(n * d, size);
    let mut gram = DMatrix::zeros(size, size);
    for l in 0..n {
        for j in 0..n {
            let k = eval(&pts[l], &pts[j], &cfg).unwrap();
            let gy = grad_y(&pts[l], &pts[j], &cfg).unwrap();
            let h = cross_hessian(&pts[l], &pts[j], &cfg).unwrap();
            values[(l, j)] = k;
            gram[(l, j)] = k;
            for i in 0..d {
                values[(l, n + j * d + i)] = gy[i];
                gram[(l, n + j * d + i)] = gy[i];
                gram[(n + j * d + i, l)] = gy[i];
                // d/dx_a K(x, x_j) = -d/dy_a K(x, y) at y = x_j.
                grads[(l * d + i, j)] = -gy[i];
                for a in 0..d {
                    grads[(l * d + a, n + j * d + i)] = h[(a, i)];
                    gram[(n + l * d + a, n + j * d + i)] = h[(a, i)];
                }
            }
        }
    }
    let nf = n as f64;
    let center = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / nf);
    let num = values.transpose() * &center * &values / nf;
    let den = grads.transpose() * &grads / nf + &gram * lambda;
    let den = (&den + den.transpose()) * 0.5;
    let l = den.cholesky().expect("representer Gram must be positive definite").l();
    let linv = l.clone().try_inverse().unwrap();
    let w = &linv * num * linv.transpose();
    let w = (&w + w.transpose()) * 0.5;
    w.symmetric_eigen().eigenvalues.max()
}

pub fn spaced(n: usize, d: usize, seed: u64) -> SampleSet {
    // Jittered lattice keeps points at least ~0.8 apart so the basis Gram is well conditioned.
    let mut rng = stream_rng(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let coord = if d == 1 { i } else if k == 0 { i % 3 } else { i / 3 };
                    coord as f64 * 1.1 + rng.random_range(-0.15..0.15)
                })
                .collect()
        })
        .collect();
    SampleSet::from_rows(&rows).unwrap()
}

