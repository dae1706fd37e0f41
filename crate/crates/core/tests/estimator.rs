mod common;

use common::{representer_oracle, spaced};
use nalgebra::DMatrix;
use poincare::estimator::{estimate_poincare_exact, lambda_grid, tune_lambda_constant};
use poincare::sampling::sample_gaussian;
use poincare::{GaussianKernelConfig, SampleSet};

#[test]
fn woodbury_reduction_matches_representer_basis() {
    let mut worst: f64 = 0.0;
    for (n, d, gamma) in [(6, 1, 1.0), (10, 1, 0.7), (8, 2, 1.0), (9, 2, 1.5), (5, 2, 0.8)] {
        for &lambda in &[1e-1, 1e-2] {
            let x = spaced(n, d, (n * 10 + d) as u64);
            let est = estimate_poincare_exact(&x, &GaussianKernelConfig::new(gamma).unwrap(), lambda).unwrap();
            let oracle = representer_oracle(&x, gamma, lambda);
            let rel = (est.value - oracle).abs() / oracle;
            worst = worst.max(rel);
            assert!(rel < 1e-8, "n={n} d={d} gamma={gamma} lambda={lambda}: {} vs {oracle}", est.value);
        }
    }
    assert!(worst < 1e-8);
}

#[test]
fn monotone_nonincreasing_in_lambda() {
    for seed in 0..10 {
        let x = sample_gaussian(&[0.0], &DMatrix::identity(1, 1), 40, 500 + seed).unwrap();
        let cfg = GaussianKernelConfig::new(1.0).unwrap();
        let vals: Vec<f64> = lambda_grid(40, 1.0)
            .iter()
            .map(|&l| estimate_poincare_exact(&x, &cfg, l).unwrap().value)
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "seed {seed}: {vals:?}");
    }
}

#[test]
fn permutation_invariant() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let x = sample_gaussian(&[0.0, 0.0], &cov, 30, 9).unwrap();
    let perm: Vec<usize> = (0..30).map(|i| (i * 7 + 3) % 30).collect();
    let cfg = GaussianKernelConfig::new(1.0).unwrap();
    let a = estimate_poincare_exact(&x, &cfg, 0.01).unwrap().value;
    let b = estimate_poincare_exact(&x.permuted(&perm), &cfg, 0.01).unwrap().value;
    assert!((a - b).abs() < 1e-9 * a);
}

#[test]
fn rescaling_data_and_bandwidth() {
    // est(sX, gamma / s^2, lambda) = s^2 est(X, gamma, s^2 lambda).
    let x = sample_gaussian(&[0.0], &DMatrix::identity(1, 1), 50, 4).unwrap();
    let s = 3.0;
    let xs = SampleSet::new(x.data() * s).unwrap();
    let lhs = estimate_poincare_exact(&xs, &GaussianKernelConfig::new(1.0 / (s * s)).unwrap(), 0.02).unwrap();
    let rhs = estimate_poincare_exact(&x, &GaussianKernelConfig::new(1.0).unwrap(), 0.02 * s * s).unwrap();
    assert!((lhs.value - s * s * rhs.value).abs() < 1e-8 * lhs.value);
}

#[test]
fn eigenvector_is_unit_and_value_is_rayleigh_quotient() {
    let x = sample_gaussian(&[0.0], &DMatrix::identity(1, 1), 25, 2).unwrap();
    let est = estimate_poincare_exact(&x, &GaussianKernelConfig::new(1.0).unwrap(), 0.05).unwrap();
    assert!((est.eigvec.norm() - 1.0).abs() < 1e-12);
    assert!(est.value >= 0.0 && est.diagnostics["eig_residual"] < 1e-8);
}

#[test]
fn tuning_picks_closest_calibration_mean() {
    let cfg = GaussianKernelConfig::new(1.0).unwrap();
    let sets: Vec<SampleSet> = (0..3)
        .map(|s| sample_gaussian(&[0.0], &DMatrix::identity(1, 1), 60, 70 + s).unwrap())
        .collect();
    let grid = [0.1, 1.0, 10.0];
    let t = tune_lambda_constant(&sets, &cfg, &grid, Some(1.0)).unwrap();
    let best = t
        .curve
        .iter()
        .min_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
        .unwrap();
    assert_eq!(t.best_c, best.0);
    // The curve is the mean over calibration sets.
    let manual: f64 = sets
        .iter()
        .map(|x| estimate_poincare_exact(x, &cfg, 1.0 / 60.0).unwrap().value)
        .sum::<f64>()
        / 3.0;
    assert!((t.curve[1].1 - manual).abs() < 1e-12);
    let none = tune_lambda_constant(&sets, &cfg, &grid, None).unwrap();
    assert!(!none.used_oracle && none.curve.is_empty());
}
