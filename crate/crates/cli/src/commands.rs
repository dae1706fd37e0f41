//! The six experiment commands. Each is a pure function of its parameters
//! and seed, apart from optional wall-clock columns.

use std::time::Instant;

use nalgebra::DMatrix;
use poincare::diffusion_maps::{estimate_poincare_dm, DiffusionMapConfig, Normalization};
use poincare::estimator::{estimate_poincare_exact, tune_lambda_constant, DEFAULT_C_GRID, DEFAULT_C_LAMBDA};
use poincare::hermite::{regularized_poincare_detailed, HermiteModel};
use poincare::random_features::{estimate_poincare_rf, sample_features_antithetic};
use poincare::sampling::{
    sample_gaussian, sample_two_gaussians, variance_decay_experiment, PotentialSpec,
};
use poincare::stiefel::{angle_grid, learn_reaction_coordinate, recovered_angle, sweep_angle_1d, whiten, LearnConfig};
use poincare::{GaussianKernelConfig, Method, SampleSet};
use rayon::prelude::*;

use crate::config::Params;
use crate::data::{derive_seed, tags, DataSpec, DATA_KEYS};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, fmt_opt, ResultFile, Table};

pub const COMMANDS: &[&str] = &["estimate", "sweep-n", "mixture-growth", "learn-rc", "oracle", "langevin-check"];

const COMMON_KEYS: &[&str] = &["seed", "experiment", "timing", "method"];
const ESTIMATOR_KEYS: &[&str] = &[
    "gamma",
    "lambda",
    "c_lambda",
    "c_grid",
    "oracle",
    "calib_sets",
    "features",
    "c_eps",
    "c_eps_grid",
    "normalization",
];

/// Default grid for `c` in `eps = c / n^(1/4)`.
pub const DEFAULT_C_EPS_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_C_EPS: f64 = 1.0;

/// Every key accepted by `command`.
pub fn allowed_keys(command: &str) -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = COMMON_KEYS.to_vec();
    let extra: &[&[&'static str]] = match command {
        "estimate" => &[DATA_KEYS, ESTIMATOR_KEYS, &["n", "reps"]],
        "sweep-n" => &[DATA_KEYS, ESTIMATOR_KEYS, &["n_grid", "reps", "methods"]],
        "mixture-growth" => &[ESTIMATOR_KEYS, &["n", "reps", "a_grid", "sigma"]],
        "learn-rc" => &[
            DATA_KEYS,
            &["n", "p", "features", "lambda", "gamma", "steps", "step_size", "restarts", "sweep", "sweep_points"],
        ],
        "oracle" => &[&["a", "variance", "gamma", "m", "kappas", "cross_check", "cross_kappas", "n", "reps", "features"]],
        "langevin-check" => &[&[
            "potential", "variance", "separation", "sigma", "t_max", "t_points", "n_outer", "n_inner", "dt",
            "estimate_n", "c_lambda", "gamma", "poincare",
        ]],
        _ => &[],
    };
    for group in extra {
        keys.extend_from_slice(group);
    }
    keys
}

/// Output of one command run.
#[derive(Debug, Clone)]
pub struct Report {
    pub result: ResultFile,
    /// Secondary file (learned model) for `learn-rc`.
    pub model: Option<ResultFile>,
    /// Rows recorded as failures.
    pub flagged: usize,
    /// Whether flagged rows should turn into a nonzero exit code.
    pub fail_on_flagged: bool,
}

pub fn run(params: &Params) -> CliResult<Report> {
    let command = params.command().to_string();
    if !COMMANDS.contains(&command.as_str()) {
        return Err(CliError::Config(format!("unknown command '{command}'")));
    }
    params.check_keys(&allowed_keys(&command))?;
    let seed = params.u64_or("seed", 0)?;
    let (table, model, flagged, fail_on_flagged) = match command.as_str() {
        "estimate" => {
            let (t, f) = cmd_estimate(params, seed)?;
            (t, None, f, true)
        }
        "sweep-n" => {
            let (t, f) = cmd_sweep_n(params, seed)?;
            (t, None, f, false)
        }
        "mixture-growth" => {
            let (t, f) = cmd_mixture_growth(params, seed)?;
            (t, None, f, false)
        }
        "learn-rc" => {
            let (t, m) = cmd_learn_rc(params, seed)?;
            (t, Some(m), 0, true)
        }
        "oracle" => {
            let (t, f) = cmd_oracle(params, seed)?;
            (t, None, f, true)
        }
        _ => (cmd_langevin_check(params, seed)?, None, 0, true),
    };
    Ok(Report {
        result: ResultFile::new(params, seed, table),
        model: model.map(|m| ResultFile::new(params, seed, m)),
        flagged,
        fail_on_flagged,
    })
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    (out, timing.then(|| start.elapsed().as_secs_f64()))
}

fn status_of<T>(r: &poincare::Result<T>) -> String {
    match r {
        Ok(_) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Estimator options shared by `estimate`, `sweep-n` and `mixture-growth`.
#[derive(Debug, Clone)]
struct EstimatorSettings {
    kernel: GaussianKernelConfig,
    lambda: Option<f64>,
    c_lambda: Option<f64>,
    c_grid: Vec<f64>,
    oracle: Option<f64>,
    calib_sets: usize,
    features: usize,
    c_eps: Option<f64>,
    c_eps_grid: Vec<f64>,
    normalization: Normalization,
}

impl EstimatorSettings {
    fn from_params(p: &Params, data: Option<&DataSpec>) -> CliResult<Self> {
        let oracle = match p.raw("oracle") {
            None => None,
            Some("analytic") => Some(
                data.and_then(DataSpec::analytic_constant)
                    .ok_or_else(|| CliError::Config("oracle=analytic needs a gaussian or exponential distribution".into()))?,
            ),
            Some(_) => Some(p.positive_f64_or("oracle", 1.0)?),
        };
        let normalization = match p.str_or("normalization", "fokker_planck").as_str() {
            "fokker_planck" => Normalization::FokkerPlanck,
            "laplace_beltrami" => Normalization::LaplaceBeltrami,
            other => return Err(CliError::Config(format!("unknown normalization '{other}'"))),
        };
        let lambda = p.f64_opt("lambda")?;
        let c_lambda = p.f64_opt("c_lambda")?;
        let c_eps = p.f64_opt("c_eps")?;
        if [lambda, c_lambda, c_eps].iter().flatten().any(|v| *v <= 0.0) {
            return Err(CliError::Config("lambda, c_lambda and c_eps must be positive".into()));
        }
        Ok(Self {
            kernel: GaussianKernelConfig::new(p.positive_f64_or("gamma", 1.0)?)?,
            lambda,
            c_lambda,
            c_grid: p.f64_list_or("c_grid", &DEFAULT_C_GRID)?,
            oracle,
            calib_sets: p.usize_or("calib_sets", 5)?.max(1),
            features: p.usize_or("features", 2000)?,
            c_eps,
            c_eps_grid: p.f64_list_or("c_eps_grid", &DEFAULT_C_EPS_GRID)?,
            normalization,
        })
    }

    /// `(c, reg)`: `C_lambda` and `lambda` for kernel methods, `c_eps` and
    /// `eps` for diffusion maps. Tuning against the oracle uses held-out
    /// calibration draws; random features reuse the exact-estimator tuning.
    fn regularization(&self, method: Method, data: &DataSpec, n: usize, seed: u64) -> CliResult<(Option<f64>, f64)> {
        let calibration = || -> CliResult<Vec<SampleSet>> {
            (0..self.calib_sets)
                .map(|j| data.sample(n, derive_seed(seed, &[tags::CALIBRATION, n as u64, j as u64])))
                .collect()
        };
        let n_eff = if let DataSpec::File(x) = data { x.n() } else { n };
        match method {
            Method::Exact | Method::RandomFeatures => {
                if let Some(l) = self.lambda {
                    return Ok((None, l));
                }
                let c = match (self.c_lambda, self.oracle) {
                    (Some(c), _) => c,
                    (None, Some(o)) => tune_lambda_constant(&calibration()?, &self.kernel, &self.c_grid, Some(o))?.best_c,
                    (None, None) => DEFAULT_C_LAMBDA,
                };
                Ok((Some(c), c / n_eff as f64))
            }
            Method::DiffusionMaps => {
                let c = match (self.c_eps, self.oracle) {
                    (Some(c), _) => c,
                    (None, Some(o)) => {
                        let sets = calibration()?;
                        let mut best: Option<(f64, f64)> = None;
                        for &c in &self.c_eps_grid {
                            let vals: Vec<f64> = sets
                                .iter()
                                .filter_map(|x| self.dm(x, c).ok())
                                .collect();
                            if vals.is_empty() {
                                continue;
                            }
                            let dist = (mean_sd(&vals).0 - o).abs();
                            if best.map_or(true, |(_, d)| dist < d) {
                                best = Some((c, dist));
                            }
                        }
                        best.ok_or_else(|| CliError::Numerical("every calibration estimate failed".into()))?.0
                    }
                    (None, None) => DEFAULT_C_EPS,
                };
                Ok((Some(c), DiffusionMapConfig::scaled(c, n_eff)?.epsilon))
            }
            Method::HermiteOracle => Err(CliError::Config("hermite is not a sample estimator".into())),
        }
    }

    fn dm(&self, x: &SampleSet, c_eps: f64) -> poincare::Result<f64> {
        let cfg = DiffusionMapConfig::scaled(c_eps, x.n())?.with_normalization(self.normalization);
        Ok(estimate_poincare_dm(x, &cfg)?.value)
    }

    fn estimate(&self, method: Method, x: &SampleSet, reg: f64, feature_seed: u64) -> poincare::Result<f64> {
        match method {
            Method::Exact => Ok(estimate_poincare_exact(x, &self.kernel, reg)?.value),
            Method::RandomFeatures => {
                let map = sample_features_antithetic(x.dim(), self.features, self.kernel.gamma(), feature_seed)?;
                Ok(estimate_poincare_rf(x, &map, reg)?.value)
            }
            Method::DiffusionMaps => {
                let cfg = DiffusionMapConfig::new(reg)?.with_normalization(self.normalization);
                Ok(estimate_poincare_dm(x, &cfg)?.value)
            }
            Method::HermiteOracle => Err(poincare::Error::Input("hermite is not a sample estimator".into())),
        }
    }
}

fn parse_method(s: &str) -> CliResult<Method> {
    let m: Method = s.parse().map_err(|e: poincare::Error| CliError::Config(e.to_string()))?;
    if m == Method::HermiteOracle {
        return Err(CliError::Config("method must be one of exact, rf, dm".into()));
    }
    Ok(m)
}

pub const ESTIMATE_COLUMNS: &[&str] = &[
    "kind", "experiment", "method", "distribution", "n", "dim", "gamma", "c", "reg", "repetition", "estimate", "mean",
    "sd", "mean_abs_err", "ok_reps", "status", "wall_time_s",
];

/// Repetition rows plus one summary row for a single (method, n) point.
/// Returns the number of failed repetitions.
#[allow(clippy::too_many_arguments)]
fn estimate_point(
    table: &mut Table,
    settings: &EstimatorSettings,
    data: &DataSpec,
    method: Method,
    n: usize,
    reps: usize,
    seed: u64,
    experiment: &str,
    timing: bool,
) -> CliResult<usize> {
    let (c, reg) = settings.regularization(method, data, n, seed)?;
    let runs: Vec<(CliResult<(poincare::Result<f64>, usize, usize)>, Option<f64>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            timed(timing, || {
                let x = data.sample(n, derive_seed(seed, &[tags::DATA, n as u64, rep as u64]))?;
                let est = settings.estimate(method, &x, reg, derive_seed(seed, &[tags::FEATURES, n as u64, rep as u64]));
                Ok((est, x.n(), x.dim()))
            })
        })
        .collect();
    let common = || -> Vec<(&'static str, String)> {
        vec![
            ("experiment", experiment.to_string()),
            ("method", method.as_str().to_string()),
            ("distribution", data.name().to_string()),
            ("gamma", fmt_f64(settings.kernel.gamma())),
            ("c", fmt_opt(c)),
            ("reg", fmt_f64(reg)),
        ]
    };
    let mut ok = Vec::new();
    let mut failed = 0;
    let mut shape = (n, 0);
    for (rep, (run, wall)) in runs.into_iter().enumerate() {
        let (est, n_actual, dim) = run?;
        shape = (n_actual, dim);
        let mut cells = common();
        cells.extend([
            ("kind", "rep".to_string()),
            ("n", n_actual.to_string()),
            ("dim", dim.to_string()),
            ("repetition", rep.to_string()),
            ("status", status_of(&est)),
            ("wall_time_s", fmt_opt(wall)),
        ]);
        match est {
            Ok(v) if v.is_finite() => {
                ok.push(v);
                cells.push(("estimate", fmt_f64(v)));
            }
            Ok(v) => {
                failed += 1;
                cells.retain(|(k, _)| *k != "status");
                cells.push(("status", "error: non-finite estimate".into()));
                cells.push(("estimate", fmt_f64(v)));
            }
            Err(_) => failed += 1,
        }
        table.push(&cells);
    }
    let mut cells = common();
    cells.extend([
        ("kind", "summary".to_string()),
        ("n", shape.0.to_string()),
        ("dim", shape.1.to_string()),
        ("ok_reps", ok.len().to_string()),
        ("status", if failed == 0 { "ok".into() } else { format!("flagged: {failed} failed") }),
    ]);
    if !ok.is_empty() {
        let (mean, sd) = mean_sd(&ok);
        cells.push(("mean", fmt_f64(mean)));
        cells.push(("sd", fmt_f64(sd)));
        if let Some(o) = settings.oracle {
            let mae = ok.iter().map(|v| (v - o).abs()).sum::<f64>() / ok.len() as f64;
            cells.push(("mean_abs_err", fmt_f64(mae)));
        }
    }
    table.push(&cells);
    Ok(failed)
}

pub fn cmd_estimate(p: &Params, seed: u64) -> CliResult<(Table, usize)> {
    let data = DataSpec::from_params(p, "gaussian")?;
    let settings = EstimatorSettings::from_params(p, Some(&data))?;
    let method = parse_method(&p.str_or("method", "exact"))?;
    let n = p.usize_or("n", 500)?;
    let reps = p.usize_or("reps", 1)?.max(1);
    let experiment = p.str_or("experiment", "estimate");
    let mut table = Table::new(ESTIMATE_COLUMNS);
    let failed = estimate_point(&mut table, &settings, &data, method, n, reps, seed, &experiment, p.bool_or("timing", false)?)?;
    Ok((table, failed))
}

pub fn cmd_sweep_n(p: &Params, seed: u64) -> CliResult<(Table, usize)> {
    let data = DataSpec::from_params(p, "gaussian")?;
    let mut settings = EstimatorSettings::from_params(p, Some(&data))?;
    if settings.oracle.is_none() {
        settings.oracle = data.analytic_constant();
    }
    let methods: Vec<Method> = match p.raw("method") {
        Some(m) => vec![parse_method(m)?],
        None => p
            .str_list_or("methods", &["exact", "dm"])
            .iter()
            .map(|m| parse_method(m))
            .collect::<CliResult<_>>()?,
    };
    let n_grid = p.usize_list_or("n_grid", &[50, 100, 200, 400, 800])?;
    let reps = p.usize_or("reps", 20)?.max(1);
    let experiment = p.str_or("experiment", "sweep-n");
    let timing = p.bool_or("timing", false)?;
    let mut table = Table::new(ESTIMATE_COLUMNS);
    let mut failed = 0;
    for &n in &n_grid {
        for &method in &methods {
            failed += estimate_point(&mut table, &settings, &data, method, n, reps, seed, &experiment, timing)?;
        }
    }
    Ok((table, failed))
}

pub const MIXTURE_COLUMNS: &[&str] = &[
    "kind", "experiment", "method", "n", "a", "sigma", "gamma", "c", "reg", "repetition", "estimate", "mean", "median",
    "sd", "slope", "intercept", "r2", "status", "wall_time_s",
];

/// Least-squares fit `y = intercept + slope x`; returns `(slope, intercept, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

pub fn cmd_mixture_growth(p: &Params, seed: u64) -> CliResult<(Table, usize)> {
    let settings = EstimatorSettings::from_params(p, None)?;
    let method = parse_method(&p.str_or("method", "exact"))?;
    let n = p.usize_or("n", 500)?;
    let reps = p.usize_or("reps", 5)?.max(1);
    let sigma = p.positive_f64_or("sigma", 0.1)?;
    let default_grid: Vec<f64> = (4..=12).map(|k| k as f64 / 10.0).collect();
    let a_grid = p.f64_list_or("a_grid", &default_grid)?;
    let experiment = p.str_or("experiment", "mixture-growth");
    let timing = p.bool_or("timing", false)?;
    let mut table = Table::new(MIXTURE_COLUMNS);
    let mut failed = 0;
    let mut fit_points = Vec::new();
    for (ai, &a) in a_grid.iter().enumerate() {
        let data = DataSpec::TwoGaussians { separation: a, sigma };
        let (c, reg) = settings.regularization(method, &data, n, derive_seed(seed, &[ai as u64]))?;
        let runs: Vec<(poincare::Result<f64>, Option<f64>)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                timed(timing, || {
                    let x = sample_two_gaussians(a, sigma, n, derive_seed(seed, &[tags::DATA, ai as u64, rep as u64]))?;
                    settings.estimate(method, &x, reg, derive_seed(seed, &[tags::FEATURES, ai as u64, rep as u64]))
                })
            })
            .collect();
        let common = vec![
            ("experiment", experiment.clone()),
            ("method", method.as_str().to_string()),
            ("n", n.to_string()),
            ("a", fmt_f64(a)),
            ("sigma", fmt_f64(sigma)),
            ("gamma", fmt_f64(settings.kernel.gamma())),
            ("c", fmt_opt(c)),
            ("reg", fmt_f64(reg)),
        ];
        let mut ok = Vec::new();
        for (rep, (est, wall)) in runs.into_iter().enumerate() {
            let mut cells = common.clone();
            cells.extend([
                ("kind", "rep".to_string()),
                ("repetition", rep.to_string()),
                ("status", status_of(&est)),
                ("wall_time_s", fmt_opt(wall)),
            ]);
            match est {
                Ok(v) => {
                    cells.push(("estimate", fmt_f64(v)));
                    if v.is_finite() {
                        ok.push(v);
                    } else {
                        failed += 1;
                    }
                }
                Err(_) => failed += 1,
            }
            table.push(&cells);
        }
        let mut cells = common.clone();
        cells.push(("kind", "summary".to_string()));
        if ok.is_empty() {
            cells.push(("status", "flagged: no successful repetition".into()));
        } else {
            let (mean, sd) = mean_sd(&ok);
            let med = median(&ok);
            cells.extend([
                ("mean", fmt_f64(mean)),
                ("median", fmt_f64(med)),
                ("sd", fmt_f64(sd)),
                ("status", "ok".into()),
            ]);
            if med > 0.0 {
                fit_points.push((a, med.ln()));
            }
        }
        table.push(&cells);
    }
    let xs: Vec<f64> = fit_points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
    let mut cells = vec![
        ("kind", "fit".to_string()),
        ("experiment", experiment),
        ("method", method.as_str().to_string()),
    ];
    match linear_fit(&xs, &ys) {
        Some((slope, intercept, r2)) => cells.extend([
            ("slope", fmt_f64(slope)),
            ("intercept", fmt_f64(intercept)),
            ("r2", fmt_f64(r2)),
            ("status", "ok".into()),
        ]),
        None => cells.push(("status", "flagged: too few points for a fit".into())),
    }
    table.push(&cells);
    Ok((table, failed))
}

pub const LEARN_COLUMNS: &[&str] = &[
    "kind", "experiment", "index", "iteration", "theta_deg", "value", "angle_deg", "angle_original_deg",
    "sweep_argmax_deg", "sweep_ratio", "max_defect", "status", "wall_time_s",
];

pub const MODEL_COLUMNS: &[&str] = &["kind", "row", "col", "value"];

fn deg_mod_180(rad: f64) -> f64 {
    rad.to_degrees().rem_euclid(180.0)
}

pub fn cmd_learn_rc(p: &Params, seed: u64) -> CliResult<(Table, Table)> {
    if let Some(m) = p.raw("method") {
        if parse_method(m)? != Method::RandomFeatures {
            return Err(CliError::Config("learn-rc only supports method=rf".into()));
        }
    }
    let data = DataSpec::from_params(p, "three_gaussians")?;
    let n = p.usize_or("n", 200)?;
    let x = data.sample(n, derive_seed(seed, &[tags::DATA]))?;
    let cfg = LearnConfig {
        num_features: p.usize_or("features", 200)?,
        lambda: p.positive_f64_or("lambda", 1e-2)?,
        gamma: p.positive_f64_or("gamma", 1.0)?,
        steps: p.usize_or("steps", 100)?,
        step_size: p.positive_f64_or("step_size", 0.1)?,
        restarts: p.usize_or("restarts", 5)?,
        seed: derive_seed(seed, &[tags::LEARN]),
        ..LearnConfig::default()
    };
    let dim_p = p.usize_or("p", 1)?;
    let experiment = p.str_or("experiment", "learn-rc");
    let timing = p.bool_or("timing", false)?;
    let (model, wall) = timed(timing, || learn_reaction_coordinate(&x, dim_p, &cfg));
    let model = model?;

    let mut table = Table::new(LEARN_COLUMNS);
    let exp = || ("experiment", experiment.clone());
    for (r, v) in model.restart_values.iter().enumerate() {
        table.push(&[exp(), ("kind", "restart".into()), ("index", r.to_string()), ("value", fmt_f64(*v))]);
    }
    for (it, v) in &model.objective_trace {
        table.push(&[
            exp(),
            ("kind", "trace".into()),
            ("index", model.restart.to_string()),
            ("iteration", it.to_string()),
            ("value", fmt_f64(*v)),
        ]);
    }
    let planar = dim_p == 1 && x.dim() == 2;
    let mut sweep_summary = (None, None);
    if planar && p.bool_or("sweep", true)? {
        let (white, _) = whiten(&x)?;
        let grid = angle_grid(p.usize_or("sweep_points", 90)?.max(2));
        let curve = sweep_angle_1d(&white, &grid, cfg.num_features, cfg.lambda, cfg.gamma, derive_seed(seed, &[tags::SWEEP]))?;
        for (theta, v) in &curve {
            table.push(&[exp(), ("kind", "sweep".into()), ("theta_deg", fmt_f64(theta.to_degrees())), ("value", fmt_f64(*v))]);
        }
        let best = curve.iter().cloned().fold((0.0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let min = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        sweep_summary = (Some(best.0.to_degrees()), (min > 0.0).then(|| best.1 / min));
    }
    let dirs = model.original_directions();
    let mut cells = vec![
        exp(),
        ("kind", "result".to_string()),
        ("index", model.restart.to_string()),
        ("value", fmt_f64(model.final_value())),
        ("max_defect", fmt_f64(model.max_defect)),
        ("sweep_argmax_deg", fmt_opt(sweep_summary.0)),
        ("sweep_ratio", fmt_opt(sweep_summary.1)),
        ("status", "ok".into()),
        ("wall_time_s", fmt_opt(wall)),
    ];
    if planar {
        cells.push(("angle_deg", fmt_f64(deg_mod_180(recovered_angle(&model.a)))));
        cells.push(("angle_original_deg", fmt_f64(deg_mod_180(dirs[(0, 1)].atan2(dirs[(0, 0)])))));
    }
    table.push(&cells);

    let mut mt = Table::new(MODEL_COLUMNS);
    let mut put = |kind: &str, m: &DMatrix<f64>| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                mt.push(&[
                    ("kind", kind.to_string()),
                    ("row", i.to_string()),
                    ("col", j.to_string()),
                    ("value", fmt_f64(m[(i, j)])),
                ]);
            }
        }
    };
    put("a_whitened", model.a.matrix());
    put("direction_original", &dirs);
    put("whiten_mean", &DMatrix::from_row_slice(1, model.whitening.mean.len(), model.whitening.mean.as_slice()));
    put("whiten_matrix", &model.whitening.half_inv_cov);
    Ok((table, mt))
}

pub const ORACLE_COLUMNS: &[&str] = &[
    "kind", "kappa", "p_kappa", "nu_lower_bound", "capped_entries", "method", "n", "repetition", "kernel_estimate",
    "rel_diff", "status", "wall_time_s",
];

pub fn cmd_oracle(p: &Params, seed: u64) -> CliResult<(Table, usize)> {
    let variance = match p.f64_opt("a")? {
        Some(a) if a > 0.0 => 1.0 / (4.0 * a),
        Some(_) => return Err(CliError::Config("a must be positive".into())),
        None => p.positive_f64_or("variance", 1.0)?,
    };
    let gamma = p.positive_f64_or("gamma", 1.0)?;
    let m = p.usize_or("m", 60)?;
    let kappas = p.f64_list_or("kappas", &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])?;
    if kappas.iter().any(|k| *k <= 0.0) {
        return Err(CliError::Config("kappas must be positive".into()));
    }
    let model = HermiteModel::for_gaussian(variance, gamma, m)?;
    let timing = p.bool_or("timing", false)?;
    let mut table = Table::new(ORACLE_COLUMNS);
    let mut oracle_values = Vec::new();
    for &kappa in &kappas {
        let (r, wall) = timed(timing, || regularized_poincare_detailed(&model, kappa));
        let r = r?;
        oracle_values.push((kappa, r.value));
        table.push(&[
            ("kind", "oracle".into()),
            ("kappa", fmt_f64(kappa)),
            ("p_kappa", fmt_f64(r.value)),
            ("nu_lower_bound", fmt_f64(r.nu_lower_bound)),
            ("capped_entries", r.capped_entries.to_string()),
            ("status", "ok".into()),
            ("wall_time_s", fmt_opt(wall)),
        ]);
    }
    table.push(&[
        ("kind", "limit".into()),
        ("p_kappa", fmt_f64(model.poincare_constant())),
        ("status", "ok".into()),
    ]);

    let mut failed = 0;
    if p.bool_or("cross_check", true)? {
        let method = parse_method(&p.str_or("method", "exact"))?;
        if method == Method::DiffusionMaps {
            return Err(CliError::Config("the cross-check needs a kernel method (exact or rf)".into()));
        }
        let n = p.usize_or("n", 2000)?;
        let reps = p.usize_or("reps", 1)?.max(1);
        let features = p.usize_or("features", 2000)?;
        let cross = p.f64_list_or("cross_kappas", &[1e-2])?;
        let kernel = GaussianKernelConfig::new(gamma)?;
        let cov = DMatrix::from_element(1, 1, variance);
        for (ki, &kappa) in cross.iter().enumerate() {
            let oracle = match oracle_values.iter().find(|(k, _)| *k == kappa) {
                Some((_, v)) => *v,
                None => regularized_poincare_detailed(&model, kappa)?.value,
            };
            for rep in 0..reps {
                let (est, wall) = timed(timing, || -> poincare::Result<f64> {
                    let x = sample_gaussian(&[0.0], &cov, n, derive_seed(seed, &[tags::DATA, rep as u64]))?;
                    match method {
                        Method::RandomFeatures => {
                            let map = sample_features_antithetic(1, features, gamma, derive_seed(seed, &[tags::FEATURES, ki as u64, rep as u64]))?;
                            Ok(estimate_poincare_rf(&x, &map, kappa)?.value)
                        }
                        _ => Ok(estimate_poincare_exact(&x, &kernel, kappa)?.value),
                    }
                });
                let mut cells = vec![
                    ("kind", "cross".to_string()),
                    ("kappa", fmt_f64(kappa)),
                    ("p_kappa", fmt_f64(oracle)),
                    ("method", method.as_str().to_string()),
                    ("n", n.to_string()),
                    ("repetition", rep.to_string()),
                    ("status", status_of(&est)),
                    ("wall_time_s", fmt_opt(wall)),
                ];
                match est {
                    Ok(v) => {
                        cells.push(("kernel_estimate", fmt_f64(v)));
                        cells.push(("rel_diff", fmt_f64((v - oracle).abs() / oracle)));
                    }
                    Err(_) => failed += 1,
                }
                table.push(&cells);
            }
        }
    }
    Ok((table, failed))
}

pub const LANGEVIN_COLUMNS: &[&str] = &[
    "kind", "t", "variance", "std_error", "analytic", "z_score", "bound", "poincare_hat", "clamped", "status",
];

pub fn cmd_langevin_check(p: &Params, seed: u64) -> CliResult<Table> {
    let potential = p.str_or("potential", "ou");
    let n_outer = p.usize_or("n_outer", 400)?;
    let (pot, starts, analytic_var) = match potential.as_str() {
        "ou" => {
            let s = p.positive_f64_or("variance", 1.0)?;
            let starts = sample_gaussian(&[0.0], &DMatrix::from_element(1, 1, s), n_outer, derive_seed(seed, &[tags::DATA]))?;
            (PotentialSpec::ornstein_uhlenbeck(1, s), starts, Some(s))
        }
        "double_well" => {
            let sep = p.f64_or("separation", 2.0)?;
            let sigma = p.positive_f64_or("sigma", 0.5)?;
            let starts = sample_two_gaussians(sep, sigma, n_outer, derive_seed(seed, &[tags::DATA]))?;
            (PotentialSpec::double_well(sep, sigma), starts, None)
        }
        other => return Err(CliError::Config(format!("unknown potential '{other}'"))),
    };
    let t_max = p.positive_f64_or("t_max", 2.0)?;
    let t_points = p.usize_or("t_points", 10)?.max(2);
    let t_grid: Vec<f64> = (0..t_points).map(|k| t_max * k as f64 / (t_points - 1) as f64).collect();
    let dt = p.positive_f64_or("dt", 0.005)?;
    let n_inner = p.usize_or("n_inner", 40)?;

    let poincare_hat = match p.f64_opt("poincare")? {
        Some(v) if v > 0.0 => v,
        Some(_) => return Err(CliError::Config("poincare must be positive".into())),
        None => {
            let m = p.usize_or("estimate_n", 500)?;
            let x = match potential.as_str() {
                "ou" => sample_gaussian(&[0.0], &DMatrix::from_element(1, 1, analytic_var.unwrap_or(1.0)), m, derive_seed(seed, &[tags::CALIBRATION]))?,
                _ => sample_two_gaussians(p.f64_or("separation", 2.0)?, p.positive_f64_or("sigma", 0.5)?, m, derive_seed(seed, &[tags::CALIBRATION]))?,
            };
            let kernel = GaussianKernelConfig::new(p.positive_f64_or("gamma", 1.0)?)?;
            let c = p.positive_f64_or("c_lambda", DEFAULT_C_LAMBDA)?;
            estimate_poincare_exact(&x, &kernel, c / m as f64)?.value
        }
    };
    let f = |x: &[f64]| x[0];
    let points = variance_decay_experiment(&pot, &f, &starts, &t_grid, n_inner, dt, derive_seed(seed, &[tags::LANGEVIN]))?;
    let var0 = points.first().map_or(0.0, |pt| pt.variance);
    let mut table = Table::new(LANGEVIN_COLUMNS);
    for pt in &points {
        let analytic = analytic_var.map(|s| s * (-2.0 * pt.t / s).exp());
        let z = analytic.map(|a| (pt.variance - a) / pt.std_error);
        table.push(&[
            ("kind", "point".into()),
            ("t", fmt_f64(pt.t)),
            ("variance", fmt_f64(pt.variance)),
            ("std_error", fmt_f64(pt.std_error)),
            ("analytic", fmt_opt(analytic)),
            ("z_score", fmt_opt(z)),
            ("bound", fmt_f64((-2.0 * pt.t / poincare_hat).exp() * var0)),
            ("poincare_hat", fmt_f64(poincare_hat)),
            ("clamped", pt.clamped.to_string()),
            ("status", "ok".into()),
        ]);
    }
    Ok(table)
}
