use std::path::Path;
use std::process::Command;

use poincare_cli::{run, ConfigFile, Params, ResultFile, Table};

fn params(command: &str, text: &str) -> Params {
    ConfigFile::parse(text).unwrap().params_for(command)
}

fn run_text(command: &str, text: &str) -> (String, ResultFile) {
    let report = run(&params(command, text)).unwrap();
    let s = report.result.to_string_lossless().unwrap();
    (s, report.result)
}

fn without_timestamp(s: &str) -> String {
    s.lines()
        .filter(|l| !l.starts_with("# timestamp:"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn column_f64(t: &Table, kind: &str, col: &str) -> Vec<f64> {
    t.rows_of_kind(kind).map(|r| t.cell_f64(r, col).unwrap()).collect()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poincare"))
}

const SMALL: &[(&str, &str)] = &[
    ("estimate", "n = 60\nreps = 2\nmethod = rf\nfeatures = 50\n"),
    ("sweep-n", "n_grid = 30, 40\nreps = 2\n"),
    ("mixture-growth", "n = 40\nreps = 2\na_grid = 0.4, 0.8\n"),
    ("learn-rc", "n = 40\nfeatures = 20\nsteps = 3\nrestarts = 2\nsweep_points = 6\n"),
    ("oracle", "m = 10\nkappas = 0.1, 0.01\nn = 50\n"),
    ("langevin-check", "n_outer = 20\nn_inner = 4\nt_points = 3\nt_max = 0.1\ndt = 0.01\nestimate_n = 40\n"),
];

#[test]
fn every_command_round_trips_and_reruns_identically() {
    for (cmd, text) in SMALL {
        let (first, file) = run_text(cmd, text);
        let parsed = ResultFile::parse(&first).unwrap();
        assert_eq!(parsed, file, "{cmd}");
        assert!(!file.table.rows.is_empty(), "{cmd}");
        let (second, _) = run_text(cmd, text);
        assert_eq!(without_timestamp(&first), without_timestamp(&second), "{cmd}");
        assert_eq!(first.lines().filter(|l| l.starts_with("# timestamp:")).count(), 1);
    }
}

#[test]
fn header_hash_matches_canonical_config() {
    for (cmd, text) in SMALL {
        let (_, file) = run_text(cmd, text);
        let mut rebuilt = Params::new(file.header_value("command").unwrap());
        for (k, v) in &file.header {
            if k == "param" {
                let (key, value) = v.split_once('=').unwrap();
                rebuilt.set(key, value);
            }
        }
        assert_eq!(file.header_value("config_hash"), Some(params(cmd, text).hash().as_str()));
        assert_eq!(rebuilt.hash(), params(cmd, text).hash());
        assert!(file.header_value("tool").unwrap().starts_with("poincare "));
        let ts = file.header_value("timestamp").unwrap();
        assert!(chrono::DateTime::parse_from_rfc3339(ts).is_ok(), "{ts}");
    }
}

#[test]
fn seed_changes_results() {
    let (a, _) = run_text("estimate", "n = 50\nseed = 1\n");
    let (b, _) = run_text("estimate", "n = 50\nseed = 2\n");
    assert_ne!(without_timestamp(&a), without_timestamp(&b));
}

#[test]
fn single_point_sweep_matches_estimate() {
    let text = "reps = 1\nexperiment = x\noracle = analytic\n[estimate]\nn = 80\n[sweep-n]\nn_grid = 80\nmethods = exact\n";
    let (_, est) = run_text("estimate", text);
    let (_, sweep) = run_text("sweep-n", text);
    assert_eq!(est.table, sweep.table);
}

#[test]
fn identical_samples_give_zero_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("same.csv");
    std::fs::write(&data, "0.5\n".repeat(20)).unwrap();
    let text = format!("distribution = file\ndata_file = {}\n", data.display());
    let report = run(&params("estimate", &text)).unwrap();
    assert_eq!(report.flagged, 0);
    let t = &report.result.table;
    assert_eq!(column_f64(t, "rep", "estimate"), vec![0.0]);
}

#[test]
fn gaussian_estimate_is_near_one() {
    let (_, f) = run_text("estimate", "n = 500\nreps = 5\n");
    let mean = column_f64(&f.table, "summary", "mean")[0];
    assert!((mean - 1.0).abs() < 0.2, "{mean}");
}

#[test]
fn sweep_reports_kernel_and_diffusion_rows() {
    let (_, f) = run_text("sweep-n", "n_grid = 50, 100\nreps = 3\n");
    let t = &f.table;
    let methods: Vec<&str> = t.rows_of_kind("summary").map(|r| t.cell(r, "method").unwrap()).collect();
    assert_eq!(methods, ["exact", "diffusion_maps", "exact", "diffusion_maps"]);
    assert_eq!(t.rows_of_kind("rep").count(), 12);
    assert!(column_f64(t, "summary", "mean_abs_err").iter().all(|v| v.is_finite()));
}

#[test]
fn mixture_growth_degenerate_and_monotone() {
    let (_, f) = run_text("mixture-growth", "reps = 3\na_grid = 0, 0.4, 0.6, 0.8, 1.0, 1.2\n");
    let t = &f.table;
    let med = column_f64(t, "summary", "median");
    assert!((med[0] / 0.01 - 1.0).abs() < 0.3, "a=0 gives {}", med[0]);
    let inversions = med.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(inversions <= 1, "{med:?}");
    let r2 = column_f64(t, "fit", "r2")[0];
    assert!(r2 > 0.9, "{r2}");
}

#[test]
fn oracle_table_properties() {
    let (_, f) = run_text("oracle", "cross_kappas = 0.01\n");
    let t = &f.table;
    let kappas = column_f64(t, "oracle", "kappa");
    let p = column_f64(t, "oracle", "p_kappa");
    assert!(kappas.windows(2).all(|w| w[1] < w[0]));
    // Smaller kappa, larger regularized constant: nonincreasing as kappa grows.
    assert!(p.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{p:?}");
    assert!((p.last().unwrap() - 1.0).abs() < 0.02);
    let rel = column_f64(t, "cross", "rel_diff");
    assert!(rel[0] < 0.10, "{rel:?}");
}

#[test]
fn langevin_ou_matches_analytic_decay() {
    let (_, f) = run_text("langevin-check", "");
    let t = &f.table;
    let z = column_f64(t, "point", "z_score");
    assert_eq!(z.len(), 10);
    assert!(z.iter().all(|v| v.abs() < 3.0), "{z:?}");
    let var = column_f64(t, "point", "variance");
    let bound = column_f64(t, "point", "bound");
    assert_eq!(var[0], bound[0]);
}

#[test]
fn langevin_t0_row_is_empirical_variance() {
    let (_, f) = run_text("langevin-check", "n_outer = 50\nn_inner = 3\nt_points = 2\nt_max = 0.05\nseed = 4\n");
    let var0 = column_f64(&f.table, "point", "variance")[0];
    let starts = poincare::sampling::sample_gaussian(
        &[0.0],
        &nalgebra::DMatrix::identity(1, 1),
        50,
        poincare_cli::data::derive_seed(4, &[poincare_cli::data::tags::DATA]),
    )
    .unwrap();
    let v: Vec<f64> = starts.data().column(0).iter().copied().collect();
    let m = v.iter().sum::<f64>() / 50.0;
    let s2 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 49.0;
    assert!((var0 - s2).abs() < 1e-12 * s2.max(1.0), "{var0} vs {s2}");
}

#[test]
fn double_well_decay_respects_bound() {
    let (_, f) = run_text("langevin-check", "potential = double_well\n");
    let t = &f.table;
    let var = column_f64(t, "point", "variance");
    let se = column_f64(t, "point", "std_error");
    let bound = column_f64(t, "point", "bound");
    for i in 0..var.len() {
        assert!(var[i] <= bound[i] + 3.0 * se[i], "t index {i}: {} > {}", var[i], bound[i]);
    }
}

#[test]
fn isotropic_sweep_is_flat() {
    let (_, f) = run_text(
        "learn-rc",
        "distribution = gaussian\nvariances = 1, 1\nn = 1000\nrestarts = 1\nsteps = 2\nsweep_points = 30\n",
    );
    let t = &f.table;
    let ratio = t.rows_of_kind("result").map(|r| t.cell_f64(r, "sweep_ratio").unwrap()).next().unwrap();
    assert!(ratio < 1.1, "{ratio}");
}

#[test]
fn learned_model_file_has_unit_direction() {
    let report = run(&params("learn-rc", SMALL[3].1)).unwrap();
    let model = report.model.unwrap();
    let text = model.to_string_lossless().unwrap();
    let back = ResultFile::parse(&text).unwrap();
    let t = &back.table;
    let dir: Vec<f64> = t
        .rows_of_kind("direction_original")
        .map(|r| t.cell_f64(r, "value").unwrap())
        .collect();
    assert_eq!(dir.len(), 2);
    assert!((dir[0].hypot(dir[1]) - 1.0).abs() < 1e-12);
    let defects = t_result_defect(&report.result.table);
    assert!(defects < 1e-10);
}

fn t_result_defect(t: &Table) -> f64 {
    t.rows_of_kind("result").map(|r| t.cell_f64(r, "max_defect").unwrap()).next().unwrap()
}

#[test]
fn binary_writes_files_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n = 40\nseed = 1\n[estimate]\nreps = 2\n[oracle]\nm = 3\n").unwrap();
    let out = dir.path().join("out.csv");
    let status = bin()
        .args(["estimate", "--config"])
        .arg(&cfg)
        .args(["--seed", "9", "--method", "dm", "--threads", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let f = ResultFile::read_path(&out).unwrap();
    assert_eq!(f.header_value("seed"), Some("9"));
    let t = &f.table;
    assert!(t.rows.iter().all(|r| t.cell(r, "method") == Some("diffusion_maps")));
    assert_eq!(t.rows_of_kind("rep").count(), 2);
}

#[test]
fn learn_rc_binary_writes_model_next_to_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rc.csv");
    let status = bin()
        .args(["learn-rc", "--set", "n=40", "--set", "features=20", "--set", "steps=2", "--set", "restarts=1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(Path::new(&format!("{}.model.csv", out.display())).exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "n = 10\nthis is not valid\n").unwrap();
    let o = bin().args(["estimate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = bin().args(["estimate", "--set", "bogus_key=1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["estimate", "--set", "n=abc"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["estimate", "--method", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["nonexistent"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // Euler-Maruyama with dt = 3 on the OU potential diverges.
    let o = bin()
        .args(["langevin-check", "--set", "dt=3", "--set", "t_max=300", "--set", "n_outer=4", "--set", "n_inner=2", "--set", "poincare=1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
