use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poincare_cli::{run, CliError, CliResult, ConfigFile, Params, RUNTIME_KEYS};

#[derive(Parser, Debug)]
#[command(name = "poincare", version, about = "Poincaré-constant estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file with flat `key = value` lines and `[command]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Result file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// exact, rf or dm.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Estimate the constant of one distribution.
    Estimate,
    /// Kernel and diffusion-maps estimates over a grid of sample sizes.
    SweepN,
    /// Estimates for two Gaussians as their separation grows.
    MixtureGrowth,
    /// Learn a linear reaction coordinate by Stiefel-manifold ascent.
    LearnRc,
    /// Hermite-basis reference values, with a kernel cross-check.
    Oracle,
    /// Langevin variance decay against the Poincaré bound.
    LangevinCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::SweepN => "sweep-n",
            Command::MixtureGrowth => "mixture-growth",
            Command::LearnRc => "learn-rc",
            Command::Oracle => "oracle",
            Command::LangevinCheck => "langevin-check",
        }
    }
}

fn model_path(out: Option<&Path>, explicit: Option<String>) -> Option<PathBuf> {
    explicit.map(PathBuf::from).or_else(|| {
        out.map(|o| {
            let mut s = o.as_os_str().to_os_string();
            s.push(".model.csv");
            PathBuf::from(s)
        })
    })
}

fn execute(cli: Cli) -> CliResult<i32> {
    let file = match &cli.config {
        Some(path) => ConfigFile::read(path)?,
        None => ConfigFile::default(),
    };
    let mut params: Params = file.params_for(cli.command.name());
    if let Some(seed) = cli.seed {
        params.set("seed", seed.to_string());
    }
    if let Some(m) = &cli.method {
        params.set("method", m.clone());
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{o}'")))?;
        params.set(k.trim(), v.trim());
    }
    let mut runtime = std::collections::BTreeMap::new();
    for key in RUNTIME_KEYS {
        if let Some(v) = params.remove(key) {
            runtime.insert(*key, v);
        }
    }
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => runtime
            .get("threads")
            .map(|t| t.parse::<usize>().map_err(|_| CliError::Config(format!("bad threads value '{t}'"))))
            .transpose()?,
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli.out.clone().or_else(|| runtime.get("out").map(PathBuf::from));

    let report = run(&params)?;
    match &out {
        Some(path) => report.result.write_path(path)?,
        None => report.result.write_to(std::io::stdout().lock())?,
    }
    if let Some(model) = &report.model {
        match model_path(out.as_deref(), runtime.remove("model_out")) {
            Some(path) => model.write_path(&path)?,
            None => eprintln!("note: no --out given, model file not written"),
        }
    }
    if report.flagged > 0 {
        eprintln!("warning: {} row(s) flagged as failed", report.flagged);
        if report.fail_on_flagged {
            return Ok(3);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
