//! Sample sources selectable from a config, and seed derivation.

use nalgebra::{DMatrix, DVector};
use poincare::sampling::{
    sample_exponential, sample_gaussian, sample_three_gaussians, sample_two_gaussians,
};
use poincare::SampleSet;

use crate::config::Params;
use crate::error::{CliError, CliResult};

pub const DATA_KEYS: &[&str] = &["distribution", "variances", "mean", "separation", "sigma", "data_file"];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    /// `N(mean, diag(variances))`.
    Gaussian { mean: Vec<f64>, variances: Vec<f64> },
    Exponential,
    /// `N(+-separation/2, sigma^2)` with equal weights.
    TwoGaussians { separation: f64, sigma: f64 },
    ThreeGaussians { sigma: f64 },
    /// Fixed samples, one row per line, comma separated.
    File(SampleSet),
}

impl DataSpec {
    pub fn from_params(p: &Params, default: &str) -> CliResult<Self> {
        match p.str_or("distribution", default).as_str() {
            "gaussian" => {
                let variances = p.f64_list_or("variances", &[1.0])?;
                if variances.iter().any(|v| *v <= 0.0) {
                    return Err(CliError::Config("variances must be positive".into()));
                }
                let mean = p.f64_list_or("mean", &vec![0.0; variances.len()])?;
                if mean.len() != variances.len() {
                    return Err(CliError::Config("mean and variances differ in length".into()));
                }
                Ok(DataSpec::Gaussian { mean, variances })
            }
            "exponential" => Ok(DataSpec::Exponential),
            "two_gaussians" => Ok(DataSpec::TwoGaussians {
                separation: p.f64_or("separation", 1.0)?,
                sigma: p.positive_f64_or("sigma", 0.1)?,
            }),
            "three_gaussians" => Ok(DataSpec::ThreeGaussians {
                sigma: p.positive_f64_or("sigma", 0.1)?,
            }),
            "file" => {
                let path = p
                    .raw("data_file")
                    .ok_or_else(|| CliError::Config("distribution=file needs data_file".into()))?;
                Ok(DataSpec::File(read_samples(std::path::Path::new(path))?))
            }
            other => Err(CliError::Config(format!("unknown distribution '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DataSpec::Gaussian { .. } => "gaussian",
            DataSpec::Exponential => "exponential",
            DataSpec::TwoGaussians { .. } => "two_gaussians",
            DataSpec::ThreeGaussians { .. } => "three_gaussians",
            DataSpec::File(_) => "file",
        }
    }

    /// Known Poincaré constant: largest variance for a Gaussian, 4 for the
    /// standard exponential.
    pub fn analytic_constant(&self) -> Option<f64> {
        match self {
            DataSpec::Gaussian { variances, .. } => variances.iter().cloned().reduce(f64::max),
            DataSpec::Exponential => Some(4.0),
            _ => None,
        }
    }

    /// `n` draws; a file source ignores `n` and the seed.
    pub fn sample(&self, n: usize, seed: u64) -> CliResult<SampleSet> {
        let x = match self {
            DataSpec::Gaussian { mean, variances } => {
                let cov = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
                sample_gaussian(mean, &cov, n, seed)?
            }
            DataSpec::Exponential => sample_exponential(n, seed)?,
            DataSpec::TwoGaussians { separation, sigma } => sample_two_gaussians(*separation, *sigma, n, seed)?,
            DataSpec::ThreeGaussians { sigma } => sample_three_gaussians(*sigma, n, seed)?,
            DataSpec::File(x) => x.clone(),
        };
        Ok(x)
    }

    pub fn is_file(&self) -> bool {
        matches!(self, DataSpec::File(_))
    }
}

/// Reads a numeric sample file: comma- or whitespace-separated values,
/// `#` comments, one sample per line.
pub fn read_samples(path: &std::path::Path) -> CliResult<SampleSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read data file {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Config(format!("{}: line {}: not numeric", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(SampleSet::from_rows(&rows)?)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed from a root seed and a path of indices.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(root), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub mod tags {
    pub const DATA: u64 = 1;
    pub const CALIBRATION: u64 = 2;
    pub const FEATURES: u64 = 3;
    pub const LEARN: u64 = 4;
    pub const SWEEP: u64 = 5;
    pub const LANGEVIN: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(0, &[1, 2]);
        assert_eq!(a, derive_seed(0, &[1, 2]));
        assert_ne!(a, derive_seed(0, &[2, 1]));
        assert_ne!(a, derive_seed(1, &[1, 2]));
    }
}
