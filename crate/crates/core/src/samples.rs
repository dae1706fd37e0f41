//! Sample tables: `n` i.i.d. draws in `d` dimensions, one per row.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x d` table of finite draws with `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: DMatrix<f64>,
}

impl SampleSet {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::input(format!(
                "need at least 2 samples, got {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::input("samples have zero dimension"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let row = pos % data.nrows();
            return Err(Error::input(format!("non-finite value in sample row {row}")));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::input("rows have inconsistent lengths"));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    /// One-dimensional samples.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    /// Reorder rows: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = DMatrix::from_fn(self.n(), self.dim(), |i, j| self.data[(perm[i], j)]);
        Self { data }
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.data.column(j).mean()).collect()
    }

    /// Sample covariance with the `1/n` normalization.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.n() as f64;
        let mean = self.column_means();
        let centered = DMatrix::from_fn(self.n(), self.dim(), |i, j| self.data[(i, j)] - mean[j]);
        centered.transpose() * &centered / n
    }
}
