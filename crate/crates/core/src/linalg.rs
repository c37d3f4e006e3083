//! Small dense matrices and singular values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Ratio below which the smallest singular value is treated as zero.
pub const RANK_TOL: f64 = 1e-13;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Singular values in decreasing order.
pub fn singular_values(w: &Matrix) -> Result<Vec<f64>> {
    if w.rows == 0 || w.cols == 0 {
        return Err(invalid("singular values of an empty matrix"));
    }
    if w.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure("matrix has non-finite entries".into()));
    }
    let m = DMatrix::from_row_slice(w.rows, w.cols, &w.data);
    let mut sv: Vec<f64> = m
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericFailure("SVD did not converge".into()))?
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// `σ_max / σ_min` over the `min(rows, cols)` singular values, or `+∞` when
/// `σ_min < 1e-13 · σ_max`.
pub fn condition_number(w: &Matrix) -> Result<f64> {
    let sv = singular_values(w)?;
    let (max, min) = (sv[0], sv[sv.len() - 1]);
    if max == 0.0 {
        return Err(invalid("condition number of the zero matrix"));
    }
    if min < RANK_TOL * max {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}
