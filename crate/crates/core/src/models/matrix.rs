use crate::error::{Error, Result};
use crate::features::ImputedRow;

/// Dense column-major feature matrix. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    cols: Vec<Vec<f64>>,
}

impl Matrix {
    /// Select `columns` out of imputed 16-wide rows.
    pub fn from_imputed(rows: &[ImputedRow], columns: &[usize]) -> Result<Self> {
        let cols = columns.iter().map(|&c| rows.iter().map(|r| r[c]).collect()).collect();
        Matrix::from_columns(rows.len(), cols)
    }

    pub fn from_rows(rows: &[Vec<f64>], width: usize) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: bad.len(),
            });
        }
        let cols = (0..width).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        Matrix::from_columns(rows.len(), cols)
    }

    pub fn from_columns(n_rows: usize, cols: Vec<Vec<f64>>) -> Result<Self> {
        for (column, col) in cols.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::DimensionMismatch {
                    expected: n_rows,
                    actual: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, column });
            }
        }
        Ok(Matrix { n_rows, cols })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cols[j][i]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        Matrix {
            n_rows: rows.len(),
            cols: self.cols.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    pub fn map_col(&self, j: usize, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let mut cols = self.cols.clone();
        cols[j] = cols[j].iter().map(|&v| f(v)).collect();
        Matrix::from_columns(self.n_rows, cols)
    }
}
