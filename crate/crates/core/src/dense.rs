//! Plain row-major dense matrices for baselines, oracles, and I/O.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
        }
        a
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::mismatch(
                format!("{rows}x{cols} = {} entries", rows * cols),
                data.len(),
            ));
        }
        if let Some((k, &v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: v,
                context: format!("entry ({}, {})", k / cols.max(1), k % cols.max(1)),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::mismatch(
                    format!("{cols} columns"),
                    format!("{} in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let rows = cols.first().map_or(0, Vec::len);
        let mut a = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::mismatch(format!("{rows} rows"), c.len()));
            }
            for (i, &v) in c.iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        Ok(a)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::mismatch(
                format!("inner dimension {}", self.cols),
                other.rows,
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length must match columns");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::mismatch(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Copy with each row divided by its ℓ1 norm.
    pub fn l1_normalized(&self) -> Result<DenseMatrix> {
        let mut out = self.clone();
        for i in 0..self.rows {
            let l1: f64 = self.row(i).iter().map(|v| v.abs()).sum();
            if l1 == 0.0 {
                return Err(Error::ZeroRow(i));
            }
            for v in out.row_mut(i) {
                *v /= l1;
            }
        }
        Ok(out)
    }

    /// Copy with rows picked (and reordered) by `index`.
    pub fn select_rows(&self, index: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(index.len() * self.cols);
        for &i in index {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: index.len(),
            cols: self.cols,
            data,
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
