use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SampledVector;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Which side of the matrix a computation treats as its "rows".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Rows of `A` are the lines; implied vectors live in the row space.
    Rows,
    /// Columns of `A` are the lines; equivalent to working on `A^T`.
    Columns,
}

/// Snapshot of the access counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub queries: u64,
    pub samples: u64,
    pub norm_lookups: u64,
}

impl AccessCounts {
    pub fn total(&self) -> u64 {
        self.queries + self.samples + self.norm_lookups
    }
}

#[derive(Debug, Default)]
struct Counters {
    queries: AtomicU64,
    samples: AtomicU64,
    norm_lookups: AtomicU64,
}

impl Counters {
    fn snapshot(&self) -> AccessCounts {
        AccessCounts {
            queries: self.queries.load(Ordering::Relaxed),
            samples: self.samples.load(Ordering::Relaxed),
            norm_lookups: self.norm_lookups.load(Ordering::Relaxed),
        }
    }

    fn reset(&self) {
        self.queries.store(0, Ordering::Relaxed);
        self.samples.store(0, Ordering::Relaxed);
        self.norm_lookups.store(0, Ordering::Relaxed);
    }
}

/// Matrix in the sample model: one tree per row, one per column, and trees
/// over the row norms (`Ã`) and column norms (`Ã'`).
///
/// Reads and samples through the public accessors are tallied in relaxed
/// atomic counters, so a shared reference can be sampled from many threads.
#[derive(Debug)]
pub struct SampledMatrix {
    rows: Vec<SampledVector>,
    cols: Vec<SampledVector>,
    row_norms: SampledVector,
    col_norms: SampledVector,
    counters: Counters,
}

impl Clone for SampledMatrix {
    fn clone(&self) -> Self {
        SampledMatrix {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            row_norms: self.row_norms.clone(),
            col_norms: self.col_norms.clone(),
            counters: Counters::default(),
        }
    }
}

impl SampledMatrix {
    /// Builds from a row-major entry array.
    pub fn from_row_major(m: usize, n: usize, entries: &[f64]) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::EmptyInput);
        }
        if entries.len() != m * n {
            return Err(Error::mismatch(
                format!("{m}x{n} = {} entries", m * n),
                entries.len(),
            ));
        }
        let rows = entries
            .chunks_exact(n)
            .map(SampledVector::from_slice)
            .collect::<Result<Vec<_>>>()?;
        let mut column = vec![0.0; m];
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            for (i, slot) in column.iter_mut().enumerate() {
                *slot = entries[i * n + j];
            }
            cols.push(SampledVector::from_slice(&column)?);
        }
        let mut row_norms = SampledVector::zeros(m)?;
        for (i, r) in rows.iter().enumerate() {
            row_norms.set_weight(i, r.norm_squared());
        }
        let mut col_norms = SampledVector::zeros(n)?;
        for (j, c) in cols.iter().enumerate() {
            col_norms.set_weight(j, c.norm_squared());
        }
        Ok(SampledMatrix {
            rows,
            cols,
            row_norms,
            col_norms,
            counters: Counters::default(),
        })
    }

    pub fn from_dense(a: &DenseMatrix) -> Result<Self> {
        Self::from_row_major(a.nrows(), a.ncols(), a.as_slice())
    }

    /// Builds from `(row, col, value)` triplets; later duplicates overwrite earlier ones.
    pub fn from_triplets(m: usize, n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = vec![0.0; m * n];
        for &(i, j, v) in triplets {
            if i >= m {
                return Err(Error::IndexOutOfRange { index: i, len: m });
            }
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, len: n });
            }
            entries[i * n + j] = v;
        }
        Self::from_row_major(m, n, &entries)
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.ncols();
        let mut data = Vec::with_capacity(self.nrows() * n);
        for r in &self.rows {
            data.extend((0..n).map(|j| r.entry(j)));
        }
        DenseMatrix::from_row_major(self.nrows(), n, data).expect("shape is consistent")
    }

    pub fn counts(&self) -> AccessCounts {
        self.counters.snapshot()
    }

    pub fn reset_counts(&self) {
        self.counters.reset();
    }

    #[inline]
    fn tick_query(&self, n: u64) {
        self.counters.queries.fetch_add(n, Ordering::Relaxed);
    }

    #[inline]
    fn tick_sample(&self) {
        self.counters.samples.fetch_add(1, Ordering::Relaxed);
    }

    #[inline]
    fn tick_norm(&self) {
        self.counters.norm_lookups.fetch_add(1, Ordering::Relaxed);
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.nrows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.nrows(),
            });
        }
        if j >= self.ncols() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.ncols(),
            });
        }
        Ok(())
    }

    /// Entry `(i, j)` read through row tree `i`.
    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i, j)?;
        self.tick_query(1);
        Ok(self.rows[i].entry(j))
    }

    /// Entry `(i, j)` read through column tree `j`.
    pub fn entry_via_column(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i, j)?;
        self.tick_query(1);
        Ok(self.cols[j].entry(i))
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        self.check(i, j)?;
        self.rows[i].set(j, value)?;
        self.cols[j].set(i, value)?;
        self.row_norms.set_weight(i, self.rows[i].norm_squared());
        self.col_norms.set_weight(j, self.cols[j].norm_squared());
        Ok(())
    }

    /// Re-sums all trees from their leaves.
    pub fn rebuild(&mut self) {
        for r in &mut self.rows {
            r.rebuild();
        }
        for c in &mut self.cols {
            c.rebuild();
        }
        for (i, r) in self.rows.iter().enumerate() {
            self.row_norms.set_weight(i, r.norm_squared());
        }
        for (j, c) in self.cols.iter().enumerate() {
            self.col_norms.set_weight(j, c.norm_squared());
        }
    }

    pub fn frobenius_squared(&self) -> f64 {
        self.tick_norm();
        self.row_norms.norm_squared()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_squared().sqrt()
    }

    pub fn row_norm(&self, i: usize) -> Result<f64> {
        self.check(i, 0)?;
        self.tick_norm();
        Ok(self.rows[i].norm())
    }

    pub fn col_norm(&self, j: usize) -> Result<f64> {
        self.check(0, j)?;
        self.tick_norm();
        Ok(self.cols[j].norm())
    }

    /// The row tree for row `i` (uncounted structural access).
    pub fn row(&self, i: usize) -> &SampledVector {
        &self.rows[i]
    }

    pub fn col(&self, j: usize) -> &SampledVector {
        &self.cols[j]
    }

    /// The tree `Ã` whose entries are the row norms.
    pub fn row_norm_tree(&self) -> &SampledVector {
        &self.row_norms
    }

    /// The tree `Ã'` whose entries are the column norms.
    pub fn col_norm_tree(&self) -> &SampledVector {
        &self.col_norms
    }

    /// Draws a row index from `D_Ã`.
    pub fn sample_row_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.tick_sample();
        self.row_norms
            .sample(rng)
            .map_err(|_| Error::ZeroNorm("matrix"))
    }

    /// Draws a column index from `D_Ã'`.
    pub fn sample_col_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.tick_sample();
        self.col_norms
            .sample(rng)
            .map_err(|_| Error::ZeroNorm("matrix"))
    }

    /// Draws a column index from `D_{A_(i)}`.
    pub fn sample_from_row<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        self.check(i, 0)?;
        self.tick_sample();
        self.rows[i].sample(rng).map_err(|_| Error::ZeroNorm("row"))
    }

    /// Draws a row index from `D_{A^(j)}`.
    pub fn sample_from_col<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<usize> {
        self.check(0, j)?;
        self.tick_sample();
        self.cols[j].sample(rng).map_err(|_| Error::ZeroNorm("column"))
    }

    pub fn view(&self, side: Side) -> MatrixView<'_> {
        MatrixView { mat: self, side }
    }
}

/// The matrix seen from one side: for [`Side::Columns`] every "line" is a
/// column of the underlying matrix, so the view behaves like `A^T`.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    mat: &'a SampledMatrix,
    side: Side,
}

impl<'a> MatrixView<'a> {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn matrix(&self) -> &'a SampledMatrix {
        self.mat
    }

    /// Number of lines (rows of the view).
    pub fn lines(&self) -> usize {
        match self.side {
            Side::Rows => self.mat.nrows(),
            Side::Columns => self.mat.ncols(),
        }
    }

    /// Length of each line (columns of the view).
    pub fn line_len(&self) -> usize {
        match self.side {
            Side::Rows => self.mat.ncols(),
            Side::Columns => self.mat.nrows(),
        }
    }

    /// Entry at line `i`, position `j` of the view.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        match self.side {
            Side::Rows => self.mat.entry(i, j),
            Side::Columns => self.mat.entry_via_column(j, i),
        }
    }

    pub fn line_norm(&self, i: usize) -> Result<f64> {
        match self.side {
            Side::Rows => self.mat.row_norm(i),
            Side::Columns => self.mat.col_norm(i),
        }
    }

    /// `|A|_F^2` summed over this side's norm tree, so a column view agrees
    /// bit for bit with the row view of the transpose.
    pub fn frobenius_squared(&self) -> f64 {
        match self.side {
            Side::Rows => self.mat.frobenius_squared(),
            Side::Columns => {
                self.mat.tick_norm();
                self.mat.col_norms.norm_squared()
            }
        }
    }

    pub fn sample_line<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        match self.side {
            Side::Rows => self.mat.sample_row_index(rng),
            Side::Columns => self.mat.sample_col_index(rng),
        }
    }

    pub fn sample_in_line<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        match self.side {
            Side::Rows => self.mat.sample_from_row(i, rng),
            Side::Columns => self.mat.sample_from_col(i, rng),
        }
    }
}
