//! Sampling kernels: median-of-means estimation of `L A R`, and rejection
//! sampling from `D_{V̂ y}` for nearly orthonormal column sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sample_model::{SampledMatrix, SampledVector};

/// A set of `k` columns of length `dim` with entry and ℓ2-sampling access.
pub trait ColumnAccess {
    fn dim(&self) -> usize;

    fn columns(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> Result<f64>;

    /// Row `i` across all columns.
    fn entries_at(&self, i: usize) -> Result<Vec<f64>> {
        (0..self.columns()).map(|j| self.entry(i, j)).collect()
    }

    /// Squared norm of column `j`, or a nominal value when it is not known.
    fn column_norm_sq(&self, j: usize) -> f64;

    /// Draws a row index from `D_{V^(j)}`.
    fn sample_column<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<usize>;
}

/// Explicit columns, each held in its own sampling tree.
#[derive(Debug, Clone)]
pub struct DenseColumns {
    dim: usize,
    cols: Vec<SampledVector>,
}

impl DenseColumns {
    pub fn new(v: &DenseMatrix) -> Result<Self> {
        if v.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        let cols = (0..v.ncols())
            .map(|j| SampledVector::from_slice(&v.column(j)))
            .collect::<Result<_>>()?;
        Ok(DenseColumns {
            dim: v.nrows(),
            cols,
        })
    }
}

impl ColumnAccess for DenseColumns {
    fn dim(&self) -> usize {
        self.dim
    }

    fn columns(&self) -> usize {
        self.cols.len()
    }

    fn entry(&self, i: usize, j: usize) -> Result<f64> {
        self.cols
            .get(j)
            .ok_or(Error::IndexOutOfRange {
                index: j,
                len: self.cols.len(),
            })?
            .get(i)
    }

    fn column_norm_sq(&self, j: usize) -> f64 {
        self.cols[j].norm_squared()
    }

    fn sample_column<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<usize> {
        let col = self.cols.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            len: self.cols.len(),
        })?;
        col.sample(rng).map_err(|_| Error::DegenerateColumn(j))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionSampleStats {
    pub accepted: u64,
    pub proposed: u64,
    /// `accepted / proposed`.
    pub acceptance_rate: f64,
    pub gamma: f64,
    /// Proposal budget per accepted sample.
    pub budget: u64,
}

impl RejectionSampleStats {
    fn record(&mut self, proposals: u64) {
        self.accepted += 1;
        self.proposed += proposals;
        self.acceptance_rate = self.accepted as f64 / self.proposed as f64;
    }
}

/// Proposal budget `⌈64 k^2 ln(1/γ)⌉` for one accepted sample.
pub fn rejection_budget(k: usize, gamma: f64) -> u64 {
    let b = 64.0 * (k * k) as f64 * (1.0 / gamma).ln();
    (b.ceil().max(1.0)).min(u64::MAX as f64) as u64
}

/// Samples from `D_{V y}` by proposing a column with probability proportional
/// to `y_j^2 |V^(j)|^2`, drawing a row from that column, and accepting with
/// `(V y)_s^2 / (k Σ_j (y_j V_{s,j})^2)`.
#[derive(Debug)]
pub struct RejectionSampler<'c, C: ColumnAccess> {
    cols: &'c C,
    y: Vec<f64>,
    proposal: SampledVector,
    budget: u64,
    gamma: f64,
}

impl<'c, C: ColumnAccess> RejectionSampler<'c, C> {
    pub fn new(cols: &'c C, y: &[f64], gamma: f64) -> Result<Self> {
        if y.len() != cols.columns() {
            return Err(Error::mismatch(cols.columns(), y.len()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if let Some(&v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: v,
                context: "combination weights".into(),
            });
        }
        let weights: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(j, w)| w.abs() * cols.column_norm_sq(j).sqrt())
            .collect();
        let proposal = SampledVector::from_slice(&weights)?;
        if proposal.norm_squared() <= 0.0 {
            return Err(Error::ZeroNorm("combination weights"));
        }
        Ok(RejectionSampler {
            cols,
            y: y.to_vec(),
            proposal,
            budget: rejection_budget(y.len(), gamma),
            gamma,
        })
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// One accepted index and the number of proposals it took.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, u64)> {
        let k = self.y.len() as f64;
        for proposals in 1..=self.budget {
            let j = self.proposal.sample(rng)?;
            let s = self.cols.sample_column(j, rng)?;
            let row = self.cols.entries_at(s)?;
            let mut combo = 0.0;
            let mut spread = 0.0;
            for (v, w) in row.iter().zip(&self.y) {
                let t = v * w;
                combo += t;
                spread += t * t;
            }
            if spread > 0.0 && rng.random::<f64>() * k * spread < combo * combo {
                return Ok((s, proposals));
            }
        }
        Err(Error::RejectionBudgetExhausted {
            budget: self.budget,
        })
    }

    /// `count` independent samples with aggregated statistics.
    pub fn sample_many<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<(Vec<usize>, RejectionSampleStats)> {
        let mut stats = self.empty_stats();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let (s, p) = self.sample(rng)?;
            stats.record(p);
            out.push(s);
        }
        Ok((out, stats))
    }

    pub fn empty_stats(&self) -> RejectionSampleStats {
        RejectionSampleStats {
            gamma: self.gamma,
            budget: self.budget,
            ..Default::default()
        }
    }
}

/// A single draw from `D_{V y}`.
pub fn rejection_sample<C: ColumnAccess, R: Rng + ?Sized>(
    cols: &C,
    y: &[f64],
    gamma: f64,
    rng: &mut R,
) -> Result<(usize, RejectionSampleStats)> {
    let sampler = RejectionSampler::new(cols, y, gamma)?;
    let mut stats = sampler.empty_stats();
    let (s, p) = sampler.sample(rng)?;
    stats.record(p);
    Ok((s, stats))
}

/// Entry access to a matrix used as a factor of a product.
pub trait EntryQuery {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> Result<f64>;

    /// Frobenius norm computed from every entry; for reporting and tests.
    fn frobenius(&self) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                let v = self.entry(i, j)?;
                acc += v * v;
            }
        }
        Ok(acc.sqrt())
    }
}

impl EntryQuery for DenseMatrix {
    fn nrows(&self) -> usize {
        DenseMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        DenseMatrix::ncols(self)
    }
    fn entry(&self, i: usize, j: usize) -> Result<f64> {
        if i >= DenseMatrix::nrows(self) || j >= DenseMatrix::ncols(self) {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                len: DenseMatrix::nrows(self).max(DenseMatrix::ncols(self)),
            });
        }
        Ok(self[(i, j)])
    }
}

/// A column set viewed as the `dim x k` matrix `V`.
#[derive(Debug, Clone, Copy)]
pub struct Direct<'c, C>(pub &'c C);

/// A column set viewed as the `k x dim` matrix `V^T`.
#[derive(Debug, Clone, Copy)]
pub struct Transposed<'c, C>(pub &'c C);

impl<C: ColumnAccess> EntryQuery for Direct<'_, C> {
    fn nrows(&self) -> usize {
        self.0.dim()
    }
    fn ncols(&self) -> usize {
        self.0.columns()
    }
    fn entry(&self, i: usize, j: usize) -> Result<f64> {
        self.0.entry(i, j)
    }
}

impl<C: ColumnAccess> EntryQuery for Transposed<'_, C> {
    fn nrows(&self) -> usize {
        self.0.columns()
    }
    fn ncols(&self) -> usize {
        self.0.dim()
    }
    fn entry(&self, i: usize, j: usize) -> Result<f64> {
        self.0.entry(j, i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductEstimate {
    /// `k1 x k2` estimate of `L A R`.
    pub matrix: DenseMatrix,
    pub zeta: f64,
    pub eta: f64,
    /// Per-entry failure probability `1 - (1 - η)^{1/(k1 k2)}`.
    pub eta_entry: f64,
    /// Samples averaged within each group.
    pub group_size: usize,
    /// Groups whose means are reduced by a median.
    pub groups: usize,
    /// `group_size * groups`.
    pub samples_per_entry: usize,
}

/// Group size `⌈4/ζ^2⌉` and group count `⌈8 ln(1/η')⌉` for one entry.
pub fn median_of_means_shape(zeta: f64, eta_entry: f64) -> (usize, usize) {
    let b = (4.0 / (zeta * zeta)).ceil() as usize;
    let g = ((8.0 * (1.0 / eta_entry).ln()).ceil() as usize).max(1);
    (b.max(1), g)
}

/// Draws `(s, t)` with `s ~ D_Ã` and `t ~ D_{A_(s)}`.
pub fn sample_entry_position<R: Rng + ?Sized>(
    a: &SampledMatrix,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let s = a.sample_row_index(rng)?;
    let t = a.sample_from_row(s, rng)?;
    Ok((s, t))
}

/// One-sample estimate `L_{i,s} R_{t,j} |A|_F^2 / A_{s,t}` of `(L A R)_{ij}`.
pub fn single_sample_value<L: EntryQuery, Rt: EntryQuery>(
    a: &SampledMatrix,
    l: &L,
    r: &Rt,
    i: usize,
    j: usize,
    (s, t): (usize, usize),
    fro_sq: f64,
) -> Result<f64> {
    let l_is = l.entry(i, s)?;
    if l_is == 0.0 {
        return Ok(0.0);
    }
    let r_tj = r.entry(t, j)?;
    if r_tj == 0.0 {
        return Ok(0.0);
    }
    // (s, t) was drawn with probability A_st^2 / |A|_F^2, so A_st != 0
    let a_st = a.entry(s, t)?;
    Ok(l_is * r_tj * fro_sq / a_st)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Estimates `M = L A R` entry by entry with independent samples. With
/// probability at least `1 - η`, `|M - M̃|_F <= ζ |A|_F |L|_F |R|_F`.
pub fn estimate_product<L: EntryQuery, Rt: EntryQuery, R: Rng + ?Sized>(
    a: &SampledMatrix,
    l: &L,
    r: &Rt,
    zeta: f64,
    eta: f64,
    rng: &mut R,
) -> Result<ProductEstimate> {
    if !(zeta > 0.0 && zeta < 1.0) || !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!(
            "zeta and eta must lie in (0, 1), got {zeta} and {eta}"
        )));
    }
    if l.ncols() != a.nrows() {
        return Err(Error::mismatch(format!("L with {} columns", a.nrows()), l.ncols()));
    }
    if r.nrows() != a.ncols() {
        return Err(Error::mismatch(format!("R with {} rows", a.ncols()), r.nrows()));
    }
    let fro_sq = a.frobenius_squared();
    if fro_sq <= 0.0 {
        return Err(Error::ZeroNorm("matrix"));
    }
    let (k1, k2) = (l.nrows(), r.ncols());
    let cells = (k1 * k2).max(1) as f64;
    // 1 - (1 - η)^{1/cells} without cancellation
    let eta_entry = -((-eta).ln_1p() / cells).exp_m1();
    let (b, g) = median_of_means_shape(zeta, eta_entry);
    let mut m = DenseMatrix::zeros(k1, k2);
    let mut means = vec![0.0; g];
    for i in 0..k1 {
        for j in 0..k2 {
            for mean in means.iter_mut() {
                let mut acc = 0.0;
                for _ in 0..b {
                    let pos = sample_entry_position(a, rng)?;
                    acc += single_sample_value(a, l, r, i, j, pos, fro_sq)?;
                }
                *mean = acc / b as f64;
            }
            let v = median(&mut means);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    value: v,
                    context: format!("product estimate ({i}, {j})"),
                });
            }
            m[(i, j)] = v;
        }
    }
    Ok(ProductEstimate {
        matrix: m,
        zeta,
        eta,
        eta_entry,
        group_size: b,
        groups: g,
        samples_per_entry: b * g,
    })
}
