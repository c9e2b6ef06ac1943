//! Monte-Carlo low-rank sketch over the sample model.
//!
//! A sketch samples `p` lines of the view by squared norm, then `q` positions
//! from the rescaled lines, and takes the SVD of the resulting `p x q` matrix
//! `W`. The approximate singular vectors are never formed: the description
//! stores the sampled lines `T`, their weights, the left singular vectors
//! `u` of `W`, and the singular values, so that `V̂_j = S^T u_j / σ_j` where
//! `S` holds the rescaled sampled lines.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::estimate::ColumnAccess;
use crate::sample_model::{AccessCounts, MatrixView, SampledMatrix, SampledVector, Side};

/// Parameters of one sketch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkvParams {
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Multiplier `c` on the sample size `⌈k^4/ε^2⌉·⌈ln(1/δ)⌉`.
    pub oversampling: f64,
    /// Singular values at or below `theta * σ_max` are dropped.
    pub theta: f64,
}

impl FkvParams {
    pub fn new(k: usize, epsilon: f64, delta: f64) -> Self {
        FkvParams {
            k,
            epsilon,
            delta,
            oversampling: 1.0,
            theta: 1e-8,
        }
    }

    pub fn with_oversampling(mut self, c: f64) -> Self {
        self.oversampling = c;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("rank k must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.oversampling > 0.0 && self.oversampling.is_finite()) {
            return Err(Error::invalid("oversampling must be positive"));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::invalid("theta must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Nominal sample count `max(k, ⌈c·⌈k^4/ε^2⌉·⌈ln(1/δ)⌉⌉)` before capping,
    /// as a float so that huge values do not overflow.
    pub fn nominal_samples(&self) -> f64 {
        let k = self.k as f64;
        let base = (k.powi(4) / (self.epsilon * self.epsilon)).ceil() * self.trials() as f64;
        (self.oversampling * base).ceil().max(k)
    }

    /// Number of independent attempts used to boost the success probability.
    pub fn trials(&self) -> usize {
        ((1.0 / self.delta).ln().ceil() as usize).max(1)
    }
}

/// Short description of approximate singular vectors of the view `B`
/// (`B = A` for [`Side::Rows`], `B = A^T` for [`Side::Columns`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchDescription {
    pub side: Side,
    /// Number of lines of the view when the sketch was taken.
    pub lines: usize,
    /// Length of each line, i.e. the dimension of the implied vectors.
    pub line_len: usize,
    /// Sampled line indices `T` (with repetition).
    pub rows: Vec<usize>,
    /// Rescaling weight of each sampled line.
    pub weights: Vec<f64>,
    /// Left singular vectors of `W`, one per kept rank, each of length `|T|`.
    pub u: Vec<Vec<f64>>,
    /// Descending singular values of `W`.
    pub sigma: Vec<f64>,
    pub params: FkvParams,
    pub seed: Option<u64>,
    /// All lines were used with unit weight instead of being sampled.
    pub exact_rows: bool,
    /// All positions were used instead of being sampled.
    pub exact_cols: bool,
    /// Held-out estimate of `|B - B V̂ V̂^T|_F^2` for the kept attempt.
    pub residual_estimate: f64,
    pub trials: usize,
    /// Accesses to the matrix made while sketching.
    pub access: AccessCounts,
}

impl SketchDescription {
    /// Effective rank `k'`.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Set when either stage fell back to using every line or position.
    pub fn is_fallback(&self) -> bool {
        self.exact_rows || self.exact_cols
    }

    /// Coefficients `c_t = u_{t,j} w_t / σ_j` with `V̂_j = Σ_t c_t B_{T_t}`.
    pub fn coefficients(&self, j: usize) -> Vec<f64> {
        self.u[j]
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| u * w / self.sigma[j])
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    fn check_matrix(&self, view: &MatrixView<'_>) -> Result<()> {
        if view.lines() != self.lines || view.line_len() != self.line_len {
            return Err(Error::mismatch(
                format!("{}x{} view", self.lines, self.line_len),
                format!("{}x{}", view.lines(), view.line_len()),
            ));
        }
        Ok(())
    }

    /// Entry `V̂_{pos,j}`, computed from `|T|` matrix queries.
    pub fn query_entry(&self, a: &SampledMatrix, pos: usize, j: usize) -> Result<f64> {
        let view = a.view(self.side);
        self.check_matrix(&view)?;
        if j >= self.rank() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.rank(),
            });
        }
        if pos >= self.line_len {
            return Err(Error::IndexOutOfRange {
                index: pos,
                len: self.line_len,
            });
        }
        let mut acc = 0.0;
        for (&t, c) in self.rows.iter().zip(self.coefficients(j)) {
            acc += c * view.entry(t, pos)?;
        }
        Ok(acc)
    }

    /// Dense `line_len x k'` matrix of the implied vectors.
    pub fn materialize(&self, a: &SampledMatrix) -> Result<DenseMatrix> {
        SketchColumns::new(self, a)?.to_dense()
    }
}

/// One sketch attempt before the held-out comparison.
struct Attempt {
    rows: Vec<usize>,
    weights: Vec<f64>,
    u: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    // positions J, their rescaling, and W's right singular vectors (q x k')
    cols: Vec<usize>,
    col_scale: Vec<f64>,
    v_w: Vec<Vec<f64>>,
}

fn sample_lines<R: Rng + ?Sized>(
    view: &MatrixView<'_>,
    count: usize,
    fro: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut rows = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    let scale = fro / (count as f64).sqrt();
    for _ in 0..count {
        let i = view.sample_line(rng)?;
        rows.push(i);
        weights.push(scale / view.line_norm(i)?);
    }
    Ok((rows, weights))
}

fn attempt<R: Rng + ?Sized>(
    view: &MatrixView<'_>,
    params: &FkvParams,
    p: Option<usize>,
    q: Option<usize>,
    fro_sq: f64,
    rng: &mut R,
) -> Result<Attempt> {
    let fro = fro_sq.sqrt();
    let (rows, weights) = match p {
        Some(p) => sample_lines(view, p, fro, rng)?,
        None => ((0..view.lines()).collect(), vec![1.0; view.lines()]),
    };
    let p_len = rows.len();

    // W is stored column by column: w_cols[c][t]
    let (cols, col_scale, w_cols) = match q {
        None => {
            let mut w_cols = vec![vec![0.0; p_len]; view.line_len()];
            for (t, (&i, &w)) in rows.iter().zip(&weights).enumerate() {
                for (j, col) in w_cols.iter_mut().enumerate() {
                    col[t] = w * view.entry(i, j)?;
                }
            }
            let n = view.line_len();
            ((0..n).collect(), vec![1.0; n], w_cols)
        }
        Some(q) => {
            // sampled lines are rescaled to squared norm |B|_F^2 / p each, so
            // |S|_F = |B|_F in both branches
            let s_fro_sq = fro_sq;
            let mut cols = Vec::with_capacity(q);
            let mut scale = Vec::with_capacity(q);
            let mut w_cols = Vec::with_capacity(q);
            for _ in 0..q {
                // pick a line with probability proportional to its rescaled squared norm
                let t_line = if p.is_some() {
                    rows[rng.random_range(0..p_len)]
                } else {
                    view.sample_line(rng)?
                };
                let j = view.sample_in_line(t_line, rng)?;
                let mut col = Vec::with_capacity(p_len);
                for (&i, &w) in rows.iter().zip(&weights) {
                    col.push(w * view.entry(i, j)?);
                }
                let norm_sq = dot(&col, &col);
                if norm_sq <= 0.0 {
                    return Err(Error::DegenerateColumn(j));
                }
                let c = (s_fro_sq / (q as f64 * norm_sq)).sqrt();
                for x in &mut col {
                    *x *= c;
                }
                cols.push(j);
                scale.push(c);
                w_cols.push(col);
            }
            (cols, scale, w_cols)
        }
    };

    let q_len = w_cols.len();
    let w = DMatrix::from_fn(p_len, q_len, |t, c| w_cols[c][t]);
    let svd = w.svd(true, true);
    let u_mat = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = order
        .first()
        .map_or(0.0, |&i| svd.singular_values[i]);
    if sigma_max <= 0.0 {
        return Err(Error::ZeroNorm("matrix"));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .take(params.k)
        .filter(|&i| svd.singular_values[i] > params.theta * sigma_max)
        .collect();
    Ok(Attempt {
        rows,
        weights,
        u: kept.iter().map(|&i| u_mat.column(i).iter().copied().collect()).collect(),
        sigma: kept.iter().map(|&i| svd.singular_values[i]).collect(),
        cols,
        col_scale,
        v_w: kept.iter().map(|&i| v_t.row(i).iter().copied().collect()).collect(),
    })
}

/// Held-out estimate of `|B|_F^2 - |B V̂|_F^2` using fresh lines restricted
/// to the attempt's positions.
fn heldout_residual<R: Rng + ?Sized>(
    view: &MatrixView<'_>,
    att: &Attempt,
    h: Option<usize>,
    fro_sq: f64,
    rng: &mut R,
) -> Result<f64> {
    let (rows, weights) = match h {
        Some(h) => sample_lines(view, h, fro_sq.sqrt(), rng)?,
        None => ((0..view.lines()).collect(), vec![1.0; view.lines()]),
    };
    let mut captured = 0.0;
    let mut line = vec![0.0; att.cols.len()];
    for (&i, &g) in rows.iter().zip(&weights) {
        for (slot, (&j, &c)) in line.iter_mut().zip(att.cols.iter().zip(&att.col_scale)) {
            *slot = g * c * view.entry(i, j)?;
        }
        for v in &att.v_w {
            let d = dot(&line, v);
            captured += d * d;
        }
    }
    Ok(fro_sq - captured)
}

/// Sketch of the view `B` selected by `side`.
pub fn fkv_sketch_view<R: Rng + ?Sized>(
    view: MatrixView<'_>,
    params: &FkvParams,
    rng: &mut R,
) -> Result<SketchDescription> {
    params.validate()?;
    let (lines, line_len) = (view.lines(), view.line_len());
    if params.k > lines.min(line_len) {
        return Err(Error::invalid(format!(
            "rank k = {} exceeds min(m, n) = {}",
            params.k,
            lines.min(line_len)
        )));
    }
    let before = view.matrix().counts();
    let fro_sq = view.frobenius_squared();
    if fro_sq <= 0.0 {
        return Err(Error::ZeroNorm("matrix"));
    }
    let nominal = params.nominal_samples();
    let p = (nominal < lines as f64).then_some(nominal as usize);
    let q = (nominal < line_len as f64).then_some(nominal as usize);
    let trials = if p.is_none() && q.is_none() {
        1
    } else {
        params.trials()
    };

    let mut best: Option<(Attempt, f64)> = None;
    for _ in 0..trials {
        let att = attempt(&view, params, p, q, fro_sq, rng)?;
        let residual = if trials == 1 {
            f64::NAN
        } else {
            heldout_residual(&view, &att, p, fro_sq, rng)?
        };
        if best.as_ref().is_none_or(|(_, r)| residual < *r) {
            best = Some((att, residual));
        }
    }
    let (att, mut residual) = best.expect("at least one attempt");
    if residual.is_nan() {
        residual = heldout_residual(&view, &att, p, fro_sq, rng)?;
    }
    let after = view.matrix().counts();
    Ok(SketchDescription {
        side: view.side(),
        lines,
        line_len,
        rows: att.rows,
        weights: att.weights,
        u: att.u,
        sigma: att.sigma,
        params: *params,
        seed: None,
        exact_rows: p.is_none(),
        exact_cols: q.is_none(),
        residual_estimate: residual,
        trials,
        access: AccessCounts {
            queries: after.queries - before.queries,
            samples: after.samples - before.samples,
            norm_lookups: after.norm_lookups - before.norm_lookups,
        },
    })
}

/// Approximate right singular vectors of `a`.
pub fn fkv_sketch<R: Rng + ?Sized>(
    a: &SampledMatrix,
    params: &FkvParams,
    rng: &mut R,
) -> Result<SketchDescription> {
    fkv_sketch_view(a.view(Side::Rows), params, rng)
}

/// Approximate left singular vectors of `a`, i.e. the sketch of `a^T`.
pub fn fkv_sketch_left<R: Rng + ?Sized>(
    a: &SampledMatrix,
    params: &FkvParams,
    rng: &mut R,
) -> Result<SketchDescription> {
    fkv_sketch_view(a.view(Side::Columns), params, rng)
}

/// The implied vectors `V̂` of a description, with query and sampling access
/// through the underlying matrix. Repeated sampled lines are merged.
#[derive(Debug, Clone)]
pub struct SketchColumns<'a> {
    view: MatrixView<'a>,
    rows: Vec<usize>,
    // coefs[j][t] over the distinct rows
    coefs: Vec<Vec<f64>>,
    proposals: Vec<Option<SampledVector>>,
    nonzero: Vec<usize>,
    dense: Option<Vec<SampledVector>>,
}

impl<'a> SketchColumns<'a> {
    /// Lazy columns, or materialized ones when the sketch used every line.
    pub fn new(desc: &SketchDescription, a: &'a SampledMatrix) -> Result<Self> {
        let mut cols = Self::lazy(desc, a)?;
        if desc.exact_rows {
            cols.materialize()?;
        }
        Ok(cols)
    }

    /// Columns that always go through the matrix, even for exact sketches.
    pub fn lazy(desc: &SketchDescription, a: &'a SampledMatrix) -> Result<Self> {
        let view = a.view(desc.side);
        desc.check_matrix(&view)?;
        let mut rows: Vec<usize> = desc.rows.clone();
        rows.sort_unstable();
        rows.dedup();
        let slot = |i: usize| rows.binary_search(&i).expect("row is present");
        let mut coefs = vec![vec![0.0; rows.len()]; desc.rank()];
        for (j, cj) in coefs.iter_mut().enumerate() {
            for (&i, c) in desc.rows.iter().zip(desc.coefficients(j)) {
                cj[slot(i)] += c;
            }
        }
        let mut norms = Vec::with_capacity(rows.len());
        for &i in &rows {
            norms.push(view.line_norm(i)?);
        }
        let mut proposals = Vec::with_capacity(coefs.len());
        let mut nonzero = Vec::with_capacity(coefs.len());
        for cj in &coefs {
            let w: Vec<f64> = cj.iter().zip(&norms).map(|(c, n)| c.abs() * n).collect();
            let tree = SampledVector::from_slice(&w)?;
            proposals.push((tree.norm_squared() > 0.0).then_some(tree));
            nonzero.push(cj.iter().filter(|c| **c != 0.0).count());
        }
        Ok(SketchColumns {
            view,
            rows,
            coefs,
            proposals,
            nonzero,
            dense: None,
        })
    }

    /// Distinct sampled lines.
    pub fn distinct_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_materialized(&self) -> bool {
        self.dense.is_some()
    }

    /// Forms every column densely; afterwards queries cost no matrix access.
    pub fn materialize(&mut self) -> Result<()> {
        if self.dense.is_some() {
            return Ok(());
        }
        let n = self.view.line_len();
        let mut cols = vec![vec![0.0; n]; self.coefs.len()];
        for (t, &i) in self.rows.iter().enumerate() {
            for pos in 0..n {
                let b = self.view.entry(i, pos)?;
                if b == 0.0 {
                    continue;
                }
                for (col, cj) in cols.iter_mut().zip(&self.coefs) {
                    col[pos] += cj[t] * b;
                }
            }
        }
        self.dense = Some(
            cols.iter()
                .map(|c| SampledVector::from_slice(c))
                .collect::<Result<_>>()?,
        );
        Ok(())
    }

    /// Dense `line_len x k'` copy.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let n = self.view.line_len();
        let mut out = DenseMatrix::zeros(n, self.coefs.len());
        for pos in 0..n {
            for (j, v) in self.entries_at(pos)?.into_iter().enumerate() {
                out[(pos, j)] = v;
            }
        }
        Ok(out)
    }

    fn check_column(&self, j: usize) -> Result<()> {
        if j >= self.coefs.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.coefs.len(),
            });
        }
        Ok(())
    }

    fn check_pos(&self, pos: usize) -> Result<()> {
        if pos >= self.view.line_len() {
            return Err(Error::IndexOutOfRange {
                index: pos,
                len: self.view.line_len(),
            });
        }
        Ok(())
    }

    /// Rejection sampler for `D_{Σ_t c_t B_t}`: propose `t` with probability
    /// proportional to `c_t^2 |B_t|^2`, draw a position from that line, and
    /// accept with `(Σ c_t B_{t,x})^2 / (P Σ c_t^2 B_{t,x}^2)`.
    fn sample_lazy<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<usize> {
        let tree = self.proposals[j]
            .as_ref()
            .ok_or(Error::DegenerateColumn(j))?;
        let terms = self.nonzero[j] as f64;
        // V̂ columns are close to unit norm, so the expected number of
        // proposals is about P Σ c_t^2 |B_t|^2
        let expected = terms * tree.norm_squared();
        let budget = (64.0 * expected.ceil()).max(64.0).min(u64::MAX as f64) as u64;
        let cj = &self.coefs[j];
        for _ in 0..budget {
            let t = tree.sample(rng)?;
            let pos = self.view.sample_in_line(self.rows[t], rng)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for (&i, &c) in self.rows.iter().zip(cj) {
                if c == 0.0 {
                    continue;
                }
                let term = c * self.view.entry(i, pos)?;
                num += term;
                den += term * term;
            }
            if den > 0.0 && rng.random::<f64>() * terms * den < num * num {
                return Ok(pos);
            }
        }
        Err(Error::RejectionBudgetExhausted { budget })
    }
}

impl ColumnAccess for SketchColumns<'_> {
    fn dim(&self) -> usize {
        self.view.line_len()
    }

    fn columns(&self) -> usize {
        self.coefs.len()
    }

    fn entry(&self, pos: usize, j: usize) -> Result<f64> {
        self.check_column(j)?;
        self.check_pos(pos)?;
        if let Some(dense) = &self.dense {
            return Ok(dense[j].entry(pos));
        }
        let mut acc = 0.0;
        for (&i, &c) in self.rows.iter().zip(&self.coefs[j]) {
            acc += c * self.view.entry(i, pos)?;
        }
        Ok(acc)
    }

    fn entries_at(&self, pos: usize) -> Result<Vec<f64>> {
        self.check_pos(pos)?;
        if let Some(dense) = &self.dense {
            return Ok(dense.iter().map(|c| c.entry(pos)).collect());
        }
        let mut out = vec![0.0; self.coefs.len()];
        for (t, &i) in self.rows.iter().enumerate() {
            let b = self.view.entry(i, pos)?;
            for (o, cj) in out.iter_mut().zip(&self.coefs) {
                *o += cj[t] * b;
            }
        }
        Ok(out)
    }

    fn column_norm_sq(&self, j: usize) -> f64 {
        match &self.dense {
            Some(dense) => dense[j].norm_squared(),
            None => 1.0,
        }
    }

    fn sample_column<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<usize> {
        self.check_column(j)?;
        match &self.dense {
            Some(dense) => dense[j].sample(rng).map_err(|_| Error::DegenerateColumn(j)),
            None => self.sample_lazy(j, rng),
        }
    }
}

/// Deviation of a column set from orthonormality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaOrthoCertificate {
    pub alpha: f64,
    pub k: usize,
    /// `max_i | |V̂_i|^2 - 1 |`.
    pub max_diagonal_deviation: f64,
    /// `max_{s != t} |V̂_s · V̂_t|`.
    pub max_off_diagonal: f64,
}

impl AlphaOrthoCertificate {
    pub fn from_columns(v: &DenseMatrix, alpha: f64) -> Self {
        let cols: Vec<Vec<f64>> = (0..v.ncols()).map(|j| v.column(j)).collect();
        let mut diag: f64 = 0.0;
        let mut off: f64 = 0.0;
        for s in 0..cols.len() {
            diag = diag.max((dot(&cols[s], &cols[s]) - 1.0).abs());
            for t in s + 1..cols.len() {
                off = off.max(dot(&cols[s], &cols[t]).abs());
            }
        }
        AlphaOrthoCertificate {
            alpha,
            k: cols.len(),
            max_diagonal_deviation: diag,
            max_off_diagonal: off,
        }
    }

    /// Both deviations are within `α / k`.
    pub fn passes(&self) -> bool {
        let bound = self.alpha / self.k.max(1) as f64;
        self.max_diagonal_deviation <= bound && self.max_off_diagonal <= bound
    }

    /// Smallest `α` for which the certificate would pass.
    pub fn minimal_alpha(&self) -> f64 {
        self.k as f64 * self.max_diagonal_deviation.max(self.max_off_diagonal)
    }
}

/// Dense check of approximate orthonormality at `α = εk/16` unless another
/// `alpha` is given.
pub fn verify_alpha_ortho(
    desc: &SketchDescription,
    a: &SampledMatrix,
    alpha: Option<f64>,
) -> Result<AlphaOrthoCertificate> {
    let alpha = alpha.unwrap_or(desc.params.epsilon * desc.params.k as f64 / 16.0);
    Ok(AlphaOrthoCertificate::from_columns(&desc.materialize(a)?, alpha))
}

/// Largest relative residual `|B_i - Π B_i| / |B_i|` over the nonzero lines
/// of the view, where `Π` projects onto the span of the implied vectors.
pub fn span_residual(desc: &SketchDescription, a: &SampledMatrix) -> Result<f64> {
    let v = desc.materialize(a)?;
    let basis = orthonormal_basis(&v);
    let b = match desc.side {
        Side::Rows => a.to_dense(),
        Side::Columns => a.to_dense().transpose(),
    };
    let mut worst: f64 = 0.0;
    for i in 0..b.nrows() {
        let mut r = b.row(i).to_vec();
        let norm = dot(&r, &r).sqrt();
        if norm == 0.0 {
            continue;
        }
        for q in &basis {
            let c = dot(&r, q);
            for (x, y) in r.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
        worst = worst.max(dot(&r, &r).sqrt() / norm);
    }
    Ok(worst)
}

/// Every line of the view lies in the span of `V̂` within relative `1e-6`.
pub fn span_check(desc: &SketchDescription, a: &SampledMatrix) -> Result<bool> {
    Ok(span_residual(desc, a)? <= 1e-6)
}

/// Modified Gram-Schmidt with reorthogonalization; drops dependent columns.
fn orthonormal_basis(v: &DenseMatrix) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..v.ncols() {
        let mut c = v.column(j);
        let start = dot(&c, &c).sqrt();
        for _ in 0..2 {
            for q in &basis {
                let d = dot(&c, q);
                for (x, y) in c.iter_mut().zip(q) {
                    *x -= d * y;
                }
            }
        }
        let n = dot(&c, &c).sqrt();
        if n > 1e-10 * start && n > 0.0 {
            basis.push(c.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}
