//! Anchor seeking: sketch the row and column spaces, estimate the small
//! core `Û^T A V̂`, then for random directions `x` sample from `D_{Û M̃ x}`
//! and keep the most frequent index of each projection.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::{norm, DenseMatrix};
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_product, ColumnAccess, Direct, ProductEstimate, RejectionSampleStats,
    RejectionSampler, Transposed,
};
use crate::fkv::{fkv_sketch, fkv_sketch_left, FkvParams, SketchColumns, SketchDescription};
use crate::sample_model::{AccessCounts, SampledMatrix};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ANCHORSEEK_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FasConfig {
    pub k: usize,
    /// Upper bound on the condition number of the input.
    pub kappa: f64,
    /// Total failure probability.
    pub delta: f64,
    /// Projection count; defaults to `max(k, ⌈(3/α) k ln k⌉)`.
    pub projections: Option<usize>,
    /// Samples per projection; defaults to `⌈ln^2 m⌉`.
    pub votes: Option<usize>,
    /// Total-variation budget; defaults to a value below the vote bound.
    pub epsilon: Option<f64>,
    pub coverage_alpha: f64,
    pub c_v: f64,
    pub c_u: f64,
    pub c_zeta: f64,
    /// Sample-size multiplier passed to both sketches.
    pub fkv_oversampling: f64,
    pub fkv_theta: f64,
    /// Normalize rows by their ℓ1 norm before solving.
    pub normalize: bool,
    pub seed: u64,
    /// Worker threads; falls back to `ANCHORSEEK_THREADS`, then the core count.
    pub threads: Option<usize>,
}

impl FasConfig {
    pub fn new(k: usize, kappa: f64, delta: f64) -> Self {
        FasConfig {
            k,
            kappa,
            delta,
            projections: None,
            votes: None,
            epsilon: None,
            coverage_alpha: 1.0,
            c_v: 1.0,
            c_u: 1.0,
            c_zeta: 1.0,
            fkv_oversampling: 1.0,
            fkv_theta: 1e-8,
            normalize: true,
            seed: 0,
            threads: None,
        }
    }

    fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.k == 0 || self.k > m.min(n) {
            return Err(Error::invalid(format!(
                "rank k = {} must lie in [1, min(m, n) = {}]",
                self.k,
                m.min(n)
            )));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be >= 1, got {}", self.kappa)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        for (name, v) in [
            ("coverage alpha", self.coverage_alpha),
            ("c_v", self.c_v),
            ("c_u", self.c_u),
            ("c_zeta", self.c_zeta),
            ("fkv oversampling", self.fkv_oversampling),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.projections == Some(0) || self.votes == Some(0) {
            return Err(Error::invalid("projections and votes must be at least 1"));
        }
        Ok(())
    }
}

/// `⌈(3/α) k ln k⌉`, at least 1.
pub fn required_projections(k: usize, coverage_alpha: f64) -> usize {
    let k_f = k as f64;
    ((3.0 / coverage_alpha * k_f * k_f.ln()).ceil() as usize).max(1)
}

/// `k exp(-α s / (3k))`: chance that some anchor is never the winner.
pub fn coverage_failure_bound(k: usize, coverage_alpha: f64, s: usize) -> f64 {
    let k_f = k as f64;
    (k_f * (-coverage_alpha * s as f64 / (3.0 * k_f)).exp()).min(1.0)
}

/// Margin `2 sqrt(2 ln(4N/δ)/N) + ε` above which the vote winner is the
/// true mode with high probability.
pub fn vote_margin_threshold(votes: usize, delta: f64, epsilon: f64) -> f64 {
    let n = votes as f64;
    2.0 * (2.0 * (4.0 * n / delta).ln() / n).sqrt() + epsilon
}

/// `2 sqrt(2 ln(4 L / δ) / L)` with `L = ln^2 m`; infinite when `L = 0`.
pub fn epsilon_upper_bound(m: usize, delta: f64) -> f64 {
    let l = (m as f64).ln().powi(2);
    if l <= 0.0 {
        return f64::INFINITY;
    }
    2.0 * (2.0 * (4.0 * l / delta).ln() / l).sqrt()
}

/// Tolerances derived from a configuration and the input size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    pub epsilon_bound: f64,
    /// The default ε hit the 0.5 cap because the bound is loose at this m.
    pub epsilon_clamped: bool,
    pub epsilon_v: f64,
    pub epsilon_u: f64,
    pub zeta: f64,
    pub delta_v: f64,
    pub delta_u: f64,
    pub eta: f64,
    pub gamma: f64,
    pub projections: usize,
    pub required_projections: usize,
    pub coverage_failure_bound: f64,
    pub votes: usize,
    pub vote_threshold: f64,
    pub fkv_v: FkvParams,
    pub fkv_u: FkvParams,
}

impl DerivedParams {
    pub fn new(m: usize, n: usize, cfg: &FasConfig) -> Result<Self> {
        cfg.validate(m, n)?;
        let k = cfg.k as f64;
        let kappa = cfg.kappa;
        let bound = epsilon_upper_bound(m, cfg.delta);
        let (epsilon, clamped) = match cfg.epsilon {
            Some(e) => (e, false),
            None => {
                let target = 0.9 * bound;
                (target.min(0.5), target > 0.5)
            }
        };
        let epsilon_v = cfg.c_v * (epsilon / (k.sqrt() * kappa)).min(1.0 / (k * kappa * kappa));
        let epsilon_u = cfg.c_u * (epsilon / k).min(1.0 / (k * kappa * kappa));
        let zeta = cfg.c_zeta * epsilon / (k * k * kappa);
        // 1 - (1 - δ)^{1/4}
        let quarter = -((-cfg.delta).ln_1p() / 4.0).exp_m1();
        let required = required_projections(cfg.k, cfg.coverage_alpha);
        let projections = cfg.projections.unwrap_or(required.max(cfg.k));
        let gamma = -((-cfg.delta).ln_1p() / (4.0 * projections as f64)).exp_m1();
        let votes = cfg
            .votes
            .unwrap_or_else(|| ((m as f64).ln().powi(2).ceil() as usize).max(1));
        let fkv = |eps: f64| FkvParams {
            k: cfg.k,
            epsilon: eps,
            delta: quarter,
            oversampling: cfg.fkv_oversampling,
            theta: cfg.fkv_theta,
        };
        Ok(DerivedParams {
            m,
            n,
            epsilon,
            epsilon_bound: bound,
            epsilon_clamped: clamped,
            epsilon_v,
            epsilon_u,
            zeta,
            delta_v: quarter,
            delta_u: quarter,
            eta: quarter,
            gamma,
            projections,
            required_projections: required,
            coverage_failure_bound: coverage_failure_bound(cfg.k, cfg.coverage_alpha, projections),
            votes,
            vote_threshold: vote_margin_threshold(votes, cfg.delta, epsilon),
            fkv_v: fkv(epsilon_v),
            fkv_u: fkv(epsilon_u),
        })
    }
}

/// Uniformly random direction on the unit sphere in `R^k`.
pub fn random_unit_vector<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&x);
        if len > 0.0 {
            return x.into_iter().map(|v| v / len).collect();
        }
    }
}

/// Copy of `a` with every row divided by its ℓ1 norm.
pub fn l1_normalize_view(a: &SampledMatrix) -> Result<SampledMatrix> {
    SampledMatrix::from_dense(&a.to_dense().l1_normalized()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    /// Most frequent index; ties go to the smallest.
    pub winner: usize,
    /// `(index, count)` pairs in increasing index order.
    pub histogram: Vec<(usize, u64)>,
    /// `(N_max - N_secmax) / N`.
    pub margin: f64,
    pub stats: RejectionSampleStats,
}

/// Mode, histogram, and margin of a list of draws.
pub fn tally(draws: &[usize]) -> (usize, Vec<(usize, u64)>, f64) {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &d in draws {
        *counts.entry(d).or_default() += 1;
    }
    let mut best = (usize::MAX, 0u64);
    let mut second = 0u64;
    for (&i, &c) in &counts {
        if c > best.1 {
            second = best.1;
            best = (i, c);
        } else if c > second {
            second = c;
        }
    }
    let margin = if draws.is_empty() {
        0.0
    } else {
        (best.1 - second) as f64 / draws.len() as f64
    };
    (best.0, counts.into_iter().collect(), margin)
}

/// Computes `ỹ = M̃ x`, draws `votes` indices from `D_{Û ỹ}`, and returns
/// the most frequent one.
pub fn project_and_vote<C: ColumnAccess, R: Rng + ?Sized>(
    u_hat: &C,
    m_tilde: &DenseMatrix,
    x: &[f64],
    votes: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<VoteOutcome> {
    if votes == 0 {
        return Err(Error::invalid("votes must be at least 1"));
    }
    if m_tilde.nrows() != u_hat.columns() {
        return Err(Error::mismatch(u_hat.columns(), m_tilde.nrows()));
    }
    let y = m_tilde.mul_vec(x);
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroNorm("projection"));
    }
    let sampler = RejectionSampler::new(u_hat, &y, gamma)?;
    let (draws, stats) = sampler.sample_many(votes, rng)?;
    let (winner, histogram, margin) = tally(&draws);
    Ok(VoteOutcome {
        winner,
        histogram,
        margin,
        stats,
    })
}

/// Sketches and the estimated core, ready to answer projections.
#[derive(Debug)]
pub struct Pipeline<'a> {
    pub matrix: &'a SampledMatrix,
    pub derived: DerivedParams,
    pub v_sketch: SketchDescription,
    pub u_sketch: SketchDescription,
    pub v_cols: SketchColumns<'a>,
    pub u_cols: SketchColumns<'a>,
    pub product: ProductEstimate,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub sketch_v_ms: f64,
    pub sketch_u_ms: f64,
    pub product_ms: f64,
    pub projections_ms: f64,
    pub total_ms: f64,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl<'a> Pipeline<'a> {
    /// Runs both sketches and the core estimate on an already normalized matrix.
    pub fn build<R: Rng + ?Sized>(
        b: &'a SampledMatrix,
        derived: DerivedParams,
        rng: &mut R,
    ) -> Result<Self> {
        let mut timings = Timings::default();
        let t = Instant::now();
        let v_sketch = fkv_sketch(b, &derived.fkv_v, rng)?;
        timings.sketch_v_ms = ms_since(t);
        let t = Instant::now();
        let u_sketch = fkv_sketch_left(b, &derived.fkv_u, rng)?;
        timings.sketch_u_ms = ms_since(t);
        let v_cols = SketchColumns::new(&v_sketch, b)?;
        let u_cols = SketchColumns::new(&u_sketch, b)?;
        let t = Instant::now();
        let product = estimate_product(
            b,
            &Transposed(&u_cols),
            &Direct(&v_cols),
            derived.zeta,
            derived.eta,
            rng,
        )?;
        timings.product_ms = ms_since(t);
        Ok(Pipeline {
            matrix: b,
            derived,
            v_sketch,
            u_sketch,
            v_cols,
            u_cols,
            product,
            timings,
        })
    }

    /// Dimension of the direction space (the kept rank of `V̂`).
    pub fn direction_dim(&self) -> usize {
        self.v_sketch.rank()
    }

    pub fn project<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        votes: usize,
        rng: &mut R,
    ) -> Result<VoteOutcome> {
        project_and_vote(
            &self.u_cols,
            &self.product.matrix,
            x,
            votes,
            self.derived.gamma,
            rng,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionStatus {
    Ok,
    /// `ỹ = 0`; the slot is consumed without a vote.
    ZeroDirection,
    /// The rejection budget ran out.
    RejectionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub x: Vec<f64>,
    pub winner: Option<usize>,
    pub histogram: Vec<(usize, u64)>,
    pub margin: f64,
    /// The empirical margin is at or below the vote threshold.
    pub low_confidence: bool,
    pub status: ProjectionStatus,
    pub proposals: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchSummary {
    pub rank: usize,
    pub sampled_lines: usize,
    pub exact_rows: bool,
    pub exact_cols: bool,
    pub residual_estimate: f64,
    pub access: AccessCounts,
}

impl From<&SketchDescription> for SketchSummary {
    fn from(d: &SketchDescription) -> Self {
        SketchSummary {
            rank: d.rank(),
            sampled_lines: d.rows.len(),
            exact_rows: d.exact_rows,
            exact_cols: d.exact_cols,
            residual_estimate: d.residual_estimate,
            access: d.access,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    pub anchors: Vec<usize>,
    pub projections: Vec<ProjectionRecord>,
    /// Projections that produced a winner.
    pub effective_projections: usize,
    /// Fewer than `k` distinct anchors were found.
    pub incomplete: bool,
    pub config: FasConfig,
    pub derived: DerivedParams,
    pub seed: u64,
    pub v_sketch: SketchSummary,
    pub u_sketch: SketchSummary,
    pub core: DenseMatrix,
    pub product_samples_per_entry: usize,
    pub rejection: RejectionSampleStats,
    /// Matrix accesses after the normalized matrix was built.
    pub access: AccessCounts,
    pub timings: Timings,
    pub warnings: Vec<String>,
}

impl AnchorReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Worker count from the config, the environment, or the machine.
pub fn thread_limit(cfg: &FasConfig) -> usize {
    cfg.threads
        .or_else(|| std::env::var(THREADS_ENV).ok()?.parse().ok())
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

fn run_projection(pipe: &Pipeline<'_>, seed: u64) -> ProjectionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_unit_vector(pipe.direction_dim(), &mut rng);
    match pipe.project(&x, pipe.derived.votes, &mut rng) {
        Ok(v) => ProjectionRecord {
            low_confidence: v.margin <= pipe.derived.vote_threshold,
            x,
            winner: Some(v.winner),
            histogram: v.histogram,
            margin: v.margin,
            status: ProjectionStatus::Ok,
            proposals: v.stats.proposed,
            accepted: v.stats.accepted,
        },
        Err(e) => ProjectionRecord {
            x,
            winner: None,
            histogram: Vec::new(),
            margin: 0.0,
            low_confidence: true,
            status: match e {
                Error::ZeroNorm(_) => ProjectionStatus::ZeroDirection,
                _ => ProjectionStatus::RejectionFailed,
            },
            proposals: 0,
            accepted: 0,
        },
    }
}

/// Runs the full anchor search with the given random source.
pub fn fas_run<R: Rng + ?Sized>(
    a: &SampledMatrix,
    cfg: &FasConfig,
    rng: &mut R,
) -> Result<AnchorReport> {
    let start = Instant::now();
    let derived = DerivedParams::new(a.nrows(), a.ncols(), cfg)?;
    let b = if cfg.normalize {
        l1_normalize_view(a)?
    } else {
        a.clone()
    };
    let mut warnings = Vec::new();
    let pipe = Pipeline::build(&b, derived, rng)?;
    for (name, d) in [("V", &pipe.v_sketch), ("U", &pipe.u_sketch)] {
        if d.is_fallback() {
            warnings.push(format!(
                "sketch of {name} used every {} (sample size exceeded the dimension)",
                if d.exact_rows { "line" } else { "position" }
            ));
        }
        if d.rank() < cfg.k {
            warnings.push(format!("sketch of {name} kept rank {} < k = {}", d.rank(), cfg.k));
        }
    }
    if pipe.derived.epsilon_clamped {
        warnings.push(format!(
            "epsilon capped at 0.5; the bound {:.3} is loose for m = {}",
            pipe.derived.epsilon_bound,
            a.nrows()
        ));
    }

    let s = pipe.derived.projections;
    let seeds: Vec<u64> = (0..s).map(|_| rng.random()).collect();
    let t = Instant::now();
    let workers = thread_limit(cfg).min(s);
    let mut records: Vec<Option<ProjectionRecord>> = vec![None; s];
    if workers <= 1 {
        for (slot, &seed) in records.iter_mut().zip(&seeds) {
            *slot = Some(run_projection(&pipe, seed));
        }
    } else {
        std::thread::scope(|scope| {
            let pipe = &pipe;
            let seeds = &seeds;
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        (w..s)
                            .step_by(workers)
                            .map(|i| (i, run_projection(pipe, seeds[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, rec) in h.join().expect("projection worker panicked") {
                    records[i] = Some(rec);
                }
            }
        });
    }
    let records: Vec<ProjectionRecord> = records.into_iter().map(|r| r.expect("filled")).collect();
    let mut timings = pipe.timings;
    timings.projections_ms = ms_since(t);

    let anchors: BTreeSet<usize> = records.iter().filter_map(|r| r.winner).collect();
    let effective = records.iter().filter(|r| r.winner.is_some()).count();
    let failed = s - effective;
    if failed > 0 {
        warnings.push(format!("{failed} of {s} projections produced no winner"));
    }
    let mut rejection = RejectionSampleStats {
        gamma: pipe.derived.gamma,
        budget: crate::estimate::rejection_budget(pipe.u_cols.columns(), pipe.derived.gamma),
        ..Default::default()
    };
    for r in &records {
        rejection.accepted += r.accepted;
        rejection.proposed += r.proposals;
    }
    if rejection.proposed > 0 {
        rejection.acceptance_rate = rejection.accepted as f64 / rejection.proposed as f64;
    }
    let incomplete = anchors.len() < cfg.k;
    if incomplete {
        warnings.push(format!("found {} distinct anchors, expected {}", anchors.len(), cfg.k));
    }
    timings.total_ms = ms_since(start);
    Ok(AnchorReport {
        anchors: anchors.into_iter().collect(),
        projections: records,
        effective_projections: effective,
        incomplete,
        config: cfg.clone(),
        seed: cfg.seed,
        v_sketch: SketchSummary::from(&pipe.v_sketch),
        u_sketch: SketchSummary::from(&pipe.u_sketch),
        core: pipe.product.matrix.clone(),
        product_samples_per_entry: pipe.product.samples_per_entry,
        derived: pipe.derived,
        rejection,
        access: b.counts(),
        timings,
        warnings,
    })
}

/// Runs with a ChaCha stream seeded from `cfg.seed`.
pub fn fas_run_seeded(a: &SampledMatrix, cfg: &FasConfig) -> Result<AnchorReport> {
    fas_run(a, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}
