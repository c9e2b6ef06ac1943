//! Synthetic separable matrices `A = F A_R` with known anchor rows.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{condition_from_spectrum, singular_values};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::io::write_matrix_market;

/// Interior rows are redrawn this many times before being shrunk.
const INTERIOR_TRIES: usize = 64;
const KAPPA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// Anchors are blended toward disjoint supports until `κ(A)` drops to this.
    pub kappa_target: Option<f64>,
    /// Separation margin: every mixing weight of an interior row is at most `1 - margin`.
    pub margin: f64,
    pub seed: u64,
}

impl GenerateParams {
    pub fn new(k: usize, m: usize, n: usize, seed: u64) -> Self {
        GenerateParams {
            k,
            m,
            n,
            kappa_target: None,
            margin: 0.2,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.m.min(self.n) {
            return Err(Error::invalid(format!(
                "k = {} must lie in [1, min(m, n) = {}]",
                self.k,
                self.m.min(self.n)
            )));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::invalid(format!(
                "margin must lie in (0, 1), got {}",
                self.margin
            )));
        }
        if self.k >= 2 && 1.0 - self.margin < 1.0 / self.k as f64 {
            return Err(Error::invalid(format!(
                "margin {} is infeasible for k = {}: weights capped at {} cannot sum to 1",
                self.margin,
                self.k,
                1.0 - self.margin
            )));
        }
        if let Some(t) = self.kappa_target {
            if t.is_nan() || t < 1.0 {
                return Err(Error::invalid(format!("kappa target must be >= 1, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableInstance {
    /// `m x n`, nonnegative, rows summing to 1.
    pub a: DenseMatrix,
    /// Sorted anchor row indices `R*`.
    pub anchors: Vec<usize>,
    /// `m x k` row-stochastic mixing matrix; one-hot on anchor rows.
    pub f: DenseMatrix,
    pub params: GenerateParams,
    /// Exact condition number of `A` over its `k` nonzero singular values.
    pub kappa: f64,
    pub warnings: Vec<String>,
}

/// Sidecar metadata written next to a generated matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub anchors: Vec<usize>,
    /// SHA-256 of `F` as row-major little-endian `f64`s, hex encoded.
    pub f_sha256: String,
    pub params: GenerateParams,
    pub seed: u64,
    pub kappa: f64,
}

impl SeparableInstance {
    /// The anchor rows `A_R`.
    pub fn anchor_rows(&self) -> DenseMatrix {
        self.a.select_rows(&self.anchors)
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            anchors: self.anchors.clone(),
            f_sha256: checksum(&self.f),
            params: self.params.clone(),
            seed: self.params.seed,
            kappa: self.kappa,
        }
    }
}

pub fn checksum(a: &DenseMatrix) -> String {
    let mut h = Sha256::new();
    for v in a.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn dirichlet<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = x.iter().sum();
        if s > 0.0 {
            return x.into_iter().map(|v| v / s).collect();
        }
    }
}

fn interior_weights<R: Rng + ?Sized>(k: usize, cap: f64, rng: &mut R) -> Vec<f64> {
    let mut w = dirichlet(k, rng);
    for _ in 1..INTERIOR_TRIES {
        if w.iter().all(|&v| v <= cap) {
            return w;
        }
        w = dirichlet(k, rng);
    }
    let max = w.iter().copied().fold(0.0, f64::max);
    if max > cap {
        // move toward the centroid just far enough to respect the cap
        let centre = 1.0 / k as f64;
        let lambda = (max - cap) / (max - centre);
        for v in &mut w {
            *v = (1.0 - lambda) * *v + lambda * centre;
        }
    }
    w
}

/// Cholesky factor `L` (lower, row-major `k x k`) of a positive definite matrix.
fn cholesky(g: &DenseMatrix) -> Result<DenseMatrix> {
    let k = g.nrows();
    let mut l = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::invalid("mixing matrix is rank deficient"));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// `κ(F A_R)` via the `k x n` core `L^T A_R`, where `F^T F = L L^T`.
fn separable_kappa(f_gram_chol: &DenseMatrix, anchors: &DenseMatrix) -> f64 {
    let core = f_gram_chol
        .transpose()
        .matmul(anchors)
        .expect("k x k times k x n");
    condition_from_spectrum(&singular_values(&core), KAPPA_TOL)
}

/// Draws a separable instance. Anchor rows are Dirichlet(1) vectors placed at a
/// random `k`-subset of rows; interior rows are Dirichlet(1) mixtures with
/// every weight at most `1 - margin`.
pub fn generate(params: &GenerateParams) -> Result<SeparableInstance> {
    params.validate()?;
    let GenerateParams { k, m, n, .. } = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut anchors = sample_indices(&mut rng, m, k).into_vec();
    anchors.sort_unstable();

    let mut a_r = DenseMatrix::zeros(k, n);
    for i in 0..k {
        a_r.row_mut(i).copy_from_slice(&dirichlet(n, &mut rng));
    }

    let cap = 1.0 - params.margin;
    let mut f = DenseMatrix::zeros(m, k);
    let mut next_anchor = 0;
    for i in 0..m {
        if next_anchor < k && anchors[next_anchor] == i {
            f[(i, next_anchor)] = 1.0;
            next_anchor += 1;
        } else if k == 1 {
            f[(i, 0)] = 1.0;
        } else {
            f.row_mut(i).copy_from_slice(&interior_weights(k, cap, &mut rng));
        }
    }

    let chol = cholesky(&f.transpose().matmul(&f)?)?;
    let mut kappa = separable_kappa(&chol, &a_r);
    let mut warnings = Vec::new();
    if let Some(target) = params.kappa_target {
        if kappa > target {
            // blend toward block rows with disjoint supports, which are orthogonal
            let mut blocks = DenseMatrix::zeros(k, n);
            for i in 0..k {
                let (lo, hi) = (i * n / k, (i + 1) * n / k);
                for j in lo..hi {
                    blocks[(i, j)] = 1.0 / (hi - lo) as f64;
                }
            }
            let base = a_r.clone();
            for step in 1..=10 {
                let lambda = step as f64 / 10.0;
                for i in 0..k {
                    for j in 0..n {
                        a_r[(i, j)] = (1.0 - lambda) * base[(i, j)] + lambda * blocks[(i, j)];
                    }
                }
                kappa = separable_kappa(&chol, &a_r);
                if kappa <= target {
                    break;
                }
            }
            if kappa > target {
                warnings.push(format!(
                    "condition number {kappa:.3} exceeds target {target} after adjustment"
                ));
            }
        }
    }

    let mut a = f.matmul(&a_r)?;
    for i in 0..m {
        let s: f64 = a.row(i).iter().sum();
        for v in a.row_mut(i) {
            *v /= s;
        }
    }
    for (t, &i) in anchors.iter().enumerate() {
        a.row_mut(i).copy_from_slice(a_r.row(t));
    }
    Ok(SeparableInstance {
        a,
        anchors,
        f,
        params: params.clone(),
        kappa,
        warnings,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<prefix>.mtx` and `<prefix>.json`; returns both paths.
pub fn write_instance(inst: &SeparableInstance, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let mtx = with_suffix(prefix, ".mtx");
    let json = with_suffix(prefix, ".json");
    write_matrix_market(BufWriter::new(File::create(&mtx)?), &inst.a)?;
    let text =
        serde_json::to_string_pretty(&inst.sidecar()).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&json, text + "\n")?;
    Ok((mtx, json))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::spa;

    #[test]
    fn all_rows_anchors_when_k_equals_m() {
        let inst = generate(&GenerateParams::new(4, 4, 10, 1)).unwrap();
        assert_eq!(inst.anchors, vec![0, 1, 2, 3]);
        assert_eq!(inst.f, DenseMatrix::identity(4));
    }

    #[test]
    fn invariants_hold() {
        let mut p = GenerateParams::new(3, 60, 20, 2);
        p.margin = 0.25;
        let inst = generate(&p).unwrap();
        let recon = inst.f.matmul(&inst.anchor_rows()).unwrap();
        assert!(recon.sub(&inst.a).unwrap().frobenius() < 1e-12);
        for i in 0..60 {
            let f = inst.f.row(i);
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((inst.a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if inst.anchors.contains(&i) {
                assert_eq!(f.iter().filter(|&&v| v == 1.0).count(), 1);
            } else {
                assert!(f.iter().all(|&v| v > 0.0 && v <= 0.75 + 1e-15));
            }
        }
        assert!(inst.a.as_slice().iter().all(|&v| v >= 0.0));
        let s = singular_values(&inst.a);
        assert!(s[3] <= 1e-10 * s[0]);
        let direct = condition_from_spectrum(&s[..3], 0.0);
        assert!((direct - inst.kappa).abs() <= 1e-8 * direct);
    }

    #[test]
    fn spa_recovers_generated_anchors() {
        for seed in 0..10 {
            let inst = generate(&GenerateParams::new(4, 80, 30, seed)).unwrap();
            let mut got = spa(&inst.a, 4).unwrap().anchors;
            got.sort_unstable();
            assert_eq!(got, inst.anchors, "seed {seed}");
        }
    }

    #[test]
    fn kappa_target_is_met() {
        let mut p = GenerateParams::new(5, 100, 40, 3);
        let free = generate(&p).unwrap().kappa;
        p.kappa_target = Some(free * 0.5);
        let inst = generate(&p).unwrap();
        assert!(inst.kappa <= free * 0.5);
        assert!(inst.warnings.is_empty());
    }

    #[test]
    fn deterministic_and_checksummed() {
        let p = GenerateParams::new(3, 30, 12, 9);
        let a = generate(&p).unwrap();
        let b = generate(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sidecar().f_sha256.len(), 64);
        assert_ne!(
            a.sidecar().f_sha256,
            generate(&GenerateParams::new(3, 30, 12, 10)).unwrap().sidecar().f_sha256
        );
    }

    #[test]
    fn rejects_infeasible_parameters() {
        assert!(generate(&GenerateParams::new(5, 3, 10, 0)).is_err());
        let mut p = GenerateParams::new(2, 10, 10, 0);
        p.margin = 0.6;
        assert!(generate(&p).is_err());
        p.margin = 0.0;
        assert!(generate(&p).is_err());
    }

    #[test]
    fn rank_one_instances() {
        let inst = generate(&GenerateParams::new(1, 8, 5, 4)).unwrap();
        let anchor = inst.a.row(inst.anchors[0]).to_vec();
        for i in 0..8 {
            for (x, y) in inst.a.row(i).iter().zip(&anchor) {
                assert!((x - y).abs() <= 1e-15);
            }
        }
    }
}
