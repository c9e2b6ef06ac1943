//! Dense reference algorithms: one-sided Jacobi SVD, the successive
//! projection algorithm, and exact divide-and-conquer anchoring.
//!
//! Everything here reads the whole matrix. These routines are oracles for
//! the sampling pipeline and share no numerical code with it.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use crate::dense::DenseMatrix;
use crate::dense::{dot, norm};
use crate::error::{Error, Result};
use crate::fas::random_unit_vector;

/// Truncated singular value decomposition `A ≈ U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m x r` left singular vectors.
    pub u: DenseMatrix,
    /// Descending singular values.
    pub sigma: Vec<f64>,
    /// `n x r` right singular vectors.
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.nrows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("factor shapes agree")
    }
}

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 60;

/// Upper-triangular factor of a Householder QR of a tall matrix, stored by columns.
fn householder_r(cols: &mut [Vec<f64>]) -> Vec<Vec<f64>> {
    let c = cols.len();
    let m = cols.first().map_or(0, Vec::len);
    for k in 0..c.min(m) {
        let x_norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if x_norm == 0.0 {
            continue;
        }
        let alpha = if cols[k][k] > 0.0 { -x_norm } else { x_norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if v_norm_sq == 0.0 {
            continue;
        }
        for col in cols.iter_mut().skip(k) {
            let proj = 2.0 * dot(&v, &col[k..]) / v_norm_sq;
            for (x, vi) in col[k..].iter_mut().zip(&v) {
                *x -= proj * vi;
            }
        }
    }
    cols.iter()
        .enumerate()
        .map(|(j, col)| {
            let mut r = col[..c].to_vec();
            // below the diagonal only rounding residue of the reflections remains
            for x in r.iter_mut().skip(j + 1) {
                *x = 0.0;
            }
            r
        })
        .collect()
}

/// Hestenes one-sided Jacobi on the columns of a square matrix. Returns the
/// orthogonalized columns and the accumulated rotation.
fn one_sided_jacobi(mut g: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let c = g.len();
    let mut v: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut e = vec![0.0; c];
            e[j] = 1.0;
            e
        })
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = dot(&g[p], &g[p]);
                let beta = dot(&g[q], &g[q]);
                let gamma = dot(&g[p], &g[q]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (gp, gq) = split_pair(&mut g, p, q);
                rotate(gp, gq, cs, sn);
                let (vp, vq) = split_pair(&mut v, p, q);
                rotate(vp, vq, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    (g, v)
}

fn split_pair(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    let (head, tail) = cols.split_at_mut(q);
    (&mut head[p], &mut tail[0])
}

fn rotate(x: &mut [f64], y: &mut [f64], cs: f64, sn: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = cs * xa - sn * yb;
        *b = sn * xa + cs * yb;
    }
}

/// Full thin SVD of a tall (`rows >= cols`) matrix given by columns.
fn tall_svd(cols: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let mut work = cols.to_vec();
    let r = householder_r(&mut work);
    let (g, v) = one_sided_jacobi(r);
    let mut order: Vec<usize> = (0..g.len()).collect();
    let sig: Vec<f64> = g.iter().map(|c| norm(c)).collect();
    order.sort_by(|&a, &b| sig[b].total_cmp(&sig[a]));
    let sigma: Vec<f64> = order.iter().map(|&j| sig[j]).collect();
    let v_sorted: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();
    // left vectors of the original matrix: A v_j / sigma_j
    let m = cols.first().map_or(0, Vec::len);
    let u: Vec<Vec<f64>> = v_sorted
        .iter()
        .zip(&sigma)
        .map(|(vj, &s)| {
            let mut out = vec![0.0; m];
            if s > 0.0 {
                for (col, &w) in cols.iter().zip(vj) {
                    if w != 0.0 {
                        for (o, x) in out.iter_mut().zip(col) {
                            *o += w * x;
                        }
                    }
                }
                for o in &mut out {
                    *o /= s;
                }
            }
            out
        })
        .collect();
    (u, sigma, v_sorted)
}

/// Best rank-`k` factors of `a` under the Frobenius norm (`k` is clamped to
/// `min(m, n)`).
pub fn dense_svd(a: &DenseMatrix, k: usize) -> Svd {
    let (m, n) = (a.nrows(), a.ncols());
    let transposed = m < n;
    let b = if transposed { a.transpose() } else { a.clone() };
    let cols: Vec<Vec<f64>> = (0..b.ncols()).map(|j| b.column(j)).collect();
    let (u, sigma, v) = tall_svd(&cols);
    let r = k.min(m).min(n);
    let (left, right) = if transposed { (v, u) } else { (u, v) };
    Svd {
        u: DenseMatrix::from_columns(&left[..r]).expect("columns share a length"),
        sigma: sigma[..r].to_vec(),
        v: DenseMatrix::from_columns(&right[..r]).expect("columns share a length"),
    }
}

pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    dense_svd(a, a.nrows().min(a.ncols())).sigma
}

/// `min_{rank(D) <= k} |A - D|_F^2`.
pub fn best_rank_k_error_sq(a: &DenseMatrix, k: usize) -> f64 {
    singular_values(a).iter().skip(k).map(|s| s * s).sum()
}

/// Ratio of the largest to the smallest singular value above
/// `rel_tol * sigma_max`.
pub fn condition_number(a: &DenseMatrix, rel_tol: f64) -> f64 {
    condition_from_spectrum(&singular_values(a), rel_tol)
}

pub fn condition_from_spectrum(sigma: &[f64], rel_tol: f64) -> f64 {
    let max = sigma.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return f64::INFINITY;
    }
    let min = sigma
        .iter()
        .copied()
        .filter(|&s| s > rel_tol * max)
        .fold(max, f64::min);
    max / min
}

/// Numerical rank with relative threshold `rel_tol`.
pub fn numerical_rank(a: &DenseMatrix, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let max = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > rel_tol * max).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaResult {
    /// Anchor indices in selection order.
    pub anchors: Vec<usize>,
    /// Set when the residual vanished before `k` picks.
    pub rank_deficient: bool,
}

/// Successive projection: repeatedly pick the row of largest residual norm
/// (after ℓ1 normalization) and project it out.
pub fn spa(a: &DenseMatrix, k: usize) -> Result<SpaResult> {
    if k == 0 || k > a.nrows().min(a.ncols()) {
        return Err(Error::invalid(format!(
            "spa needs 1 <= k <= min(m, n), got k = {k}"
        )));
    }
    let mut residual = a.l1_normalized()?;
    let initial = (0..residual.nrows())
        .map(|i| dot(residual.row(i), residual.row(i)))
        .fold(0.0, f64::max);
    let mut anchors = Vec::with_capacity(k);
    let mut rank_deficient = false;
    for _ in 0..k {
        let (best, best_norm) = (0..residual.nrows())
            .map(|i| (i, dot(residual.row(i), residual.row(i))))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_norm <= 1e-24 * initial {
            rank_deficient = true;
            break;
        }
        anchors.push(best);
        let scale = best_norm.sqrt();
        let dir: Vec<f64> = residual.row(best).iter().map(|x| x / scale).collect();
        for i in 0..residual.nrows() {
            let c = dot(residual.row(i), &dir);
            for (x, d) in residual.row_mut(i).iter_mut().zip(&dir) {
                *x -= c * d;
            }
        }
    }
    Ok(SpaResult {
        anchors,
        rank_deficient,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcaResult {
    /// Sorted, duplicate-free union of the winners.
    pub anchors: Vec<usize>,
    /// Winner of each projection in order.
    pub winners: Vec<usize>,
    /// Coordinates `x` of each direction in the row-space basis.
    pub directions: Vec<Vec<f64>>,
}

/// Index of the largest `|A beta|` entry; ties go to the smallest index.
pub fn argmax_abs_projection(a: &DenseMatrix, beta: &[f64]) -> usize {
    let proj = a.mul_vec(beta);
    let mut best = 0;
    for (i, p) in proj.iter().enumerate() {
        if p.abs() > proj[best].abs() {
            best = i;
        }
    }
    best
}

/// Exact divide-and-conquer anchoring over a given orthonormal row-space
/// basis `basis` (`n x k`) and direction coordinates. `a` should already be
/// ℓ1-normalized.
pub fn exact_dca_with_directions(
    a: &DenseMatrix,
    basis: &DenseMatrix,
    directions: &[Vec<f64>],
) -> Vec<usize> {
    directions
        .iter()
        .map(|x| argmax_abs_projection(a, &basis.mul_vec(x)))
        .collect()
}

/// Exact divide-and-conquer anchoring with `s` random row-space directions.
pub fn exact_dca<R: Rng + ?Sized>(
    a: &DenseMatrix,
    k: usize,
    s: usize,
    rng: &mut R,
) -> Result<DcaResult> {
    if k == 0 || k > a.nrows().min(a.ncols()) {
        return Err(Error::invalid(format!(
            "exact_dca needs 1 <= k <= min(m, n), got k = {k}"
        )));
    }
    let normalized = a.l1_normalized()?;
    let basis = dense_svd(&normalized, k).v;
    let directions: Vec<Vec<f64>> = (0..s).map(|_| random_unit_vector(k, rng)).collect();
    let winners = exact_dca_with_directions(&normalized, &basis, &directions);
    let anchors: BTreeSet<usize> = winners.iter().copied().collect();
    Ok(DcaResult {
        anchors: anchors.into_iter().collect(),
        winners,
        directions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dense(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..m * n).map(|_| rng.random::<f64>() - 0.5).collect();
        DenseMatrix::from_row_major(m, n, data).unwrap()
    }

    #[test]
    fn diagonal_singular_values() {
        let mut a = DenseMatrix::zeros(4, 3);
        a[(0, 0)] = -2.0;
        a[(1, 1)] = 5.0;
        a[(2, 2)] = 0.5;
        let s = singular_values(&a);
        assert!((s[0] - 5.0).abs() < 1e-14);
        assert!((s[1] - 2.0).abs() < 1e-14);
        assert!((s[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        for (m, n) in [(20, 10), (10, 20), (7, 7)] {
            let a = random_dense(m, n, (m * n) as u64);
            let svd = dense_svd(&a, m.min(n));
            let err = svd.reconstruct().sub(&a).unwrap().frobenius();
            assert!(err <= 1e-12 * a.frobenius(), "{m}x{n}: {err}");
            let vtv = svd.v.transpose().matmul(&svd.v).unwrap();
            let utu = svd.u.transpose().matmul(&svd.u).unwrap();
            let id = DenseMatrix::identity(m.min(n));
            assert!(vtv.sub(&id).unwrap().frobenius() < 1e-12);
            assert!(utu.sub(&id).unwrap().frobenius() < 1e-12);
        }
    }

    /// Reference values for a fixed 20x10 matrix, cross-checked against the
    /// eigenvalues of `A^T A` from an independent symmetric eigensolver.
    #[test]
    fn random_matrix_against_gram_eigenvalues() {
        let a = random_dense(20, 10, 99);
        let s = singular_values(&a);
        let gram = a.transpose().matmul(&a).unwrap();
        let g = nalgebra::DMatrix::from_row_slice(10, 10, gram.as_slice());
        let mut eig: Vec<f64> = g.symmetric_eigenvalues().iter().map(|x| x.sqrt()).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (x, y) in s.iter().zip(&eig) {
            assert!((x - y).abs() <= 1e-10 * s[0], "{x} vs {y}");
        }
    }

    #[test]
    fn truncation_is_optimal() {
        let a = random_dense(15, 12, 7);
        let svd = dense_svd(&a, 3);
        let err = svd.reconstruct().sub(&a).unwrap().frobenius().powi(2);
        let best = best_rank_k_error_sq(&a, 3);
        assert!((err - best).abs() <= 1e-8 * best);
    }

    #[test]
    fn spa_finds_basis_rows() {
        let a = DenseMatrix::from_rows(&[
            vec![0.2, 0.3, 0.5],
            vec![0.0, 3.0, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![0.0, 0.0, 7.0],
            vec![0.3, 0.3, 0.4],
        ])
        .unwrap();
        let r = spa(&a, 3).unwrap();
        let mut got = r.anchors.clone();
        got.sort();
        assert_eq!(got, vec![1, 3, 4]);
        assert!(!r.rank_deficient);
    }

    #[test]
    fn spa_k1_picks_max_norm_normalized_row() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.1, 0.9], vec![5.0, 5.0]]).unwrap();
        assert_eq!(spa(&a, 1).unwrap().anchors, vec![1]);
    }

    #[test]
    fn spa_is_permutation_equivariant() {
        let a = random_dense(12, 5, 3);
        let a = DenseMatrix::from_row_major(12, 5, a.as_slice().iter().map(|x| x.abs()).collect())
            .unwrap();
        let perm: Vec<usize> = vec![5, 2, 11, 0, 7, 1, 9, 3, 10, 4, 8, 6];
        let pa = a.select_rows(&perm);
        let base = spa(&a, 3).unwrap().anchors;
        let permuted = spa(&pa, 3).unwrap().anchors;
        let mapped: Vec<usize> = permuted.iter().map(|&i| perm[i]).collect();
        assert_eq!(mapped, base);
    }

    #[test]
    fn spa_flags_rank_deficiency() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let r = spa(&a, 2).unwrap();
        assert_eq!(r.anchors, vec![0]);
        assert!(r.rank_deficient);
    }

    #[test]
    fn dca_duplicated_anchor() {
        let a = DenseMatrix::from_rows(&vec![vec![0.2, 0.8]; 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = exact_dca(&a, 1, 5, &mut rng).unwrap();
        assert_eq!(r.anchors, vec![0]);
    }

    #[test]
    fn dca_finds_simplex_vertices() {
        // rows 0..3 are vertices, the rest are interior mixtures
        let mut rows = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        rows.push(vec![0.5, 0.3, 0.2]);
        rows.push(vec![0.2, 0.2, 0.6]);
        rows.push(vec![0.4, 0.4, 0.2]);
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = (3.0 * 3.0 * 3f64.ln()).ceil() as usize;
        let r = exact_dca(&a, 3, s, &mut rng).unwrap();
        for w in &r.winners {
            assert!(*w < 3);
        }
        assert_eq!(r.anchors, vec![0, 1, 2]);
    }
}
