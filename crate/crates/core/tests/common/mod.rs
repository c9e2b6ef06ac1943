#![allow(dead_code)]

use anchorseek::baselines::dense_svd;
use anchorseek::DenseMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `v_i^2 / |v|^2`.
pub fn l2_density(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x * x).sum();
    v.iter().map(|x| x * x / total).collect()
}

pub fn histogram(draws: &[usize], len: usize) -> Vec<u64> {
    let mut h = vec![0u64; len];
    for &d in draws {
        h[d] += 1;
    }
    h
}

/// Total variation between an empirical histogram and a density.
pub fn empirical_tv(counts: &[u64], p: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(p)
        .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
        .sum::<f64>()
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pearson goodness-of-fit p-value. Cells with expected count below 5 are
/// pooled into a single cell; draws in zero-probability cells give p = 0.
pub fn chi_square_p_value(counts: &[u64], p: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &q) in counts.iter().zip(p) {
        let e = q * n;
        if q == 0.0 {
            if c > 0 {
                return 0.0;
            }
            continue;
        }
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
            continue;
        }
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
}

pub fn gaussian_vec<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix<R: Rng>(m: usize, n: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_row_major(m, n, gaussian_vec(m * n, rng)).unwrap()
}

/// Product of Gaussian `m x k` and `k x n` factors: rank `k` almost surely.
pub fn rank_k_matrix<R: Rng>(m: usize, n: usize, k: usize, rng: &mut R) -> DenseMatrix {
    gaussian_matrix(m, k, rng)
        .matmul(&gaussian_matrix(k, n, rng))
        .unwrap()
}

/// Random `n x k` matrix with orthonormal columns.
pub fn orthonormal_columns<R: Rng>(n: usize, k: usize, rng: &mut R) -> DenseMatrix {
    let g = gaussian_matrix(n, k, rng);
    let svd = dense_svd(&g, k);
    svd.u
}

/// Orthogonal factor of the polar decomposition of a square matrix.
pub fn polar(a: &DenseMatrix) -> DenseMatrix {
    let svd = dense_svd(a, a.nrows());
    svd.u.matmul(&svd.v.transpose()).unwrap()
}

/// Empirical rate of `hits` over `total` as a printable fraction.
pub fn rate(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}
