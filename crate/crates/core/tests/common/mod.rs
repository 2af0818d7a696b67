#![allow(dead_code)]

use std::io::Write;

use nalgebra::DMatrix;
use nystrom_erm::{seeded_rng, Dataset, Points};
use rand::RngExt;
use rand_distr::StandardNormal;

pub fn gaussian_points(n: usize, d: usize, seed: u64) -> Points {
    let mut rng = seeded_rng(seed);
    let data: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Points::new(n, d, data).unwrap()
}

/// Labels from a random hyperplane through the origin.
pub fn linear_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let x = gaussian_points(n, d, seed);
    let w = gaussian_points(1, d, seed ^ 0xabcd).into_vec();
    let labels = x
        .iter()
        .map(|r| if r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    Dataset::new("test", x, labels).unwrap()
}

/// `A A^T` with `A` an `n x k` standard Gaussian matrix, scaled by `scale`.
pub fn random_psd(n: usize, k: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let a = gaussian_points(n, k, seed);
    let a = DMatrix::from_row_slice(n, k, a.as_slice());
    &a * a.transpose() * scale
}

/// `diag(K (K + alpha n I)^{-1})` through an explicit dense inverse.
pub fn dense_inverse_scores(k: &DMatrix<f64>, alpha: f64) -> Vec<f64> {
    let n = k.nrows();
    let shifted = k + DMatrix::identity(n, n) * (alpha * n as f64);
    let inv = shifted.try_inverse().expect("shifted Gram is invertible");
    let prod = k * inv;
    (0..n).map(|i| prod[(i, i)]).collect()
}

/// `Tr((K + alpha n I)^{-1} K)` through an explicit dense inverse.
pub fn dense_inverse_trace(k: &DMatrix<f64>, alpha: f64) -> f64 {
    dense_inverse_scores(k, alpha).iter().sum()
}

/// `K_nm K_m^+ K_mn` with the pseudo-inverse taken through an SVD.
pub fn projected_kernel(k_nm: &DMatrix<f64>, k_m: &DMatrix<f64>) -> DMatrix<f64> {
    let eps = 1e-12 * k_m.norm();
    let pinv = k_m.clone().pseudo_inverse(eps).unwrap();
    k_nm * pinv * k_nm.transpose()
}

/// Largest eigenvalue of `K - K_nm K_m^+ K_mn`, divided by `n`.
pub fn residual_oracle(k: &DMatrix<f64>, k_nm: &DMatrix<f64>, k_m: &DMatrix<f64>) -> f64 {
    let diff = k - projected_kernel(k_nm, k_m);
    let sym = (&diff + diff.transpose()) * 0.5;
    let svd = sym.clone().svd(false, false);
    // the difference is PSD, so its largest singular value is its largest eigenvalue
    svd.singular_values.max() / k.nrows() as f64
}

/// `lambda_max((I - P) X^T X (I - P)) / n` with `P` the projector onto the
/// span of the landmark rows.
pub fn feature_space_residual(x: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let (n, d) = x.shape();
    let svd = x.select_rows(idx).transpose().svd(true, false);
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * top)
        .collect();
    let u = svd.u.unwrap().select_columns(&keep);
    let proj = DMatrix::identity(d, d) - &u * u.transpose();
    let r = &proj * (x.transpose() * x / n as f64) * &proj;
    ((&r + r.transpose()) * 0.5).symmetric_eigenvalues().max()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Gram matrix of the rows of `p`.
pub fn row_gram(p: &Points) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(p.len(), p.dim(), p.as_slice());
    &m * m.transpose()
}

/// One status line per check, written past the test harness capture so it
/// shows in plain `cargo test` output.
pub fn report(name: &str, pass: bool, detail: &str) {
    let line = format!(
        "acceptance: {name:<34} {}  {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

pub fn report_skip(name: &str, reason: &str) {
    let line = format!("acceptance: {name:<34} SKIP  {reason}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}
