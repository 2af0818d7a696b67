//! Dense point storage and the symmetric eigen-solvers shared by the
//! sampling, embedding and diagnostics code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major collection of points of a common dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows * dim != data.len() {
            return Err(Error::invalid(format!(
                "{} values cannot form {} rows of dimension {}",
                data.len(),
                rows,
                dim
            )));
        }
        Ok(Points { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Points {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn empty(dim: usize) -> Self {
        Points::zeros(0, dim)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "row {} has dimension {}, expected {}",
                    i,
                    r.len(),
                    dim
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Points {
            rows: rows.len(),
            dim,
            data,
        })
    }

    /// Copies an `n x d` matrix into row-major storage.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (rows, dim) = m.shape();
        let mut data = Vec::with_capacity(rows * dim);
        for i in 0..rows {
            data.extend(m.row(i).iter());
        }
        Points { rows, dim, data }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.dim, &self.data)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Gathers the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    /// Concatenates rows of `other` after the rows of `self`.
    pub fn append(&mut self, other: &Points) -> Result<()> {
        if self.rows > 0 && other.rows > 0 && self.dim != other.dim {
            return Err(Error::invalid("cannot append points of different dimension"));
        }
        if self.rows == 0 {
            self.dim = other.dim;
        }
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
        Ok(())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenpairs of a symmetric matrix, eigenvalues nonincreasing and
/// eigenvectors stored as matching columns.
#[derive(Clone, Debug)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let n = m.nrows();
    if n == 0 {
        return SortedEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SortedEigen { values, vectors }
}

/// Eigenvalues only, nonincreasing.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Largest asymmetry `max |m_ij - m_ji|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Below this size the extreme eigenvalues come from a full decomposition.
const DENSE_EXTREMES_LIMIT: usize = 400;

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// Large matrices use Lanczos with full reorthogonalization, stopped once
/// both extreme Ritz pairs have residual below `1e-12 * |lambda|max`.
pub fn extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, 0.0);
    }
    if n <= DENSE_EXTREMES_LIMIT {
        let v = sym_eigenvalues(m);
        return (v[n - 1], v[0]);
    }
    lanczos_extremes(m)
}

fn lanczos_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let n = m.nrows();
    // Deterministic, generic start vector.
    let mut q = DVector::from_fn(n, |i, _| 1.0 + ((i as f64) * 0.618_033_988_749_895).fract());
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = (0.0, 0.0);
    for k in 0..n {
        let mut w = m * &basis[k];
        let a = basis[k].dot(&w);
        alphas.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let beta = w.norm();

        let t = tridiagonal(&alphas, &betas);
        let eig = SymmetricEigen::new(t);
        let (mut imin, mut imax) = (0, 0);
        for i in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                imin = i;
            }
            if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                imax = i;
            }
        }
        let lo = eig.eigenvalues[imin];
        let hi = eig.eigenvalues[imax];
        last = (lo, hi);
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        let kdim = alphas.len();
        let res_lo = beta * eig.eigenvectors[(kdim - 1, imin)].abs();
        let res_hi = beta * eig.eigenvectors[(kdim - 1, imax)].abs();
        if beta <= 1e-14 * scale || (res_lo <= 1e-12 * scale && res_hi <= 1e-12 * scale) {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    last
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}
