//! Kernel evaluation and Gram-matrix assembly.
//!
//! The Gaussian kernel is parameterized by its width as
//! `K(x, x') = exp(-|x - x'|^2 / (2 sigma^2))`, i.e. `gamma = 1 / (2 sigma^2)`
//! in the other common convention.
//!
//! A precomputed kernel addresses points by index: a point is a
//! one-dimensional vector whose single coordinate is the row index into the
//! stored Gram matrix.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, max_asymmetry, squared_distance, Points};

/// Rows of the left operand assembled per work unit.
pub const GRAM_ROW_BLOCK: usize = 256;

const PRECOMPUTED_MAGIC: &[u8; 8] = b"NYGRAM01";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian {
        sigma: f64,
    },
    Linear,
    #[serde(skip)]
    Precomputed(PrecomputedKernel),
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { sigma } if !(sigma.is_finite() && *sigma > 0.0) => Err(
                Error::invalid(format!("gaussian width must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Linear => "linear",
            KernelSpec::Precomputed(_) => "precomputed",
        }
    }

    /// Required point dimension, if the kernel imposes one.
    fn fixed_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::Precomputed(_) => Some(1),
            _ => None,
        }
    }
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (KernelSpec::Gaussian { sigma: a }, KernelSpec::Gaussian { sigma: b }) => a == b,
            (KernelSpec::Linear, KernelSpec::Linear) => true,
            (KernelSpec::Precomputed(a), KernelSpec::Precomputed(b)) => Arc::ptr_eq(&a.0, &b.0),
            _ => false,
        }
    }
}

/// A validated square Gram matrix shared between kernel specs.
#[derive(Clone, Debug)]
pub struct PrecomputedKernel(Arc<DMatrix<f64>>);

impl PrecomputedKernel {
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        let (r, c) = gram.shape();
        if r != c {
            return Err(Error::invalid(format!("precomputed kernel is {r}x{c}, not square")));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("precomputed kernel has non-finite entries"));
        }
        let asym = max_asymmetry(&gram);
        if asym > 1e-10 {
            return Err(Error::invalid(format!(
                "precomputed kernel is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if let Some(i) = (0..r).find(|&i| gram[(i, i)] < 0.0) {
            return Err(Error::invalid(format!("precomputed kernel diagonal entry {i} is negative")));
        }
        Ok(PrecomputedKernel(Arc::new(gram)))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Index points `0..n`, usable as the feature matrix of a dataset.
    pub fn index_points(&self) -> Points {
        Points::new(self.len(), 1, (0..self.len()).map(|i| i as f64).collect())
            .expect("shape is consistent")
    }

    fn index(&self, x: &[f64]) -> Result<usize> {
        let v = x[0];
        if v < 0.0 || v.fract() != 0.0 || v >= self.len() as f64 {
            return Err(Error::invalid(format!(
                "{v} is not a valid index into a {}-point precomputed kernel",
                self.len()
            )));
        }
        Ok(v as usize)
    }

    /// Reads either the binary format (`NYGRAM01`, little-endian `u64` n,
    /// then n*n little-endian `f64` row-major) or the text format (first
    /// line `n`, then n comma-separated rows).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = BufReader::new(File::open(path)?);
        let head = file.fill_buf()?;
        if head.starts_with(PRECOMPUTED_MAGIC) {
            Self::read_binary(file)
        } else {
            Self::read_csv(file)
        }
    }

    fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        Self::new(DMatrix::from_row_slice(n, n, &data))
    }

    fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let n: usize = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line?;
                    let t = line.trim();
                    if t.is_empty() {
                        continue;
                    }
                    break t.parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("expected matrix size, found {t:?}"),
                    })?;
                }
                None => return Err(Error::Parse { line: 1, message: "empty kernel file".into() }),
            }
        };
        let mut data = Vec::with_capacity(n * n);
        let mut rows = 0;
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let start = data.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad number {:?}", field.trim()),
                })?;
                data.push(v);
            }
            if data.len() - start != n {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {n} columns, found {}", data.len() - start),
                });
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Parse {
                line: rows + 1,
                message: format!("expected {n} rows, found {rows}"),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, &data))
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(PRECOMPUTED_MAGIC)?;
        let n = self.len();
        w.write_all(&(n as u64).to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                w.write_all(&self.0[(i, j)].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let n = self.len();
        writeln!(w, "{n}")?;
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:e}", self.0[(i, j)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::invalid(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            x2.len()
        )));
    }
    if let Some(d) = spec.fixed_dim() {
        if x.len() != d {
            return Err(Error::invalid(format!("{} kernel expects {d}-dimensional points", spec.name())));
        }
    }
    Ok(match spec {
        KernelSpec::Gaussian { sigma } => gaussian(*sigma, x, x2),
        KernelSpec::Linear => dot(x, x2),
        KernelSpec::Precomputed(k) => k.0[(k.index(x)?, k.index(x2)?)],
    })
}

#[inline]
fn gaussian(sigma: f64, x: &[f64], x2: &[f64]) -> f64 {
    (-squared_distance(x, x2) / (2.0 * sigma * sigma)).exp()
}

/// `|A| x |B|` matrix of kernel values.
///
/// Rows are assembled in fixed blocks of [`GRAM_ROW_BLOCK`]; every entry is
/// computed independently, so the result does not depend on scheduling.
pub fn gram(spec: &KernelSpec, a: &Points, b: &Points) -> Result<DMatrix<f64>> {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return Ok(DMatrix::zeros(na, nb));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "point sets have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if let Some(d) = spec.fixed_dim() {
        if a.dim() != d {
            return Err(Error::invalid(format!("{} kernel expects {d}-dimensional points", spec.name())));
        }
    }
    let mut out = DMatrix::zeros(na, nb);
    let blocks: Vec<Result<Vec<f64>>> = (0..na)
        .step_by(GRAM_ROW_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + GRAM_ROW_BLOCK).min(na);
            let mut block = Vec::with_capacity((end - start) * nb);
            for i in start..end {
                let x = a.row(i);
                for j in 0..nb {
                    block.push(match spec {
                        KernelSpec::Gaussian { sigma } => gaussian(*sigma, x, b.row(j)),
                        KernelSpec::Linear => dot(x, b.row(j)),
                        KernelSpec::Precomputed(_) => eval_kernel(spec, x, b.row(j))?,
                    });
                }
            }
            Ok(block)
        })
        .collect();
    for (bi, block) in blocks.into_iter().enumerate() {
        let block = block?;
        let start = bi * GRAM_ROW_BLOCK;
        for (k, v) in block.into_iter().enumerate() {
            out[(start + k / nb, k % nb)] = v;
        }
    }
    Ok(out)
}

/// Kernel diagonal `K(x_i, x_i)`.
pub fn diagonal(spec: &KernelSpec, a: &Points) -> Result<Vec<f64>> {
    a.iter().map(|x| eval_kernel(spec, x, x)).collect()
}
