//! Labeled datasets, LIBSVM text ingestion and train/test splitting.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Points;
use crate::seeded_rng;

/// Dense features plus labels in {-1, +1}.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    points: Points,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, points: Points, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!("label {} at row {i} is not +1/-1", labels[i])));
        }
        if points.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features contain NaN or infinite values"));
        }
        Ok(Dataset {
            name: name.into(),
            points,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            points: self.points.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Error of the constant classifier predicting the majority class.
    pub fn majority_error(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let pos = self.labels.iter().filter(|&&y| y > 0.0).count();
        let minority = pos.min(self.len() - pos);
        minority as f64 / self.len() as f64
    }

    /// Zero-pads (or checks) the feature dimension so that train and test
    /// files with different maximal indices line up.
    pub fn with_dim(self, dim: usize) -> Result<Dataset> {
        if dim == self.dim() {
            return Ok(self);
        }
        if dim < self.dim() {
            return Err(Error::invalid(format!(
                "dataset has dimension {}, cannot shrink to {dim}",
                self.dim()
            )));
        }
        let mut padded = Points::zeros(self.len(), dim);
        for i in 0..self.len() {
            padded.row_mut(i)[..self.dim()].copy_from_slice(self.points.row(i));
        }
        Ok(Dataset { points: padded, ..self })
    }

    pub fn write_libsvm(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        for (x, y) in self.points.iter().zip(&self.labels) {
            write!(w, "{}", if *y > 0.0 { "+1" } else { "-1" })?;
            for (j, v) in x.iter().enumerate() {
                if *v != 0.0 {
                    write!(w, " {}:{}", j + 1, v)?;
                }
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with header `label,x1,...,xd`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["label".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("x{j}")));
        out.write_record(&header)?;
        for (x, y) in self.points.iter().zip(&self.labels) {
            let mut rec = vec![format!("{y}")];
            rec.extend(x.iter().map(|v| format!("{v}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Raw labels sent to +1; every other label becomes -1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Binarization {
    pub positive: Vec<f64>,
}

impl Binarization {
    pub fn new(positive: Vec<f64>) -> Self {
        Binarization { positive }
    }

    /// Parses a comma-separated label list such as `"1,3,5"`.
    pub fn parse(list: &str) -> Result<Self> {
        let positive = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad label {s:?} in binarization list")))
            })
            .collect::<Result<Vec<_>>>()?;
        if positive.is_empty() {
            return Err(Error::invalid("binarization list is empty"));
        }
        Ok(Binarization { positive })
    }

    fn apply(&self, raw: f64) -> f64 {
        if self.positive.contains(&raw) {
            1.0
        } else {
            -1.0
        }
    }
}

/// Parses LIBSVM text: one `label idx:val idx:val ...` record per line with
/// 1-based strictly increasing indices. Blank lines and `#` comments are
/// skipped.
///
/// Labels are mapped to {-1, +1}: by `binarize` when given; otherwise labels
/// already in {-1, +1} are kept, and exactly two other distinct values map
/// smaller to -1. Anything else is rejected.
pub fn parse_libsvm(
    reader: impl BufRead,
    dim_hint: Option<usize>,
    binarize: Option<&Binarization>,
    name: impl Into<String>,
) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse { line: lineno, message };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(perr(format!("bad label {label_tok:?}")));
        }
        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("expected idx:val, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| perr(format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(perr("feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(perr(format!("feature index {idx} not strictly increasing")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| perr(format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(perr(format!("non-finite feature value {val}")));
            }
            prev = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(prev);
        raw_labels.push(label);
        rows.push(entries);
    }

    let dim = match dim_hint {
        Some(d) if d < max_index => {
            return Err(Error::invalid(format!(
                "feature index {max_index} exceeds the given dimension {d}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };

    let labels = map_labels(&raw_labels, binarize)?;
    let mut points = Points::zeros(rows.len(), dim);
    for (i, entries) in rows.iter().enumerate() {
        let row = points.row_mut(i);
        for &(j, v) in entries {
            row[j] = v;
        }
    }
    Dataset::new(name, points, labels)
}

fn map_labels(raw: &[f64], binarize: Option<&Binarization>) -> Result<Vec<f64>> {
    if let Some(rule) = binarize {
        return Ok(raw.iter().map(|&y| rule.apply(y)).collect());
    }
    let distinct: BTreeSet<u64> = raw.iter().map(|y| ordered_bits(*y)).collect();
    if raw.iter().all(|&y| y == 1.0 || y == -1.0) {
        return Ok(raw.to_vec());
    }
    if distinct.len() != 2 {
        return Err(Error::invalid(format!(
            "{} distinct labels found; a binarization rule is required",
            distinct.len()
        )));
    }
    let smaller = raw.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(raw.iter().map(|&y| if y == smaller { -1.0 } else { 1.0 }).collect())
}

fn ordered_bits(y: f64) -> u64 {
    // -0.0 and 0.0 are the same label
    if y == 0.0 {
        0
    } else {
        y.to_bits()
    }
}

pub fn load_libsvm(
    path: impl AsRef<Path>,
    dim_hint: Option<usize>,
    binarize: Option<&Binarization>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file), dim_hint, binarize, name)
}

/// Seeded random partition into `ceil(n (1 - f))` training points and the
/// remaining test points.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::invalid("splitting needs at least two points"));
    }
    let n_train = train_size(n, test_fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok((
        ds.subset(train_idx, format!("{}-train", ds.name)),
        ds.subset(test_idx, format!("{}-test", ds.name)),
    ))
}

/// `ceil(n (1 - f))`, kept within `[1, n - 1]`.
pub fn train_size(n: usize, test_fraction: f64) -> usize {
    // Guard against products such as 10 * 0.8 landing just above an integer.
    let raw = (n as f64 * (1.0 - test_fraction) - 1e-9).ceil() as usize;
    raw.clamp(1, n - 1)
}
