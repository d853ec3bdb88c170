//! Sample matrices, CSV ingestion, standardization and train/test splits.
//!
//! Rows are samples, columns are features. Optional integer labels ride
//! along with the rows so that cluster metrics can be computed after a
//! reduction.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SrcaError};

/// An `n x d` sample matrix with optional per-row class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    labels: Option<Vec<usize>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = values.nrows().max(1);
            return Err(SrcaError::InvalidArgument(format!(
                "non-finite value at row {}, column {}",
                idx % n,
                idx / n
            )));
        }
        Ok(Self {
            values,
            labels: None,
        })
    }

    pub fn with_labels(values: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != values.nrows() {
            return Err(SrcaError::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                values.nrows()
            )));
        }
        let mut m = Self::new(values)?;
        m.labels = Some(labels);
        Ok(m)
    }

    /// Builds a matrix from row slices. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(SrcaError::Empty("no rows".into()));
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(SrcaError::Ragged {
                    row: i,
                    found: r.len(),
                    expected: d,
                });
            }
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<usize>>) -> Result<()> {
        if let Some(l) = &labels {
            if l.len() != self.rows() {
                return Err(SrcaError::Dimension(format!(
                    "{} labels for {} rows",
                    l.len(),
                    self.rows()
                )));
            }
        }
        self.labels = labels;
        Ok(())
    }

    /// Same labels, new values. Used by transforms that keep the row order.
    pub(crate) fn replace_values(&self, values: DMatrix<f64>) -> Self {
        Self {
            values,
            labels: self.labels.clone(),
        }
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn column_means(&self) -> DVector<f64> {
        let n = self.rows() as f64;
        DVector::from_iterator(
            self.cols(),
            self.values.column_iter().map(|c| c.sum() / n),
        )
    }

    /// Keeps the listed rows (and their labels) in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let values = DMatrix::from_fn(idx.len(), self.cols(), |i, j| self.values[(idx[i], j)]);
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Self { values, labels }
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let values = DMatrix::from_fn(self.rows(), idx.len(), |i, j| self.values[(i, idx[j])]);
        Self {
            values,
            labels: self.labels.clone(),
        }
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Reads a comma-separated file with `.` decimals and an optional single
/// header row. A label column, when given, is mapped to dense ids
/// `0..k` in order of first appearance.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| SrcaError::io(path, e))?;
    read_csv(file, has_header, label_column)
}

pub fn read_csv(
    reader: impl std::io::Read,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    let first_data_line = usize::from(has_header) + 1;

    for (i, rec) in rdr.records().enumerate() {
        let line = first_data_line + i;
        let rec = rec.map_err(|e| SrcaError::Parse {
            row: line,
            col: 0,
            msg: e.to_string(),
        })?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(SrcaError::Ragged {
                row: line,
                found: rec.len(),
                expected,
            });
        }
        if let Some(lc) = label_column {
            if lc >= expected {
                return Err(SrcaError::InvalidArgument(format!(
                    "label column {lc} out of range for {expected} columns"
                )));
            }
        }
        let mut row = Vec::with_capacity(expected);
        for (j, field) in rec.iter().enumerate() {
            if Some(j) == label_column {
                raw_labels.push(field.to_string());
                continue;
            }
            let v: f64 = field.parse().map_err(|_| SrcaError::Parse {
                row: line,
                col: j + 1,
                msg: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(SrcaError::Parse {
                    row: line,
                    col: j + 1,
                    msg: format!("non-finite value {field:?}"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(SrcaError::Empty("csv has no data rows".into()));
    }
    if rows[0].is_empty() {
        return Err(SrcaError::Empty("csv has no numeric columns".into()));
    }
    let mut m = DataMatrix::from_rows(&rows)?;
    if label_column.is_some() {
        m.labels = Some(encode_labels(&raw_labels));
    }
    Ok(m)
}

fn encode_labels(raw: &[String]) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = ids.len();
            *ids.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// Writes the matrix in the same dialect `load_csv` reads. Labels, if
/// present and requested, go into a trailing column.
pub fn write_csv(
    path: impl AsRef<Path>,
    data: &DataMatrix,
    header: Option<&[String]>,
    include_labels: bool,
) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| SrcaError::io(path, e))?;
    let text = csv_string(data, header, include_labels);
    f.write_all(text.as_bytes())
        .map_err(|e| SrcaError::io(path, e))
}

pub fn csv_string(data: &DataMatrix, header: Option<&[String]>, include_labels: bool) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    let labels = if include_labels { data.labels() } else { None };
    for i in 0..data.rows() {
        let mut fields: Vec<String> = (0..data.cols())
            .map(|j| format_float(data.values[(i, j)]))
            .collect();
        if let Some(l) = labels {
            fields.push(l[i].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardizeMode {
    Center,
    Zscore,
    None,
}

/// What `standardize` did, so it can be undone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub mode: StandardizeMode,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardizationRecord {
    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.check_dim(x)?;
        let v = DMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x.values[(i, j)] - self.mean[j]) / self.scale[j]
        });
        Ok(x.replace_values(v))
    }

    pub fn invert(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.check_dim(x)?;
        let v = DMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            x.values[(i, j)] * self.scale[j] + self.mean[j]
        });
        Ok(x.replace_values(v))
    }

    fn check_dim(&self, x: &DataMatrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(SrcaError::Dimension(format!(
                "record has {} columns, data has {}",
                self.mean.len(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// Centers (and optionally scales by the sample standard deviation,
/// divisor `n - 1`) every column.
pub fn standardize(
    x: &DataMatrix,
    mode: StandardizeMode,
) -> Result<(DataMatrix, StandardizationRecord)> {
    let n = x.rows();
    let d = x.cols();
    if n == 0 {
        return Err(SrcaError::Empty("no rows to standardize".into()));
    }
    let (mean, scale) = match mode {
        StandardizeMode::None => (vec![0.0; d], vec![1.0; d]),
        StandardizeMode::Center => (x.column_means().as_slice().to_vec(), vec![1.0; d]),
        StandardizeMode::Zscore => {
            if n < 2 {
                return Err(SrcaError::InvalidArgument(
                    "z-scoring needs at least two rows".into(),
                ));
            }
            let mean = x.column_means();
            let mut scale = Vec::with_capacity(d);
            for j in 0..d {
                let ss: f64 = x
                    .values
                    .column(j)
                    .iter()
                    .map(|v| (v - mean[j]).powi(2))
                    .sum();
                let sd = (ss / (n as f64 - 1.0)).sqrt();
                if !(sd > 0.0) {
                    return Err(SrcaError::ZeroVariance { column: j });
                }
                scale.push(sd);
            }
            (mean.as_slice().to_vec(), scale)
        }
    };
    let rec = StandardizationRecord { mode, mean, scale };
    let out = rec.apply(x)?;
    Ok((out, rec))
}

/// Seeded, reproducible split into `(train, test)`. Both parts keep the
/// original relative row order.
pub fn split_train_test(
    x: &DataMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(DataMatrix, DataMatrix)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SrcaError::InvalidArgument(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let n = x.rows();
    if n < 2 {
        return Err(SrcaError::InvalidArgument(
            "need at least two rows to split".into(),
        ));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut test: Vec<usize> = idx[..n_test].to_vec();
    let mut train: Vec<usize> = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((x.select_rows(&train), x.select_rows(&test)))
}
