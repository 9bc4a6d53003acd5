//! Sample ingestion, per-column standardization and PCA decorrelation.
//!
//! A [`SampleMatrix`] is the currency between modules: rows are realizations,
//! columns are random inputs. Storage is row-major so each realization is a
//! contiguous slice.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("sample file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("cannot read sample file {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    /// `row` counts body rows from 1, `col` counts columns from 1.
    #[error("non-numeric or non-finite cell {value:?} at row {row}, column {col}")]
    ParseError { row: usize, col: usize, value: String },
    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("sample file has no data rows")]
    EmptyData,
    #[error("sample matrix needs at least one column")]
    NoColumns,
    #[error("at least {required} samples required, got {found}")]
    InsufficientSamples { required: usize, found: usize },
    #[error("dimension mismatch: expected {expected} columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

impl IngestError {
    pub(crate) fn is_input_problem(&self) -> bool {
        !matches!(self, IngestError::InsufficientSamples { .. } | IngestError::DimensionMismatch { .. })
    }
}

/// M x N table of finite reals with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    column_names: Vec<String>,
}

impl SampleMatrix {
    /// Build from row-major values; every entry must be finite.
    pub fn new(column_names: Vec<String>, rows: usize, values: Vec<f64>) -> Result<Self, IngestError> {
        let cols = column_names.len();
        if cols == 0 {
            return Err(IngestError::NoColumns);
        }
        if rows == 0 {
            return Err(IngestError::EmptyData);
        }
        if values.len() != rows * cols {
            return Err(IngestError::DimensionMismatch { expected: rows * cols, found: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::NonFinite { row: k / cols + 1, col: k % cols + 1 });
        }
        Ok(Self { values, rows, cols, column_names })
    }

    /// Build from rows with generated names `x1..xN`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, IngestError> {
        let cols = rows.first().map(Vec::len).ok_or(IngestError::EmptyData)?;
        let names = (1..=cols).map(|i| format!("x{i}")).collect();
        Self::from_rows_named(names, rows)
    }

    pub fn from_rows_named(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, IngestError> {
        let cols = names.len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(IngestError::RaggedRow { row: i + 1, expected: cols, found: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::new(names, rows.len(), values)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows_iter().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self, IngestError> {
        let end = end.min(self.rows);
        let start = start.min(end);
        Self::new(
            self.column_names.clone(),
            end - start,
            self.values[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self, IngestError> {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::new(self.column_names.clone(), idx.len(), values)
    }

    /// Keep the listed columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Self, IngestError> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.cols) {
            return Err(IngestError::DimensionMismatch { expected: self.cols, found: bad + 1 });
        }
        let names = idx.iter().map(|&j| self.column_names[j].clone()).collect();
        let values = self.rows_iter().flat_map(|r| idx.iter().map(move |&j| r[j])).collect();
        SampleMatrix::new(names, self.rows, values)
    }

    /// Append the rows of `other` (column count must match).
    pub fn append(&mut self, other: &SampleMatrix) -> Result<(), IngestError> {
        if other.cols != self.cols {
            return Err(IngestError::DimensionMismatch { expected: self.cols, found: other.cols });
        }
        self.values.extend_from_slice(&other.values);
        self.rows += other.rows;
        Ok(())
    }

    fn with_values(&self, cols: usize, values: Vec<f64>) -> SampleMatrix {
        let names = if cols == self.cols {
            self.column_names.clone()
        } else {
            (1..=cols).map(|i| format!("z{i}")).collect()
        };
        SampleMatrix { values, rows: self.rows, cols, column_names: names }
    }

    /// CSV text with a header row; reals written with 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.column_names.join(",");
        out.push('\n');
        for r in self.rows_iter() {
            for (j, v) in r.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", fmt_real(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Fixed 17-significant-digit rendering used for every real written to CSV.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Read a comma-separated file whose first row names the columns.
pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleMatrix, IngestError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| IngestError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_samples(&text).map_err(|e| match e {
        IngestError::Io { message, .. } => IngestError::Io { path: path.to_path_buf(), message },
        other => other,
    })
}

/// Parse CSV text (header + numeric body).
pub fn parse_samples(text: &str) -> Result<SampleMatrix, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let io_err = |e: csv::Error| IngestError::Io { path: PathBuf::new(), message: e.to_string() };
    let names: Vec<String> = reader.headers().map_err(io_err)?.iter().map(str::to_owned).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(IngestError::NoColumns);
    }
    let cols = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(io_err)?;
        let row = i + 1;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != cols {
            return Err(IngestError::RaggedRow { row, expected: cols, found: record.len() });
        }
        for (j, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => return Err(IngestError::ParseError { row, col: j + 1, value: cell.to_owned() }),
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(IngestError::EmptyData);
    }
    SampleMatrix::new(names, rows, values)
}

/// Shift and scale of one column: `z = (x - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnAffine {
    pub shift: f64,
    pub scale: f64,
}

impl ColumnAffine {
    pub const IDENTITY: ColumnAffine = ColumnAffine { shift: 0.0, scale: 1.0 };

    /// Sample mean and (n-1) standard deviation; constant columns get scale 1.
    pub fn fit(column: &[f64]) -> Self {
        let n = column.len();
        let mean = column.iter().sum::<f64>() / n as f64;
        let std = sample_std_about(column, mean);
        let max_abs = column.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if std > 8.0 * f64::EPSILON * max_abs && std.is_finite() { std } else { 1.0 };
        ColumnAffine { shift: mean, scale }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.shift
    }
}

fn sample_std_about(column: &[f64], mean: f64) -> f64 {
    let n = column.len();
    if n < 2 {
        return 0.0;
    }
    let ss: f64 = column.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Per-column affine map recorded for inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineStandardization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineStandardization {
    pub fn column(&self, j: usize) -> ColumnAffine {
        ColumnAffine { shift: self.shift[j], scale: self.scale[j] }
    }

    pub fn apply(&self, s: &SampleMatrix) -> Result<SampleMatrix, IngestError> {
        self.map(s, ColumnAffine::apply)
    }

    pub fn invert(&self, s: &SampleMatrix) -> Result<SampleMatrix, IngestError> {
        self.map(s, ColumnAffine::invert)
    }

    fn map(&self, s: &SampleMatrix, f: fn(&ColumnAffine, f64) -> f64) -> Result<SampleMatrix, IngestError> {
        if s.ncols() != self.shift.len() {
            return Err(IngestError::DimensionMismatch { expected: self.shift.len(), found: s.ncols() });
        }
        let affines: Vec<_> = (0..s.ncols()).map(|j| self.column(j)).collect();
        let values = s
            .rows_iter()
            .flat_map(|r| r.iter().zip(&affines).map(|(x, a)| f(a, *x)).collect::<Vec<_>>())
            .collect();
        Ok(s.with_values(s.ncols(), values))
    }
}

/// Center each column and divide by its sample standard deviation.
pub fn standardize(s: &SampleMatrix) -> (SampleMatrix, AffineStandardization) {
    let affines: Vec<ColumnAffine> = (0..s.ncols()).map(|j| ColumnAffine::fit(&s.column(j))).collect();
    let t = AffineStandardization {
        shift: affines.iter().map(|a| a.shift).collect(),
        scale: affines.iter().map(|a| a.scale).collect(),
    };
    let out = t.apply(s).expect("dimensions match by construction");
    (out, t)
}

/// Mean vector and sample (n-1) covariance.
pub fn sample_covariance(s: &SampleMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let (m, n) = (s.nrows(), s.ncols());
    let mean: Vec<f64> = (0..n).map(|j| s.rows_iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for r in s.rows_iter() {
        for a in 0..n {
            let da = r[a] - mean[a];
            for b in a..n {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    let denom = (m.max(2) - 1) as f64;
    for a in 0..n {
        for b in a..n {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// Principal-component rotation `z = (x - mean) * components^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// Rows are principal directions, sorted by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub retained: usize,
    /// Eigenvalues of the sample covariance, aligned with `components`.
    #[serde(default)]
    pub eigenvalues: Vec<f64>,
}

impl PcaTransform {
    pub fn identity(n: usize) -> Self {
        PcaTransform {
            mean: vec![0.0; n],
            components: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            retained: n,
            eigenvalues: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Keep only the leading `k` components (clamped to `1..=N`).
    pub fn with_retained(mut self, k: usize) -> Self {
        self.retained = k.clamp(1, self.dim());
        self
    }

    /// Rotate one physical row into `out` (length `retained`).
    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.retained) {
            *o = self.components[k].iter().zip(row).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum();
        }
    }
}

/// Eigen-decompose the sample covariance of `s`.
///
/// Components are sorted by descending eigenvalue and each is signed so that
/// its largest-magnitude entry is positive (first such entry on ties).
pub fn fit_pca(s: &SampleMatrix) -> Result<PcaTransform, IngestError> {
    if s.nrows() < 2 {
        return Err(IngestError::InsufficientSamples { required: 2, found: s.nrows() });
    }
    let n = s.ncols();
    let (mean, cov) = sample_covariance(s);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(n);
    let mut eigenvalues = Vec::with_capacity(n);
    for &k in &order {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaTransform { mean, components, retained: n, eigenvalues })
}

/// Map rows to `(row - mean) * components^T`, truncated to `retained` columns.
pub fn apply_pca(t: &PcaTransform, s: &SampleMatrix) -> Result<SampleMatrix, IngestError> {
    if s.ncols() != t.dim() {
        return Err(IngestError::DimensionMismatch { expected: t.dim(), found: s.ncols() });
    }
    let k = t.retained;
    let mut values = vec![0.0; s.nrows() * k];
    for (r, out) in s.rows_iter().zip(values.chunks_exact_mut(k)) {
        t.apply_row(r, out);
    }
    Ok(s.with_values(k, values))
}

/// Map rotated rows back to physical coordinates.
pub fn inverse_pca(t: &PcaTransform, s: &SampleMatrix) -> Result<SampleMatrix, IngestError> {
    if s.ncols() != t.retained {
        return Err(IngestError::DimensionMismatch { expected: t.retained, found: s.ncols() });
    }
    let n = t.dim();
    let mut values = Vec::with_capacity(s.nrows() * n);
    for z in s.rows_iter() {
        for j in 0..n {
            let v: f64 = z.iter().enumerate().map(|(k, zk)| zk * t.components[k][j]).sum();
            values.push(v + t.mean[j]);
        }
    }
    let names = (1..=n).map(|i| format!("x{i}")).collect();
    SampleMatrix::new(names, s.nrows(), values)
}
