//! Feature matrices, label vectors and the semi-supervised split.
//!
//! Files on disk store features as 32-bit floats (the DACF format, see
//! [`io`]); everything in memory is 64-bit.

pub mod io;
pub mod split;
pub mod synth;

use std::ops::Deref;

pub use io::{load_features, load_labels, save_features, save_labels};
pub use split::{make_split, make_split_with_known, LabeledSampling, SplitDataset};
pub use synth::gen_synthetic;

/// Errors from constructing, loading or splitting data.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("matrix shape {rows}x{cols} does not match {len} values")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("payload is {found} bytes but the header declares {expected}")]
    PayloadMismatch { expected: u64, found: u64 },
    #[error("value {value} at index {index} does not fit in 32-bit storage")]
    Unrepresentable { index: usize, value: f64 },
    #[error("label file is empty")]
    EmptyLabelFile,
    #[error("empty label on line {line}")]
    EmptyLabelLine { line: usize },
    #[error("unknown class name {0:?}")]
    UnknownClass(String),
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("known class {0} has no samples")]
    EmptyKnownClass(usize),
    #[error("{name} must lie in (0, 1], got {value}")]
    InvalidRatio { name: &'static str, value: f64 },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major matrix of finite `f64` values.
///
/// Used for sample features as well as centroids and layer weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Sample features, one row per sample.
pub type FeatureMatrix = Matrix;

impl Matrix {
    /// Builds a validated matrix: non-empty shape, matching length, finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, DataError> {
        if rows == 0 || cols == 0 {
            return Err(DataError::EmptyShape { rows, cols });
        }
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(DataError::ShapeMismatch {
                rows,
                cols,
                len: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(DataError::ShapeMismatch {
                rows: rows.len(),
                cols,
                len: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// Wraps values produced by trusted internal arithmetic without re-checking them.
    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, values)
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Squared Euclidean distance by direct subtraction.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Dense class ids, one per sample.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    /// One past the largest id, i.e. the number of classes when ids are dense.
    pub fn n_classes(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    /// Sample count per id, indexed by id.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes()];
        for &l in &self.0 {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for LabelVector {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl FromIterator<usize> for LabelVector {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
