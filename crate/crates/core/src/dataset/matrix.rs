use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidData(format!(
                "feature matrix must be non-empty, got {n_rows}x{n_cols}"
            )));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::InvalidData(format!(
                "expected {} values for a {n_rows}x{n_cols} matrix, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadRow {
                row: pos / n_cols + 1,
                message: format!("non-finite value in column {}", pos % n_cols),
            });
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::BadRow {
                    row: i + 1,
                    message: format!("expected {n_cols} columns, got {}", r.len()),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), n_cols, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols)
    }

    /// Gathers the given rows (repeats allowed) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            if i >= self.n_rows {
                return Err(Error::InvalidData(format!(
                    "row index {i} out of range for {} rows",
                    self.n_rows
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.n_cols, values)
    }
}

/// Dense class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidData("n_classes must be at least 1".into()));
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::BadRow {
                row: row + 1,
                message: format!("label {l} outside class range 0..{n_classes}"),
            });
        }
        Ok(LabelVector { labels, n_classes })
    }

    /// Infers `n_classes` as one past the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Sorted distinct raw labels; position is the dense class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    originals: Vec<usize>,
}

impl LabelMapping {
    pub fn identity(n_classes: usize) -> Self {
        LabelMapping {
            originals: (0..n_classes).collect(),
        }
    }

    pub fn from_originals(mut originals: Vec<usize>) -> Self {
        originals.sort_unstable();
        originals.dedup();
        LabelMapping { originals }
    }

    /// Builds the mapping from the labels actually present and returns the
    /// densely re-coded labels alongside it.
    pub fn fit(y: &LabelVector) -> Result<(Self, LabelVector)> {
        let mapping = Self::from_originals(y.labels().to_vec());
        let dense = y
            .labels()
            .iter()
            .map(|l| mapping.originals.binary_search(l).expect("label present"))
            .collect();
        let k = mapping.n_classes();
        Ok((mapping, LabelVector::new(dense, k)?))
    }

    pub fn n_classes(&self) -> usize {
        self.originals.len()
    }

    pub fn originals(&self) -> &[usize] {
        &self.originals
    }

    pub fn original(&self, dense: usize) -> usize {
        self.originals[dense]
    }

    pub fn is_identity(&self) -> bool {
        self.originals.iter().enumerate().all(|(i, &o)| i == o)
    }
}

/// A loaded feature file: row ids, features and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub features: FeatureMatrix,
    pub labels: Option<LabelVector>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, features: FeatureMatrix, labels: Option<LabelVector>) -> Result<Self> {
        if ids.len() != features.n_rows() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: features.n_rows(),
            });
        }
        if let Some(y) = &labels {
            if y.len() != features.n_rows() {
                return Err(Error::LengthMismatch {
                    left: features.n_rows(),
                    right: y.len(),
                });
            }
        }
        Ok(Dataset {
            ids,
            features,
            labels,
        })
    }

    pub fn labels_required(&self) -> Result<&LabelVector> {
        self.labels
            .as_ref()
            .ok_or_else(|| Error::InvalidData("labels required".into()))
    }
}
