use crate::error::{Error, Result};

/// Row sums may drift this far from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Row-stochastic `n_rows x n_classes` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    n_rows: usize,
    n_classes: usize,
    values: Vec<f64>,
}

impl ClassProbabilities {
    /// Validates that every row lies on the probability simplex.
    pub fn new(n_rows: usize, n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || values.len() != n_rows * n_classes {
            return Err(Error::InvalidData(format!(
                "expected {} probabilities for {n_rows} rows of {n_classes} classes, got {}",
                n_rows * n_classes,
                values.len()
            )));
        }
        for (i, row) in values.chunks_exact(n_classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::BadRow {
                    row: i + 1,
                    message: format!("not a probability distribution: {row:?}"),
                });
            }
        }
        Ok(ClassProbabilities {
            n_rows,
            n_classes,
            values,
        })
    }

    pub(crate) fn from_raw(n_rows: usize, n_classes: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_rows * n_classes);
        ClassProbabilities {
            n_rows,
            n_classes,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_classes)
    }

    /// Most probable class per row; ties go to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }

    /// Element-wise mean of equally shaped blocks.
    pub fn mean(blocks: &[&ClassProbabilities]) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidData("mean of zero probability blocks".into()))?;
        let mut values = vec![0.0; first.values.len()];
        for b in blocks {
            if b.n_rows != first.n_rows || b.n_classes != first.n_classes {
                return Err(Error::LengthMismatch {
                    left: first.values.len(),
                    right: b.values.len(),
                });
            }
            for (acc, v) in values.iter_mut().zip(&b.values) {
                *acc += v;
            }
        }
        let scale = 1.0 / blocks.len() as f64;
        values.iter_mut().for_each(|v| *v = (*v * scale).clamp(0.0, 1.0));
        Ok(Self::from_raw(first.n_rows, first.n_classes, values))
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = k;
        }
    }
    best
}

/// In-place numerically stable softmax.
pub(crate) fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn rejects_off_simplex() {
        assert!(ClassProbabilities::new(1, 2, vec![0.6, 0.6]).is_err());
        assert!(ClassProbabilities::new(1, 2, vec![1.1, -0.1]).is_err());
        assert!(ClassProbabilities::new(1, 2, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut s = [0.0; 4];
        softmax_in_place(&mut s);
        assert_eq!(s, [0.25; 4]);
        let mut big = [1000.0, 0.0];
        softmax_in_place(&mut big);
        assert_eq!(big[0], 1.0);
    }

    #[test]
    fn mean_of_blocks() {
        let a = ClassProbabilities::new(1, 2, vec![1.0, 0.0]).unwrap();
        let b = ClassProbabilities::new(1, 2, vec![0.0, 1.0]).unwrap();
        let m = ClassProbabilities::mean(&[&a, &b]).unwrap();
        assert_eq!(m.values(), &[0.5, 0.5]);
    }
}
