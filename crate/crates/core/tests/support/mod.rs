//! Reference implementations used as test oracles. Shared with the CLI
//! acceptance suite through `#[path]`.
#![allow(dead_code)]

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Exact non-negative fraction `num / den`.
#[derive(Debug, Clone, Copy)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn add(self, o: Ratio) -> Ratio {
        Ratio {
            num: self.num * o.den + o.num * self.den,
            den: self.den * o.den,
        }
    }

    pub fn cmp(self, o: Ratio) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

/// Sum over classes of squared counts divided by the child size. Maximizing
/// the sum of this over both children is the same as minimizing weighted
/// Gini impurity.
fn purity(counts: &[u128]) -> Ratio {
    let n: u128 = counts.iter().sum();
    Ratio {
        num: counts.iter().map(|c| c * c).sum(),
        den: n,
    }
}

/// Root split a depth-1 CART should pick, found by trying every feature and
/// every midpoint between consecutive distinct values. Ties go to the lowest
/// feature, then the lowest threshold. `None` when the node is pure or every
/// feature is constant.
pub fn gini_root_oracle(rows: &[Vec<f64>], y: &[usize], n_classes: usize) -> Option<(usize, f64)> {
    if y.iter().all(|&c| c == y[0]) {
        return None;
    }
    let d = rows[0].len();
    let mut best: Option<(usize, f64, Ratio)> = None;
    for f in 0..d {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let t = 0.5 * (pair[0] + pair[1]);
            let mut left = vec![0u128; n_classes];
            let mut right = vec![0u128; n_classes];
            for (r, &c) in rows.iter().zip(y) {
                if r[f] <= t {
                    left[c] += 1;
                } else {
                    right[c] += 1;
                }
            }
            let score = purity(&left).add(purity(&right));
            if best.is_none_or(|(_, _, b)| score.cmp(b) == Ordering::Greater) {
                best = Some((f, t, score));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

/// Central finite-difference gradient of `f` at `w`.
pub fn finite_difference(w: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|i| {
            probe[i] = w[i] + h;
            let up = f(&probe);
            probe[i] = w[i] - h;
            let down = f(&probe);
            probe[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub struct Blobs {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

impl Blobs {
    /// Minimum distance between any two centers.
    pub fn min_center_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.centers.iter().enumerate() {
            for b in &self.centers[i + 1..] {
                let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                best = best.min(d2.sqrt());
            }
        }
        best
    }

    /// Accuracy of assigning each row to its nearest true center.
    pub fn nearest_centroid_accuracy(&self) -> f64 {
        let hits = self
            .rows
            .iter()
            .zip(&self.labels)
            .filter(|(r, &c)| {
                let dist = |m: &Vec<f64>| r.iter().zip(m).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
                let nearest = (0..self.centers.len())
                    .min_by(|&a, &b| dist(&self.centers[a]).total_cmp(&dist(&self.centers[b])))
                    .unwrap();
                nearest == c
            })
            .count();
        hits as f64 / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let d = self.rows[0].len();
        let mut s = String::from("id");
        for j in 0..d {
            s.push_str(&format!(",f{j}"));
        }
        s.push_str(",label\n");
        for (i, (r, c)) in self.rows.iter().zip(&self.labels).enumerate() {
            s.push_str(&format!("row{i}"));
            for v in r {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(&format!(",{c}\n"));
        }
        s
    }
}

/// Isotropic unit-variance blobs whose centers are `separation` apart: center
/// `c` sits at `separation / sqrt(2)` along axis `c`, so every pair of
/// centers is exactly `separation` apart. Rows are interleaved by class.
pub fn blobs(seed: u64, n_classes: usize, per_class: usize, d: usize, separation: f64) -> Blobs {
    assert!(n_classes <= d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = separation / std::f64::consts::SQRT_2;
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|c| (0..d).map(|j| if j == c { scale } else { 0.0 }).collect())
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..per_class {
        for (c, center) in centers.iter().enumerate() {
            rows.push(center.iter().map(|m| m + gaussian(&mut rng)).collect());
            labels.push(c);
        }
    }
    Blobs {
        rows,
        labels,
        centers,
    }
}
