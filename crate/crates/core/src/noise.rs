//! Label-corruption transition matrices and their application.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{config, data, Result};
use crate::matrix::Matrix;

/// Row-stochastic `q[i][j] = Pr[observed = j | true = i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    q: Matrix,
}

impl TransitionMatrix {
    /// Validates row-stochasticity (rows sum to 1 within 1e-12).
    pub fn new(q: Matrix) -> Result<Self> {
        if q.rows() != q.cols() || q.rows() < 2 {
            return Err(config(format!(
                "transition matrix must be square with at least 2 classes, got {:?}",
                q.shape()
            )));
        }
        for i in 0..q.rows() {
            let row = q.row(i);
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(config(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(config(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { q })
    }

    pub fn class_count(&self) -> usize {
        self.q.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.q.get(from, to)
    }

    /// Expected flip fraction under uniform class priors.
    pub fn expected_flip_rate(&self) -> f64 {
        let m = self.class_count();
        (0..m).map(|i| 1.0 - self.q.get(i, i)).sum::<f64>() / m as f64
    }

    /// Rows that can change a label.
    pub fn noisy_classes(&self) -> Vec<usize> {
        (0..self.class_count())
            .filter(|&i| self.q.get(i, i) < 1.0)
            .collect()
    }
}

/// Symmetric flipping: keep with `1 - rate`, otherwise move uniformly to
/// one of the other `m - 1` classes.
pub fn build_symmetric_q(m: usize, rate: f64) -> Result<TransitionMatrix> {
    if m < 2 {
        return Err(config(format!("symmetric noise needs m >= 2, got {m}")));
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(config(format!(
            "symmetric noise rate {rate} outside [0, 1)"
        )));
    }
    let off = rate / (m - 1) as f64;
    let mut q = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            q.set(i, j, if i == j { 1.0 - rate } else { off });
        }
    }
    TransitionMatrix::new(q)
}

/// Asymmetric (pair) flipping confined to half of the classes: every
/// even-index class `i` keeps its label with `1 - rate` and moves to
/// `(i + 1) mod m` with `rate`; odd-index classes stay clean.
pub fn build_asymmetric_q(m: usize, rate: f64) -> Result<TransitionMatrix> {
    if m < 2 {
        return Err(config(format!("asymmetric noise needs m >= 2, got {m}")));
    }
    if !(0.0..=0.5).contains(&rate) {
        return Err(config(format!(
            "asymmetric noise rate {rate} outside [0, 0.5]"
        )));
    }
    let mut q = Matrix::zeros(m, m);
    for i in 0..m {
        if i % 2 == 0 && rate > 0.0 {
            q.set(i, i, 1.0 - rate);
            q.set(i, (i + 1) % m, rate);
        } else {
            q.set(i, i, 1.0);
        }
    }
    TransitionMatrix::new(q)
}

/// Resamples every observed label from `q[true_label]`, one categorical
/// draw per example in index order.
pub fn corrupt(clean: &LabeledDataset, q: &TransitionMatrix, seed: u64) -> Result<LabeledDataset> {
    if clean.class_count() != q.class_count() {
        return Err(config(format!(
            "dataset has {} classes, transition matrix {}",
            clean.class_count(),
            q.class_count()
        )));
    }
    if clean.observed_labels() != clean.true_labels() {
        return Err(data("dataset is already corrupted"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed = clean
        .true_labels()
        .iter()
        .map(|&y| sample_row(q.matrix().row(y), rng.random::<f64>()))
        .collect();
    clean.with_observed_labels(observed)
}

fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    // u landed in the rounding gap at the top of the row
    last
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Symmetric,
    Asymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn transition_matrix(&self, m: usize) -> Result<TransitionMatrix> {
        match self.kind {
            NoiseKind::None => build_symmetric_q(m, 0.0),
            NoiseKind::Symmetric => build_symmetric_q(m, self.rate),
            NoiseKind::Asymmetric => build_asymmetric_q(m, self.rate),
        }
    }

    /// Overall expected noise rate τ for `m` uniformly distributed classes.
    /// For asymmetric noise only half of the classes flip, so τ = rate / 2
    /// when `m` is even.
    pub fn tau(&self, m: usize) -> Result<f64> {
        Ok(self.transition_matrix(m)?.expected_flip_rate())
    }

    pub fn apply(&self, clean: &LabeledDataset) -> Result<LabeledDataset> {
        let q = self.transition_matrix(clean.class_count())?;
        corrupt(clean, &q, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_labels(n: usize, m: usize) -> LabeledDataset {
        let labels = (0..n).map(|i| i % m).collect();
        LabeledDataset::clean(Matrix::zeros(n, 1), labels, m).unwrap()
    }

    #[test]
    fn symmetric_six_classes() {
        let t = build_symmetric_q(6, 0.4).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 0.6 } else { 0.08 };
                assert!((t.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_ten_classes_half() {
        let t = build_symmetric_q(10, 0.5).unwrap();
        assert_eq!(t.get(3, 3), 0.5);
        assert_eq!(t.get(3, 4), 0.5 / 9.0);
    }

    #[test]
    fn zero_rate_is_identity() {
        for t in [
            build_symmetric_q(5, 0.0).unwrap(),
            build_asymmetric_q(5, 0.0).unwrap(),
        ] {
            for i in 0..5 {
                for j in 0..5 {
                    assert_eq!(t.get(i, j), if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn asymmetric_four_classes() {
        let t = build_asymmetric_q(4, 0.4).unwrap();
        let want = [
            [0.6, 0.4, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.6, 0.4],
            [0.0, 0.0, 0.0, 1.0],
        ];
        for (i, row) in want.iter().enumerate() {
            assert_eq!(t.matrix().row(i), row);
        }
        assert_eq!(t.noisy_classes(), vec![0, 2]);
    }

    #[test]
    fn asymmetric_tau_is_half_the_rate() {
        let spec = NoiseSpec {
            kind: NoiseKind::Asymmetric,
            rate: 0.4,
            seed: 0,
        };
        assert!((spec.tau(10).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(spec.transition_matrix(7).unwrap().noisy_classes().len(), 4);
    }

    #[test]
    fn rows_are_stochastic() {
        for m in 2..12 {
            for rate in [0.0, 0.1, 0.3, 0.45, 0.5] {
                for t in [
                    build_symmetric_q(m, rate).unwrap(),
                    build_asymmetric_q(m, rate).unwrap(),
                ] {
                    for i in 0..m {
                        let s: f64 = t.matrix().row(i).iter().sum();
                        assert!((s - 1.0).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(
            build_symmetric_q(1, 0.2),
            Err(crate::Error::Config(_))
        ));
        assert!(build_symmetric_q(4, 1.0).is_err());
        assert!(matches!(
            build_asymmetric_q(1, 0.2),
            Err(crate::Error::Config(_))
        ));
        assert!(build_asymmetric_q(4, 0.6).is_err());
        let d = uniform_labels(10, 3);
        let q = build_symmetric_q(4, 0.2).unwrap();
        assert!(matches!(corrupt(&d, &q, 0), Err(crate::Error::Config(_))));
    }

    #[test]
    fn identity_keeps_labels_and_seed_is_deterministic() {
        let d = uniform_labels(500, 4);
        let id = build_symmetric_q(4, 0.0).unwrap();
        let same = corrupt(&d, &id, 3).unwrap();
        assert_eq!(same.observed_labels(), d.true_labels());

        let q = build_symmetric_q(4, 0.3).unwrap();
        let a = corrupt(&d, &q, 9).unwrap();
        let b = corrupt(&d, &q, 9).unwrap();
        assert_eq!(a.observed_labels(), b.observed_labels());
        assert_eq!(a.true_labels(), d.true_labels());
        assert_eq!(a.features(), d.features());
        let c = corrupt(&d, &q, 10).unwrap();
        assert_ne!(a.observed_labels(), c.observed_labels());
        assert!(corrupt(&a, &q, 1).is_err());
    }

    #[test]
    fn symmetric_half_flip_fraction() {
        // Binomial(10000, 0.5): σ = 0.005; allow 4σ.
        let d = uniform_labels(10_000, 10);
        let q = build_symmetric_q(10, 0.5).unwrap();
        let noisy = corrupt(&d, &q, 1).unwrap();
        assert!((noisy.noise_fraction() - 0.5).abs() < 4.0 * 0.005);
    }

    #[test]
    fn sampling_handles_rounding_gap() {
        assert_eq!(sample_row(&[0.3, 0.7, 0.0], 0.9999999999999999), 1);
        assert_eq!(sample_row(&[0.3, 0.7, 0.0], 0.0), 0);
    }
}
