use crate::error::{data, Result};
use crate::matrix::Matrix;

/// Features with observed (possibly corrupted) labels.
///
/// `true_labels` exist for metrics only; training code reads
/// `observed_labels`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    observed_labels: Vec<usize>,
    true_labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Matrix,
        observed_labels: Vec<usize>,
        true_labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(data(format!("need at least 2 classes, got {class_count}")));
        }
        let n = features.rows();
        if observed_labels.len() != n || true_labels.len() != n {
            return Err(data(format!(
                "{n} feature rows but {} observed and {} true labels",
                observed_labels.len(),
                true_labels.len()
            )));
        }
        for (i, &y) in observed_labels.iter().chain(&true_labels).enumerate() {
            if y >= class_count {
                return Err(data(format!(
                    "label {y} at position {} outside [0, {class_count})",
                    i % n.max(1)
                )));
            }
        }
        Ok(Self {
            features,
            observed_labels,
            true_labels,
            class_count,
        })
    }

    /// A dataset whose observed labels are the true labels.
    pub fn clean(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        Self::new(features, labels.clone(), labels, class_count)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn observed_labels(&self) -> &[usize] {
        &self.observed_labels
    }

    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Fraction of examples whose observed label differs from the truth.
    pub fn noise_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let flipped = self
            .observed_labels
            .iter()
            .zip(&self.true_labels)
            .filter(|(o, t)| o != t)
            .count();
        flipped as f64 / self.len() as f64
    }

    pub fn with_observed_labels(&self, observed: Vec<usize>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            observed,
            self.true_labels.clone(),
            self.class_count,
        )
    }

    pub fn with_true_labels(&self, truth: Vec<usize>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            self.observed_labels.clone(),
            truth,
            self.class_count,
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            observed_labels: indices.iter().map(|&i| self.observed_labels[i]).collect(),
            true_labels: indices.iter().map(|&i| self.true_labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// The first `n` examples (or all, if fewer).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}
