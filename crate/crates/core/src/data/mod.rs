//! Dataset ingestion, synthetic data and splitting.

pub mod idx;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{config, Error, Result};
use crate::matrix::Matrix;

pub use idx::{IdxHeader, IMAGES_MAGIC, LABELS_MAGIC};

pub const MNIST_CLASSES: usize = 10;

/// Loads an MNIST image/label pair (plain or gzip-compressed IDX).
/// Pixels are scaled by 1/255; observed labels equal true labels.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let image_bytes = idx::read_maybe_gzip(images_path)?;
    let label_bytes = idx::read_maybe_gzip(labels_path)?;
    let (ih, pixels) = idx::parse_idx(&image_bytes, IMAGES_MAGIC)?;
    let (lh, labels) = idx::parse_idx(&label_bytes, LABELS_MAGIC)?;
    let n = ih.dims[0];
    if lh.dims[0] != n {
        return Err(Error::Format {
            offset: 4,
            message: format!(
                "{} holds {} labels but {} holds {n} images",
                labels_path.display(),
                lh.dims[0],
                images_path.display()
            ),
        });
    }
    let dim = ih.dims[1] * ih.dims[2];
    let features = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&b| b as usize).collect();
    if let Some(i) = labels.iter().position(|&y| y >= MNIST_CLASSES) {
        return Err(Error::Format {
            offset: (lh.byte_len() + i) as u64,
            message: format!("label {} is not a digit", labels[i]),
        });
    }
    LabeledDataset::clean(Matrix::from_vec(n, dim, features)?, labels, MNIST_CLASSES)
}

/// Gaussian blobs around seeded random centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub per_class: usize,
    pub dim: usize,
    pub cluster_spread: f64,
    pub seed: u64,
}

/// Centers are uniform in [-1, 1]^dim; each example is its class center plus
/// `cluster_spread`·N(0, I). Examples are interleaved by class (example `i`
/// has label `i mod class_count`).
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    if spec.class_count < 2 || spec.per_class == 0 || spec.dim == 0 {
        return Err(config(format!("invalid synthetic spec {spec:?}")));
    }
    if !(spec.cluster_spread >= 0.0 && spec.cluster_spread.is_finite()) {
        return Err(config("cluster_spread must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.class_count);
    while centers.len() < spec.class_count {
        let c: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if !centers.contains(&c) {
            centers.push(c);
        }
    }
    let n = spec.class_count * spec.per_class;
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..spec.per_class {
        for (class, center) in centers.iter().enumerate() {
            for &c in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(c + spec.cluster_spread * z);
            }
            labels.push(class);
        }
    }
    LabeledDataset::clean(
        Matrix::from_vec(n, spec.dim, features)?,
        labels,
        spec.class_count,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(config(format!("split fractions outside [0, 1]: {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(config(format!("split fractions must sum to 1: {self:?}")));
        }
        Ok(())
    }
}

/// Seeded shuffle, then consecutive train / validation / test blocks.
/// Validation and test sizes are `round(fraction · N)`; train takes the
/// rest. The validation set always carries clean labels.
pub fn split(
    data: &LabeledDataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    fractions.validate()?;
    let n = data.len();
    let n_val = (fractions.validation * n as f64).round() as usize;
    let n_test = (fractions.test * n as f64).round() as usize;
    if n_val + n_test > n {
        return Err(config("split fractions exceed dataset size"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n - n_val - n_test;
    let train = data.subset(&order[..n_train]);
    let val = data.subset(&order[n_train..n_train + n_val]);
    let val = val.with_observed_labels(val.true_labels().to_vec())?;
    let test = data.subset(&order[n_train + n_val..]);
    Ok((train, val, test))
}
