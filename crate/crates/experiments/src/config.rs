//! TOML experiment configuration.
//!
//! ```toml
//! output_dir = "runs/mnist-sym50"
//! repeats = 2
//! base_seed = 1
//!
//! [dataset]
//! kind = "mnist"
//! train_images = "data/mnist/train-images-idx3-ubyte"
//! train_labels = "data/mnist/train-labels-idx1-ubyte"
//! test_images = "data/mnist/t10k-images-idx3-ubyte"
//! test_labels = "data/mnist/t10k-labels-idx1-ubyte"
//! train_limit = 10000
//!
//! [noise]
//! kind = "symmetric"
//! rate = 0.5
//!
//! [defaults]
//! epochs = 60
//!
//! [[trainers]]
//! variant = "standard"
//!
//! [[trainers]]
//! variant = "jocor"
//! lambda = 0.95
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use nll_core::data::{load_mnist, make_synthetic, split, SplitFractions, SyntheticSpec};
use nll_core::loss::KeepSchedule;
use nll_core::noise::{NoiseKind, NoiseSpec};
use nll_core::trainers::{LrDecay, TrainerConfig, Variant};
use nll_core::{AdamConfig, LabeledDataset};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, io_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    pub dataset: DatasetConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub defaults: TrainerDefaults,
    pub trainers: Vec<TrainerEntry>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_repeats() -> usize {
    1
}

fn default_base_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Use only the first `train_limit` training images.
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
        /// Clean validation split carved out of the training images.
        #[serde(default)]
        validation_fraction: f64,
    },
    Synthetic {
        class_count: usize,
        per_class: usize,
        dim: usize,
        cluster_spread: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        validation_fraction: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    #[serde(default)]
    pub rate: f64,
}

/// Trainer settings shared by every entry unless overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerDefaults {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub t_k: usize,
    /// Noise rate assumed by the keep schedule; defaults to the expected
    /// flip rate of the configured noise.
    pub tau: Option<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lr_decay_start: usize,
    pub lr_decay_end: usize,
    pub hidden: Vec<usize>,
}

impl Default for TrainerDefaults {
    fn default() -> Self {
        let base = TrainerConfig::new(Variant::Jocor, 0.0);
        Self {
            epochs: base.epochs,
            batch_size: base.batch_size,
            lambda: base.lambda,
            t_k: base.schedule.t_k,
            tau: None,
            learning_rate: base.adam.learning_rate,
            beta1: base.adam.beta1,
            beta2: base.adam.beta2,
            epsilon: base.adam.epsilon,
            lr_decay_start: base.lr_decay.start_epoch,
            lr_decay_end: base.lr_decay.end_epoch,
            hidden: base.hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerEntry {
    pub variant: Variant,
    /// Label used in file names; defaults to the variant name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub t_k: Option<usize>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

impl TrainerEntry {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            name: None,
            lambda: None,
            t_k: None,
            tau: None,
            epochs: None,
            learning_rate: None,
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.variant.name().to_string())
    }
}

/// One fully resolved trainer of one repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedTrainer {
    pub name: String,
    pub config: TrainerConfig,
}

/// Mixes (base seed, repeat, stream) into a well-spread 64-bit seed.
pub fn derive_seed(base: u64, repeat: usize, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add((repeat as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let DatasetConfig::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self.dataset
        {
            fix(train_images);
            fix(train_labels);
            fix(test_images);
            fix(test_labels);
        }
    }

    pub fn noise_spec(&self, repeat: usize) -> NoiseSpec {
        NoiseSpec {
            kind: self.noise.kind,
            rate: self.noise.rate,
            seed: self.base_seed.wrapping_add(repeat as u64),
        }
    }

    pub fn class_count(&self) -> usize {
        match &self.dataset {
            DatasetConfig::Mnist { .. } => nll_core::data::MNIST_CLASSES,
            DatasetConfig::Synthetic { class_count, .. } => *class_count,
        }
    }

    /// Expected noise rate of the configured corruption.
    pub fn noise_tau(&self) -> Result<f64> {
        Ok(self.noise_spec(0).tau(self.class_count())?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(config_err("repeats must be at least 1"));
        }
        if self.trainers.is_empty() {
            return Err(config_err("no trainers configured"));
        }
        let rate_ok = match self.noise.kind {
            NoiseKind::None => self.noise.rate == 0.0,
            NoiseKind::Symmetric => (0.0..1.0).contains(&self.noise.rate),
            NoiseKind::Asymmetric => (0.0..=0.5).contains(&self.noise.rate),
        };
        if !rate_ok {
            return Err(config_err(format!(
                "noise rate {} invalid for {:?} noise",
                self.noise.rate, self.noise.kind
            )));
        }
        match &self.dataset {
            DatasetConfig::Mnist {
                validation_fraction,
                ..
            } => check_fraction("validation_fraction", *validation_fraction)?,
            DatasetConfig::Synthetic {
                class_count,
                per_class,
                dim,
                validation_fraction,
                test_fraction,
                ..
            } => {
                if *class_count < 2 || *per_class == 0 || *dim == 0 {
                    return Err(config_err(
                        "synthetic data needs class_count >= 2, per_class >= 1, dim >= 1",
                    ));
                }
                check_fraction("validation_fraction", *validation_fraction)?;
                check_fraction("test_fraction", *test_fraction)?;
                if validation_fraction + test_fraction >= 1.0 {
                    return Err(config_err(
                        "validation and test fractions leave no training data",
                    ));
                }
                if *test_fraction == 0.0 {
                    return Err(config_err("synthetic data needs a test_fraction > 0"));
                }
            }
        }
        let mut names = HashSet::new();
        for entry in &self.trainers {
            let name = entry.label();
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            {
                return Err(config_err(format!(
                    "trainer name {name:?} must be non-empty and use only [A-Za-z0-9_.-]"
                )));
            }
            if !names.insert(name.clone()) {
                return Err(config_err(format!(
                    "duplicate trainer name {name:?}; set `name` to tell them apart"
                )));
            }
        }
        let tau = self.noise_tau()?;
        for t in self.resolve_trainers(tau, 0)? {
            t.config
                .validate()
                .map_err(|e| config_err(format!("trainer {}: {e}", t.name)))?;
        }
        Ok(())
    }

    /// Trainer configurations for one repeat. Every trainer of a repeat
    /// shares the same pair of network seeds, so runs are paired.
    pub fn resolve_trainers(&self, noise_tau: f64, repeat: usize) -> Result<Vec<ResolvedTrainer>> {
        let d = &self.defaults;
        let seeds = (
            derive_seed(self.base_seed, repeat, 1),
            derive_seed(self.base_seed, repeat, 2),
        );
        Ok(self
            .trainers
            .iter()
            .map(|e| {
                let tau = e.tau.or(d.tau).unwrap_or(noise_tau);
                ResolvedTrainer {
                    name: e.label(),
                    config: TrainerConfig {
                        variant: e.variant,
                        lambda: e.lambda.unwrap_or(d.lambda),
                        schedule: KeepSchedule {
                            tau,
                            t_k: e.t_k.unwrap_or(d.t_k),
                        },
                        adam: AdamConfig {
                            learning_rate: e.learning_rate.unwrap_or(d.learning_rate),
                            beta1: d.beta1,
                            beta2: d.beta2,
                            epsilon: d.epsilon,
                        },
                        epochs: e.epochs.unwrap_or(d.epochs),
                        batch_size: d.batch_size,
                        lr_decay: LrDecay {
                            start_epoch: d.lr_decay_start,
                            end_epoch: d.lr_decay_end,
                        },
                        seeds,
                        hidden: d.hidden.clone(),
                    },
                }
            })
            .collect())
    }

    /// Loads or generates the clean train / validation / test sets.
    pub fn prepare_data(&self) -> Result<PreparedData> {
        match &self.dataset {
            DatasetConfig::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
                validation_fraction,
            } => {
                let mut train = load_mnist(train_images, train_labels)?;
                if let Some(n) = train_limit {
                    train = train.head(*n);
                }
                let mut test = load_mnist(test_images, test_labels)?;
                if let Some(n) = test_limit {
                    test = test.head(*n);
                }
                let (train, validation) = if *validation_fraction > 0.0 {
                    let f = SplitFractions {
                        train: 1.0 - validation_fraction,
                        validation: *validation_fraction,
                        test: 0.0,
                    };
                    let (tr, va, _) = split(&train, f, self.base_seed)?;
                    (tr, Some(va))
                } else {
                    (train, None)
                };
                Ok(PreparedData {
                    train,
                    validation,
                    test,
                })
            }
            DatasetConfig::Synthetic {
                class_count,
                per_class,
                dim,
                cluster_spread,
                seed,
                validation_fraction,
                test_fraction,
            } => {
                let all = make_synthetic(&SyntheticSpec {
                    class_count: *class_count,
                    per_class: *per_class,
                    dim: *dim,
                    cluster_spread: *cluster_spread,
                    seed: *seed,
                })?;
                let f = SplitFractions {
                    train: 1.0 - validation_fraction - test_fraction,
                    validation: *validation_fraction,
                    test: *test_fraction,
                };
                let (train, validation, test) = split(&all, f, *seed)?;
                Ok(PreparedData {
                    train,
                    validation: (!validation.is_empty()).then_some(validation),
                    test,
                })
            }
        }
    }
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if (0.0..1.0).contains(&f) {
        Ok(())
    } else {
        Err(config_err(format!("{name} {f} outside [0, 1)")))
    }
}

/// Clean data ready for corruption.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub validation: Option<LabeledDataset>,
    pub test: LabeledDataset,
}
