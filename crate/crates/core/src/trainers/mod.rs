//! Epoch drivers for JoCoR and the comparison trainers.
//!
//! Every trainer shares the same loop: seeded shuffle, fixed-size
//! mini-batches (the last one may be short), one update per batch, then a
//! test-set evaluation. Batches in epoch `t` (1-based) use the keep rate
//! `R(t - 1)`, so the first epoch keeps everything.

mod baselines;
mod jocor;

pub use baselines::{train_co_teaching, train_decoupling, train_standard, train_standard_plus};
pub use jocor::train_jocor;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{config, data, Error, Result};
use crate::loss::{keep_rate, KeepSchedule, Selection};
use crate::matrix::Matrix;
use crate::nn::{argmax_rows, AdamConfig, MlpNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Jocor,
    Standard,
    StandardPlus,
    JointOnly,
    Decoupling,
    CoTeaching,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Jocor,
        Variant::Standard,
        Variant::StandardPlus,
        Variant::JointOnly,
        Variant::Decoupling,
        Variant::CoTeaching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Jocor => "jocor",
            Variant::Standard => "standard",
            Variant::StandardPlus => "standard_plus",
            Variant::JointOnly => "joint_only",
            Variant::Decoupling => "decoupling",
            Variant::CoTeaching => "co_teaching",
        }
    }

    pub fn network_count(self) -> usize {
        match self {
            Variant::Standard | Variant::StandardPlus => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| config(format!("unknown trainer variant {s:?}")))
    }
}

/// Linear learning-rate decay to zero between two epochs (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LrDecay {
    pub start_epoch: usize,
    pub end_epoch: usize,
}

impl LrDecay {
    /// Constant `base` before `start_epoch`, `base·(end - e)/(end - start)`
    /// in between, 0 from `end_epoch` on.
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        if epoch < self.start_epoch {
            base
        } else if epoch >= self.end_epoch {
            0.0
        } else {
            base * (self.end_epoch - epoch) as f64 / (self.end_epoch - self.start_epoch) as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub variant: Variant,
    pub lambda: f64,
    pub schedule: KeepSchedule,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_decay: LrDecay,
    /// Initialization seeds of the two networks; the first also seeds the
    /// per-epoch shuffle.
    pub seeds: (u64, u64),
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
}

impl TrainerConfig {
    /// Training setup of the MNIST experiments: Adam at 1e-3, batch 128,
    /// λ = 0.95, T_k = 10, decay from epoch 80 to 200, one 256-unit layer.
    pub fn new(variant: Variant, tau: f64) -> Self {
        Self {
            variant,
            lambda: 0.95,
            schedule: KeepSchedule { tau, t_k: 10 },
            adam: AdamConfig::default(),
            epochs: 200,
            batch_size: 128,
            lr_decay: LrDecay {
                start_epoch: 80,
                end_epoch: 200,
            },
            seeds: (1, 2),
            hidden: vec![256],
        }
    }

    /// Lambda actually used by the trainer (Joint-only pins it to 0).
    pub fn effective_lambda(&self) -> f64 {
        match self.variant {
            Variant::JointOnly => 0.0,
            _ => self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.adam.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(config("batch_size must be positive"));
        }
        if self.lr_decay.start_epoch > self.lr_decay.end_epoch {
            return Err(config(format!(
                "lr decay starts at {} after it ends at {}",
                self.lr_decay.start_epoch, self.lr_decay.end_epoch
            )));
        }
        if self.hidden.contains(&0) {
            return Err(config("hidden widths must be positive"));
        }
        Ok(())
    }

    fn widths(&self, data: &LabeledDataset) -> Vec<usize> {
        let mut w = vec![data.dim()];
        w.extend(&self.hidden);
        w.push(data.class_count());
        w
    }

    fn networks(&self, data: &LabeledDataset) -> Result<Vec<MlpNetwork>> {
        let widths = self.widths(data);
        [self.seeds.0, self.seeds.1][..self.variant.network_count()]
            .iter()
            .map(|&s| MlpNetwork::init(&widths, s))
            .collect()
    }
}

/// Metrics of one finished epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// One entry per network.
    pub test_accuracy: Vec<f64>,
    /// Mean over batches of the clean fraction among selected examples;
    /// `None` when no batch selected anything.
    pub label_precision: Option<f64>,
    pub keep_rate: f64,
    /// Mean over updated batches of the minimized objective.
    pub mean_joint_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub records: Vec<EpochRecord>,
    pub networks: Vec<MlpNetwork>,
}

/// Runs whichever trainer `cfg.variant` names.
pub fn train(
    data: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainerConfig,
) -> Result<TrainRun> {
    match cfg.variant {
        Variant::Jocor | Variant::JointOnly => train_jocor(data, test, cfg),
        Variant::Standard => train_standard(data, test, cfg),
        Variant::StandardPlus => train_standard_plus(data, test, cfg),
        Variant::CoTeaching => train_co_teaching(data, test, cfg),
        Variant::Decoupling => train_decoupling(data, test, cfg),
    }
}

/// A mini-batch as the update rules see it: no ground truth.
pub(crate) struct Batch {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

/// What one update reports back to the epoch loop.
#[derive(Default)]
pub(crate) struct StepOutcome {
    /// Selections whose label precision is averaged for this batch.
    pub selections: Vec<Selection>,
    /// Objective that was minimized; `None` if the batch was skipped.
    pub loss: Option<f64>,
}

pub(crate) fn check_variant(cfg: &TrainerConfig, allowed: &[Variant]) -> Result<()> {
    if !allowed.contains(&cfg.variant) {
        return Err(config(format!(
            "trainer for {allowed:?} called with variant {}",
            cfg.variant
        )));
    }
    cfg.validate()
}

/// Shared epoch loop. `step` performs one update on `nets`.
pub(crate) fn run_epochs<F>(
    data: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainerConfig,
    mut step: F,
) -> Result<TrainRun>
where
    F: FnMut(&mut [MlpNetwork], &Batch, f64, &AdamConfig) -> Result<StepOutcome>,
{
    if data.class_count() != test.class_count() {
        return Err(config(format!(
            "train has {} classes, test {}",
            data.class_count(),
            test.class_count()
        )));
    }
    if data.is_empty() {
        return Err(crate::error::data("training set is empty"));
    }
    let mut nets = cfg.networks(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.0);
    rng.set_stream(1);
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_decay.lr_at(cfg.adam.learning_rate, epoch);
        let adam = cfg.adam.with_learning_rate(lr);
        let rate = keep_rate(&cfg.schedule, epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let mut precision = Mean::default();
        let mut loss = Mean::default();
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch {
                x: data.features().select_rows(idx),
                labels: idx.iter().map(|&i| data.observed_labels()[i]).collect(),
            };
            let outcome = step(&mut nets, &batch, rate, &adam).map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("epoch {} batch {b}: {msg}", epoch + 1))
                }
                other => other,
            })?;
            if let Some(l) = outcome.loss {
                if !l.is_finite() {
                    return Err(Error::Numeric(format!(
                        "epoch {} batch {b}: loss is {l}",
                        epoch + 1
                    )));
                }
                loss.add(l);
            }
            let truth: Vec<usize> = idx.iter().map(|&i| data.true_labels()[i]).collect();
            let per_sel: Vec<f64> = outcome
                .selections
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| label_precision(s, &batch.labels, &truth))
                .collect::<Result<_>>()?;
            if !per_sel.is_empty() {
                precision.add(per_sel.iter().sum::<f64>() / per_sel.len() as f64);
            }
        }

        let test_accuracy = evaluate(&nets, test)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            test_accuracy,
            label_precision: precision.value(),
            keep_rate: rate,
            mean_joint_loss: loss.value(),
            learning_rate: lr,
        };
        log::debug!("{} {record:?}", cfg.variant);
        records.push(record);
    }
    Ok(TrainRun {
        records,
        networks: nets,
    })
}

#[derive(Default)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

const EVAL_CHUNK: usize = 1000;

/// Test accuracy of each network: argmax of the softmax (ties to the lowest
/// class) against the true labels.
pub fn evaluate(nets: &[MlpNetwork], test: &LabeledDataset) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(data("cannot evaluate on an empty test set"));
    }
    let order: Vec<usize> = (0..test.len()).collect();
    nets.iter()
        .map(|net| {
            let mut correct = 0usize;
            for idx in order.chunks(EVAL_CHUNK) {
                let probs = net.predict(&test.features().select_rows(idx))?;
                correct += argmax_rows(&probs)
                    .iter()
                    .zip(idx)
                    .filter(|(pred, &i)| **pred == test.true_labels()[i])
                    .count();
            }
            Ok(correct as f64 / test.len() as f64)
        })
        .collect()
}

/// Fraction of selected examples whose observed label is the true one.
pub fn label_precision(sel: &Selection, observed: &[usize], truth: &[usize]) -> Result<f64> {
    if sel.is_empty() {
        return Err(data("label precision of an empty selection"));
    }
    let mut clean = 0usize;
    for &i in &sel.kept_indices {
        match (observed.get(i), truth.get(i)) {
            (Some(o), Some(t)) => clean += usize::from(o == t),
            _ => return Err(data(format!("selected index {i} outside the batch"))),
        }
    }
    Ok(clean as f64 / sel.len() as f64)
}
