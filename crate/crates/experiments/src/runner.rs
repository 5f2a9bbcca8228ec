//! Seeded trainer grids: corrupt once per repeat, train every configured
//! trainer on the same labels, write per-run CSVs, a JSON summary and an
//! SVG of the curves.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nll_core::trainers::{train, EpochRecord, TrainerConfig, Variant};
use nll_core::LabeledDataset;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DatasetConfig, ExperimentConfig, ResolvedTrainer};
use crate::error::{config_err, io_err, ExperimentError, Result};
use crate::report::{records_csv, render_svg, CurveSeries};

/// Number of trailing epochs averaged in summaries.
pub const LAST_EPOCHS: usize = 10;

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Overrides `output_dir` of the config.
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 picks the number of CPUs.
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            output_dir: None,
            jobs: 1,
        }
    }
}

/// Population mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Trailing-epoch means of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepeatMetrics {
    pub repeat: usize,
    pub seeds: (u64, u64),
    pub test_accuracy: Option<f64>,
    pub test_accuracy_net2: Option<f64>,
    pub label_precision: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainerSummary {
    pub name: String,
    pub variant: Variant,
    /// Settings of repeat 0; later repeats differ only in seeds.
    pub config: TrainerConfig,
    pub test_accuracy: Option<Stat>,
    pub test_accuracy_net2: Option<Stat>,
    pub label_precision: Option<Stat>,
    pub per_repeat: Vec<RepeatMetrics>,
    /// Epoch records indexed by repeat.
    #[serde(skip)]
    pub records: Vec<Vec<EpochRecord>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub noise_tau: f64,
    pub last_epochs: usize,
    /// SHA-256 of the observed training labels of each repeat, as
    /// little-endian u32 values.
    pub label_hashes: Vec<String>,
    /// Input preprocessing applied before training.
    pub preprocessing: String,
    pub train_size: usize,
    pub test_size: usize,
    pub trainers: Vec<TrainerSummary>,
}

impl RunSummary {
    pub fn trainer(&self, name: &str) -> Option<&TrainerSummary> {
        self.trainers.iter().find(|t| t.name == name)
    }
}

pub fn label_hash(labels: &[usize]) -> String {
    let mut h = Sha256::new();
    for &l in labels {
        h.update((l as u32).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean over the trailing `min(LAST_EPOCHS, len)` records of the values
/// `pick` yields; `None` if none of them has a value.
pub fn trailing_mean(
    records: &[EpochRecord],
    pick: impl Fn(&EpochRecord) -> Option<f64>,
) -> Option<f64> {
    let k = LAST_EPOCHS.min(records.len());
    let vals: Vec<f64> = records[records.len() - k..]
        .iter()
        .filter_map(pick)
        .collect();
    Stat::of(&vals).map(|s| s.mean)
}

pub fn csv_name(trainer: &str, repeat: usize) -> String {
    format!("epochs_{trainer}_{repeat}.csv")
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(format!("cannot start {jobs} workers: {e}")))
}

pub(crate) fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Corrupted training sets, one per repeat.
pub(crate) fn corrupt_repeats(
    cfg: &ExperimentConfig,
    clean: &LabeledDataset,
) -> Result<Vec<LabeledDataset>> {
    (0..cfg.repeats)
        .map(|r| Ok(cfg.noise_spec(r).apply(clean)?))
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Some(dir) = &opts.output_dir {
        cfg.output_dir = dir.clone();
    }
    let out = cfg.output_dir.clone();
    prepare_output(&out)?;

    let data = cfg.prepare_data()?;
    let tau = cfg.noise_tau()?;
    let noisy = corrupt_repeats(&cfg, &data.train)?;
    let label_hashes: Vec<String> = noisy
        .iter()
        .map(|d| label_hash(d.observed_labels()))
        .collect();
    let grid: Vec<Vec<ResolvedTrainer>> = (0..cfg.repeats)
        .map(|r| cfg.resolve_trainers(tau, r))
        .collect::<Result<_>>()?;
    info!(
        "{} trainers x {} repeats on {} training / {} test examples, tau {tau}",
        cfg.trainers.len(),
        cfg.repeats,
        data.train.len(),
        data.test.len()
    );

    let tasks: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.trainers.len()).map(move |t| (r, t)))
        .collect();
    let pool = thread_pool(opts.jobs)?;
    let results: Vec<Result<Vec<EpochRecord>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(r, t)| {
                let trainer = &grid[r][t];
                let run = train(&noisy[r], &data.test, &trainer.config)?;
                let path = out.join(csv_name(&trainer.name, r));
                write_file(&path, &records_csv(&trainer.name, r, &run.records))?;
                info!("finished {} repeat {r}", trainer.name);
                Ok(run.records)
            })
            .collect()
    });

    let mut records: Vec<Vec<Vec<EpochRecord>>> =
        vec![Vec::with_capacity(cfg.repeats); cfg.trainers.len()];
    let mut first_err: Option<ExperimentError> = None;
    for (&(r, t), res) in tasks.iter().zip(results) {
        match res {
            Ok(recs) => records[t].push(recs),
            Err(e) => {
                log::error!("{} repeat {r}: {e}", grid[r][t].name);
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }

    let trainers: Vec<TrainerSummary> = records
        .into_iter()
        .enumerate()
        .map(|(t, runs)| summarize(&grid, t, runs))
        .collect();
    let summary = RunSummary {
        preprocessing: preprocessing(&cfg.dataset).to_string(),
        config: cfg,
        noise_tau: tau,
        last_epochs: trainers
            .first()
            .and_then(|t| t.records.first())
            .map_or(0, |r| LAST_EPOCHS.min(r.len())),
        label_hashes,
        train_size: data.train.len(),
        test_size: data.test.len(),
        trainers,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| config_err(format!("cannot serialize summary: {e}")))?;
    write_file(&out.join("summary.json"), &(json + "\n"))?;
    let curves: Vec<CurveSeries> = summary.trainers.iter().map(curve).collect();
    write_file(&out.join("curves.svg"), &render_svg(&curves))?;
    Ok(summary)
}

fn preprocessing(dataset: &DatasetConfig) -> &'static str {
    match dataset {
        DatasetConfig::Mnist { .. } => "pixel values divided by 255",
        DatasetConfig::Synthetic { .. } => "none",
    }
}

fn summarize(
    grid: &[Vec<ResolvedTrainer>],
    t: usize,
    runs: Vec<Vec<EpochRecord>>,
) -> TrainerSummary {
    let per_repeat: Vec<RepeatMetrics> = runs
        .iter()
        .enumerate()
        .map(|(r, recs)| RepeatMetrics {
            repeat: r,
            seeds: grid[r][t].config.seeds,
            test_accuracy: trailing_mean(recs, |e| e.test_accuracy.first().copied()),
            test_accuracy_net2: trailing_mean(recs, |e| e.test_accuracy.get(1).copied()),
            label_precision: trailing_mean(recs, |e| e.label_precision),
        })
        .collect();
    let stat = |f: fn(&RepeatMetrics) -> Option<f64>| {
        let v: Vec<f64> = per_repeat.iter().filter_map(f).collect();
        Stat::of(&v)
    };
    TrainerSummary {
        name: grid[0][t].name.clone(),
        variant: grid[0][t].config.variant,
        config: grid[0][t].config.clone(),
        test_accuracy: stat(|m| m.test_accuracy),
        test_accuracy_net2: stat(|m| m.test_accuracy_net2),
        label_precision: stat(|m| m.label_precision),
        per_repeat,
        records: runs,
    }
}

/// Mean ± std across repeats at every epoch.
pub fn epoch_stats(
    runs: &[Vec<EpochRecord>],
    pick: impl Fn(&EpochRecord) -> Option<f64>,
) -> Vec<(usize, f64, f64)> {
    let epochs = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..epochs)
        .filter_map(|i| {
            let vals: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.get(i).and_then(&pick))
                .collect();
            Stat::of(&vals).map(|s| (i + 1, s.mean, s.std))
        })
        .collect()
}

fn curve(t: &TrainerSummary) -> CurveSeries {
    CurveSeries {
        name: t.name.clone(),
        accuracy: epoch_stats(&t.records, |e| e.test_accuracy.first().copied()),
        precision: epoch_stats(&t.records, |e| e.label_precision),
    }
}
