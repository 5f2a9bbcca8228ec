//! λ sweep for JoCoR with clean-validation model selection.

use std::fmt::Write as _;

use log::{info, warn};
use nll_core::trainers::{evaluate, train, Variant};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, TrainerEntry};
use crate::error::{config_err, Result};
use crate::runner::{
    corrupt_repeats, prepare_output, thread_pool, trailing_mean, write_file, RunOptions,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// Final first-network accuracy on the clean validation split, averaged
    /// over repeats.
    pub validation_accuracy: f64,
    /// Trailing-epoch test accuracy of the first network, averaged over
    /// repeats.
    pub test_accuracy: f64,
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    /// Sorted by λ.
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.best)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,validation_acc,test_acc,best\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.9},{:.9},{}",
                r.lambda, r.validation_accuracy, r.test_accuracy, r.best
            );
        }
        out
    }
}

/// Sorts ascending and drops repeated values, returning a warning for each
/// value that was dropped.
pub fn normalize_lambdas(lambdas: &[f64]) -> Result<(Vec<f64>, Vec<String>)> {
    if lambdas.is_empty() {
        return Err(config_err("no lambda values given"));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(config_err(format!("lambda {bad} outside [0, 1]")));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut warnings = Vec::new();
    let mut out: Vec<f64> = Vec::with_capacity(sorted.len());
    for l in sorted {
        if out.last() == Some(&l) {
            warnings.push(format!("duplicate lambda {l} ignored"));
        } else {
            out.push(l);
        }
    }
    Ok((out, warnings))
}

/// Trains JoCoR once per λ and repeat on the same corrupted labels and marks
/// the λ with the best validation accuracy (ties go to the smaller λ).
/// The JoCoR entry of the config, if any, supplies the other settings.
/// Writes `sweep.csv` to the output directory.
pub fn sweep_lambda(
    cfg: &ExperimentConfig,
    lambdas: &[f64],
    opts: &RunOptions,
) -> Result<SweepReport> {
    let (lambdas, warnings) = normalize_lambdas(lambdas)?;
    for w in &warnings {
        warn!("{w}");
    }
    let template = cfg
        .trainers
        .iter()
        .find(|t| t.variant == Variant::Jocor)
        .cloned()
        .unwrap_or_else(|| TrainerEntry::new(Variant::Jocor));
    let mut cfg = cfg.clone();
    cfg.trainers = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| TrainerEntry {
            name: Some(format!("jocor_{i}")),
            lambda: Some(l),
            ..template.clone()
        })
        .collect();
    cfg.validate()?;
    if let Some(dir) = &opts.output_dir {
        cfg.output_dir = dir.clone();
    }
    prepare_output(&cfg.output_dir)?;

    let data = cfg.prepare_data()?;
    let validation = data.validation.as_ref().ok_or_else(|| {
        config_err("the lambda sweep needs a clean validation split (validation_fraction > 0)")
    })?;
    let tau = cfg.noise_tau()?;
    let noisy = corrupt_repeats(&cfg, &data.train)?;
    let grid = (0..cfg.repeats)
        .map(|r| cfg.resolve_trainers(tau, r))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|l| (0..cfg.repeats).map(move |r| (l, r)))
        .collect();
    let pool = thread_pool(opts.jobs)?;
    let results: Vec<Result<(f64, f64)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(l, r)| {
                let run = train(&noisy[r], &data.test, &grid[r][l].config)?;
                let val = evaluate(&run.networks[..1], validation)?[0];
                let test = trailing_mean(&run.records, |e| e.test_accuracy.first().copied())
                    .unwrap_or(f64::NAN);
                info!(
                    "lambda {} repeat {r}: validation {val:.4}, test {test:.4}",
                    lambdas[l]
                );
                Ok((val, test))
            })
            .collect()
    });
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_>>()?;

    let reps = cfg.repeats as f64;
    let mut rows: Vec<SweepRow> = lambdas
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let mine = &results[l * cfg.repeats..(l + 1) * cfg.repeats];
            SweepRow {
                lambda,
                validation_accuracy: mine.iter().map(|m| m.0).sum::<f64>() / reps,
                test_accuracy: mine.iter().map(|m| m.1).sum::<f64>() / reps,
                best: false,
            }
        })
        .collect();
    let best = rows.iter().enumerate().fold(0, |b, (i, r)| {
        if r.validation_accuracy > rows[b].validation_accuracy {
            i
        } else {
            b
        }
    });
    rows[best].best = true;
    let report = SweepReport { rows, warnings };
    write_file(&cfg.output_dir.join("sweep.csv"), &report.to_csv())?;
    Ok(report)
}
