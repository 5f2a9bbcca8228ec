use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nll_core::data::{make_synthetic, SyntheticSpec};
use nll_experiments::error::ExperimentError;
use nll_experiments::{run_experiment, sweep_lambda, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "nll", version, about = "Noisy-label training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured trainer for every repeat.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all CPUs).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train JoCoR for each λ and pick the best on clean validation data.
    SweepLambda {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write a synthetic Gaussian-blob dataset as CSV (label, features).
    GenSynthetic {
        /// TOML file with class_count, per_class, dim, cluster_spread, seed.
        #[arg(long)]
        spec: PathBuf,
        /// Destination file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Ok(seed) = std::env::var("NLL_SEED") {
        cfg.base_seed = seed.trim().parse().map_err(|_| {
            ExperimentError::Config(format!("NLL_SEED {seed:?} is not an unsigned integer"))
        })?;
    }
    Ok(cfg)
}

fn gen_synthetic(spec: &Path, out: Option<&Path>) -> Result<(), ExperimentError> {
    let text = std::fs::read_to_string(spec).map_err(|source| ExperimentError::Io {
        path: spec.to_path_buf(),
        source,
    })?;
    let spec: SyntheticSpec =
        toml::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let data = make_synthetic(&spec)?;
    let mut csv = String::from("label");
    for j in 0..data.dim() {
        csv.push_str(&format!(",x{j}"));
    }
    csv.push('\n');
    for (i, &label) in data.true_labels().iter().enumerate() {
        csv.push_str(&label.to_string());
        for v in data.features().row(i) {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, csv).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|source| ExperimentError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run { config, out, jobs } => {
            let cfg = load_config(&config)?;
            let summary = run_experiment(
                &cfg,
                &RunOptions {
                    output_dir: out,
                    jobs,
                },
            )?;
            for t in &summary.trainers {
                if let Some(s) = t.test_accuracy {
                    println!(
                        "{:<20} {:.2} ± {:.2}",
                        t.name,
                        100.0 * s.mean,
                        100.0 * s.std
                    );
                }
            }
            println!("results in {}", summary.config.output_dir.display());
        }
        Command::SweepLambda {
            config,
            lambdas,
            out,
            jobs,
        } => {
            let cfg = load_config(&config)?;
            let report = sweep_lambda(
                &cfg,
                &lambdas,
                &RunOptions {
                    output_dir: out,
                    jobs,
                },
            )?;
            print!("{}", report.to_csv());
        }
        Command::GenSynthetic { spec, out } => gen_synthetic(&spec, out.as_deref())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
