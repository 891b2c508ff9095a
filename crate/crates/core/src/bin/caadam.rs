//! Command-line front end: single training runs, benchmark grids, reports and
//! loss-curve merging.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data or I/O error,
//! 3 every trial diverged.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use caadam::bench::experiment::{
    load_trials, run_experiment, run_trial, write_trials, DatasetSpec, ExperimentConfig,
    RunOptions, Trial, TrialResult, TrialSeeds,
};
use caadam::bench::report::build_report;
use caadam::data::{split_standardize, DEFAULT_SPLIT};
use caadam::optim::OptimizerConfig;
use caadam::train::{StopReason, TrainConfig};
use caadam::Error;

#[derive(Parser)]
#[command(
    name = "caadam",
    version,
    about = "Connection-aware Adam training and benchmarking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write its loss log and test metric.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every architecture × optimizer × trial cell and write a report.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the trial count from the config.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
    },
    /// Rebuild a report from a persisted trials file.
    Report {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, default_value = "adam")]
        baseline: String,
        /// Directory for report.json and report.csv; printed only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge per-trial loss curves into one long-format CSV.
    Curves {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config for the `train` subcommand.
#[derive(Debug, Deserialize)]
struct RunConfig {
    dataset: DatasetSpec,
    architecture: Vec<usize>,
    optimizer: OptimizerConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_split")]
    split: [f64; 3],
}

fn default_split() -> [f64; 3] {
    [DEFAULT_SPLIT.0, DEFAULT_SPLIT.1, DEFAULT_SPLIT.2]
}

#[derive(Serialize)]
struct RunMetrics<'a> {
    #[serde(flatten)]
    result: &'a TrialResult,
    best_val_loss: f64,
}

enum Failure {
    Lib(Error),
    AllDiverged,
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Lib(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Data(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn cmd_train(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg: RunConfig = read_config(config)?;
    cfg.optimizer.validate()?;
    cfg.train.validate()?;
    let dataset = cfg.dataset.load(config.parent())?;
    let seeds = TrialSeeds::derive(cfg.seed);
    let data = split_standardize(
        &dataset,
        (cfg.split[0], cfg.split[1], cfg.split[2]),
        seeds.split,
    )?;
    let outcome = run_trial(&Trial {
        data: &data,
        architecture: &cfg.architecture,
        optimizer: &cfg.optimizer,
        train: &cfg.train,
        seed: cfg.seed,
    })?;
    create_dir(out)?;
    outcome.log.write_csv(out.join("log.csv"))?;
    write_pretty(
        &out.join("metrics.json"),
        &RunMetrics {
            result: &outcome.result,
            best_val_loss: outcome.log.best_val_loss,
        },
    )?;
    write_pretty(&out.join("model.json"), &outcome.network)?;
    let r = &outcome.result;
    println!(
        "{}: {} = {} after {} epochs ({:?})",
        r.cell_id(),
        r.metric_kind,
        r.metric.map_or("n/a".to_string(), |m| format!("{m:.6}")),
        r.epochs_run,
        r.stop_reason
    );
    if r.stop_reason == StopReason::Diverged {
        return Err(Failure::AllDiverged);
    }
    Ok(())
}

fn cmd_benchmark(
    config: &Path,
    out: &Path,
    trials: Option<usize>,
    parallel: usize,
) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_json_file(config)?;
    if let Some(n) = trials {
        cfg.trials = n;
    }
    cfg.validate()?;
    create_dir(out)?;
    let opts = RunOptions {
        parallel,
        curves_dir: Some(out.join("logs")),
        base_dir: config.parent().map(Path::to_path_buf),
    };
    let results = run_experiment(&cfg, &opts)?;
    write_trials(out, &results)?;
    if results.iter().all(TrialResult::diverged) {
        return Err(Failure::AllDiverged);
    }
    let report = build_report(&results, &cfg.baseline)?;
    report.write(out)?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_report(trials: &Path, baseline: &str, out: Option<&Path>) -> Result<(), Failure> {
    let results = load_trials(trials)?;
    if !results.is_empty() && results.iter().all(TrialResult::diverged) {
        return Err(Failure::AllDiverged);
    }
    let report = build_report(&results, baseline)?;
    if let Some(dir) = out {
        report.write(dir)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_curves(logs: &Path, out: &Path) -> Result<(), Failure> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e| Error::Io { path, source: e }
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(logs)
        .map_err(io(logs))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no .csv logs in {}", logs.display())).into());
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut writer = csv::Writer::from_path(out)?;
    writer.write_record(["run", "epoch", "train_loss", "val_loss", "lr"])?;
    for file in &files {
        let run = file
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let mut reader = csv::Reader::from_path(file)?;
        for record in reader.records() {
            let record = record?;
            let mut row = vec![run.as_str()];
            row.extend(record.iter());
            writer.write_record(&row)?;
        }
    }
    writer.flush().map_err(io(out))?;
    println!("merged {} runs into {}", files.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train { config, out } => cmd_train(config, out),
        Command::Benchmark {
            config,
            out,
            trials,
            parallel,
        } => cmd_benchmark(config, out, *trials, *parallel),
        Command::Report {
            trials,
            baseline,
            out,
        } => cmd_report(trials, baseline, out.as_deref()),
        Command::Curves { logs, out } => cmd_curves(logs, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::AllDiverged) => {
            eprintln!("error: every trial diverged");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
