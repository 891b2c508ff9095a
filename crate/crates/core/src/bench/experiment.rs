//! Repeated-trial experiment grid.
//!
//! Trial `i` of every cell uses seed `base_seed + i`. That seed fixes the data
//! split, the initial weights and the shuffle order, so all optimizers in an
//! architecture row see identical starting conditions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_csv, split_standardize, synth_classification, synth_regression, CsvSchema, Dataset,
    SplitDataset, Task, DEFAULT_SPLIT,
};
use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::nn::{Network, NetworkSpec};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::train::{evaluate, task_head, train, StopReason, TrainConfig, TrainLog};

fn default_noise() -> f64 {
    0.1
}
fn default_spread() -> f64 {
    1.0
}
fn default_task() -> Task {
    Task::Regression
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Csv {
        path: PathBuf,
        target: String,
        #[serde(default = "default_task")]
        task: Task,
    },
    SynthRegression {
        n: usize,
        features: usize,
        #[serde(default = "default_noise")]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
    SynthClassification {
        n: usize,
        features: usize,
        classes: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl DatasetSpec {
    /// Loads or generates the dataset. Relative CSV paths resolve against
    /// `base_dir` when given.
    pub fn load(&self, base_dir: Option<&Path>) -> Result<Dataset> {
        match self {
            DatasetSpec::Csv { path, target, task } => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                load_csv(
                    &path,
                    &CsvSchema {
                        target: target.clone(),
                        task: *task,
                    },
                )
            }
            DatasetSpec::SynthRegression {
                n,
                features,
                noise_std,
                seed,
            } => synth_regression(*n, *features, *noise_std, *seed),
            DatasetSpec::SynthClassification {
                n,
                features,
                classes,
                spread,
                seed,
            } => synth_classification(*n, *features, *classes, *spread, *seed),
        }
        .map_err(|e| match e {
            Error::Config(m) => Error::Data(m),
            other => other,
        })
    }
}

fn default_trials() -> usize {
    30
}
fn default_split() -> [f64; 3] {
    [DEFAULT_SPLIT.0, DEFAULT_SPLIT.1, DEFAULT_SPLIT.2]
}
fn default_baseline() -> String {
    "adam".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub architectures: Vec<Vec<usize>>,
    pub optimizers: Vec<OptimizerConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    /// Label of the reference optimizer in reports.
    #[serde(default = "default_baseline")]
    pub baseline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::Config("trials must be >= 2 for a t-test".into()));
        }
        if self.architectures.is_empty() || self.optimizers.is_empty() {
            return Err(Error::Config(
                "need at least one architecture and one optimizer".into(),
            ));
        }
        if self.architectures.iter().flatten().any(|&w| w == 0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        let labels = self.labels();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate optimizer label '{l}'")));
            }
        }
        if !labels.contains(&self.baseline) {
            return Err(Error::Config(format!(
                "baseline optimizer '{}' is not in the grid",
                self.baseline
            )));
        }
        for o in &self.optimizers {
            o.validate()?;
        }
        self.train.validate()
    }

    pub fn labels(&self) -> Vec<String> {
        self.optimizers.iter().map(OptimizerConfig::label).collect()
    }

    pub fn split_fractions(&self) -> (f64, f64, f64) {
        (self.split[0], self.split[1], self.split[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub architecture: Vec<usize>,
    pub optimizer: String,
    pub seed: u64,
    /// `rmse` or `accuracy`.
    pub metric_kind: String,
    /// Test-set metric; `None` when the trial diverged.
    pub metric: Option<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    /// First 16 bytes of SHA-256 over the initial parameters.
    pub init_hash: String,
    /// Kept out of `trials.json` so that file is reproducible to the byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl TrialResult {
    pub fn cell_id(&self) -> String {
        cell_id(&self.architecture, &self.optimizer)
    }

    pub fn diverged(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }
}

pub fn architecture_label(arch: &[usize]) -> String {
    format!(
        "[{}]",
        arch.iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    )
}

pub fn cell_id(arch: &[usize], optimizer: &str) -> String {
    format!("{} {}", architecture_label(arch), optimizer)
}

/// Hex digest of the parameters, for checking shared initial conditions.
pub fn weights_hash(net: &Network) -> String {
    let mut hasher = Sha256::new();
    for layer in &net.layers {
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hasher.finalize()[..16]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Seeds derived from a trial seed: data split, weight init, shuffles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl TrialSeeds {
    pub fn derive(trial_seed: u64) -> Self {
        let mut rng = Rng::new(trial_seed);
        TrialSeeds {
            split: rng.next_u64(),
            init: rng.next_u64(),
            shuffle: rng.next_u64(),
        }
    }
}

/// Everything needed to run a single training job.
pub struct Trial<'a> {
    pub data: &'a SplitDataset,
    pub architecture: &'a [usize],
    pub optimizer: &'a OptimizerConfig,
    pub train: &'a TrainConfig,
    pub seed: u64,
}

pub struct TrialOutcome {
    pub result: TrialResult,
    pub log: TrainLog,
    pub network: Network,
}

pub fn network_spec(data: &Dataset, hidden: &[usize]) -> NetworkSpec {
    let head = task_head(data.task());
    NetworkSpec {
        input_dim: data.n_features(),
        hidden_sizes: hidden.to_vec(),
        output_dim: data.output_dim(),
        hidden_activation: Default::default(),
        output_head: head,
    }
}

pub fn run_trial(trial: &Trial<'_>) -> Result<TrialOutcome> {
    let seeds = TrialSeeds::derive(trial.seed);
    let spec = network_spec(&trial.data.train, trial.architecture);
    let mut net = Network::init(spec, &mut Rng::new(seeds.init))?;
    let init_hash = weights_hash(&net);
    let mut optimizer = Optimizer::new(trial.optimizer.clone(), &net)?;
    let cfg = TrainConfig {
        seed: seeds.shuffle,
        ..trial.train.clone()
    };
    let start = Instant::now();
    let log = train(&mut net, &mut optimizer, trial.data, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let diverged = log.stop_reason == StopReason::Diverged;
    // a diverged network may not even produce finite test predictions
    let metric = if diverged {
        None
    } else {
        Some(evaluate(&net, &trial.data.test)?.value()).filter(|v| v.is_finite())
    };
    Ok(TrialOutcome {
        result: TrialResult {
            architecture: trial.architecture.to_vec(),
            optimizer: trial.optimizer.label(),
            seed: trial.seed,
            metric_kind: match trial.data.train.task() {
                Task::Regression => "rmse".into(),
                Task::Classification => "accuracy".into(),
            },
            metric,
            epochs_run: log.epochs_run,
            best_epoch: log.best_epoch,
            stop_reason: log.stop_reason,
            init_hash,
            wall_time_s: Some(wall),
        },
        log,
        network: net,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets rayon decide.
    pub parallel: usize,
    /// Write each trial's loss curve here as `<arch>_<optimizer>_seed<k>.csv`.
    pub curves_dir: Option<PathBuf>,
    /// Resolves relative CSV dataset paths.
    pub base_dir: Option<PathBuf>,
}

pub fn curve_file_name(arch: &[usize], optimizer: &str, seed: u64) -> String {
    let arch = arch
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("-");
    format!("{arch}_{optimizer}_seed{seed}.csv")
}

/// Runs every (architecture, optimizer, trial) job and returns the results
/// ordered by architecture, optimizer (both in config order), then seed.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let dataset = cfg.dataset.load(opts.base_dir.as_deref())?;
    if dataset.task() == Task::Classification && dataset.n_classes() < 2 {
        return Err(Error::Data(
            "classification data needs at least two classes".into(),
        ));
    }
    if let Some(dir) = &opts.curves_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallel)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    pool.install(|| {
        let seeds: Vec<u64> = (0..cfg.trials as u64).map(|i| cfg.base_seed + i).collect();
        let splits: Vec<SplitDataset> = seeds
            .par_iter()
            .map(|&s| {
                split_standardize(&dataset, cfg.split_fractions(), TrialSeeds::derive(s).split)
            })
            .collect::<Result<_>>()?;

        let mut jobs = Vec::new();
        for (a, arch) in cfg.architectures.iter().enumerate() {
            for (o, opt) in cfg.optimizers.iter().enumerate() {
                for (t, &seed) in seeds.iter().enumerate() {
                    jobs.push((a, o, t, arch, opt, seed));
                }
            }
        }
        let mut results: Vec<((usize, usize, usize), TrialResult)> = jobs
            .par_iter()
            .map(|&(a, o, t, arch, opt, seed)| {
                let outcome = run_trial(&Trial {
                    data: &splits[t],
                    architecture: arch,
                    optimizer: opt,
                    train: &cfg.train,
                    seed,
                })?;
                if let Some(dir) = &opts.curves_dir {
                    outcome
                        .log
                        .write_csv(dir.join(curve_file_name(arch, &opt.label(), seed)))?;
                }
                Ok(((a, o, t), outcome.result))
            })
            .collect::<Result<_>>()?;
        results.sort_by_key(|(k, _)| *k);
        Ok(results.into_iter().map(|(_, r)| r).collect())
    })
}

/// Writes `trials.json` (deterministic fields only) and `timings.json`.
pub fn write_trials(dir: impl AsRef<Path>, trials: &[TrialResult]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stripped: Vec<TrialResult> = trials
        .iter()
        .cloned()
        .map(|mut t| {
            t.wall_time_s = None;
            t
        })
        .collect();
    let timings: Vec<Timing> = trials
        .iter()
        .map(|t| Timing {
            cell: t.cell_id(),
            seed: t.seed,
            wall_time_s: t.wall_time_s,
        })
        .collect();
    write_json(dir.join(TRIALS_FILE), &stripped)?;
    write_json(dir.join(TIMINGS_FILE), &timings)
}

pub const TRIALS_FILE: &str = "trials.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Timing {
    cell: String,
    seed: u64,
    wall_time_s: Option<f64>,
}

/// Reads a trials file and, when a `timings.json` sits next to it, merges the
/// wall-clock times back in.
pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<TrialResult>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut trials: Vec<TrialResult> = serde_json::from_str(&text)?;
    let timings_path = path.with_file_name(TIMINGS_FILE);
    if let Ok(text) = std::fs::read_to_string(&timings_path) {
        let timings: Vec<Timing> = serde_json::from_str(&text)?;
        for t in &mut trials {
            let id = t.cell_id();
            if let Some(hit) = timings.iter().find(|x| x.cell == id && x.seed == t.seed) {
                t.wall_time_s = hit.wall_time_s;
            }
        }
    }
    Ok(trials)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
