//! Mini-batch training with early stopping and reduce-on-plateau.
//!
//! Both callbacks watch the validation loss after every epoch and count an
//! epoch as an improvement only when `loss < best - min_delta`. Their patience
//! counters are independent. Training ends when early stopping fires, when the
//! epoch budget runs out, or when a loss or update turns non-finite; in every
//! case the network is left holding the weights of the best validation epoch.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitDataset, Task};
use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::nn::{loss, Dense, Network, OutputHead, Targets};
use crate::optim::Optimizer;

fn default_batch_size() -> usize {
    64
}
fn default_max_epochs() -> usize {
    1000
}
fn default_es_patience() -> usize {
    15
}
fn default_min_delta() -> f64 {
    1e-5
}
fn default_factor() -> f64 {
    0.25
}
fn default_lr_patience() -> usize {
    6
}
fn default_min_lr() -> f64 {
    2.5e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_es_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "default_min_delta")]
    pub early_stop_min_delta: f64,
    #[serde(default = "default_factor")]
    pub lr_reduce_factor: f64,
    #[serde(default = "default_lr_patience")]
    pub lr_reduce_patience: usize,
    #[serde(default = "default_min_lr")]
    pub min_lr: f64,
    /// Starting learning rate; falls back to the optimizer's own when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_lr: Option<f64>,
    /// Seeds the per-epoch shuffles.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            early_stop_patience: default_es_patience(),
            early_stop_min_delta: default_min_delta(),
            lr_reduce_factor: default_factor(),
            lr_reduce_patience: default_lr_patience(),
            min_lr: default_min_lr(),
            initial_lr: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return fail("batch_size and max_epochs must be >= 1");
        }
        if self.early_stop_patience == 0 || self.lr_reduce_patience == 0 {
            return fail("patiences must be >= 1");
        }
        if !(self.lr_reduce_factor > 0.0 && self.lr_reduce_factor < 1.0) {
            return fail("lr_reduce_factor must lie in (0, 1)");
        }
        if !(self.min_lr > 0.0) || !(self.early_stop_min_delta >= 0.0) {
            return fail("min_lr must be positive and min_delta non-negative");
        }
        if let Some(lr) = self.initial_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail("initial_lr must be positive");
            }
        }
        Ok(())
    }
}

/// Patience counter over validation losses.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    wait: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> Observation {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.wait = 0;
            return Observation {
                improved: true,
                stop: false,
            };
        }
        self.wait += 1;
        Observation {
            improved: false,
            stop: self.wait >= self.patience,
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// improvement, never going below `min_lr`. The counter restarts after each
/// reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceOnPlateau {
    factor: f64,
    patience: usize,
    min_delta: f64,
    min_lr: f64,
    best: f64,
    wait: usize,
    lr: f64,
}

impl ReduceOnPlateau {
    pub fn new(initial_lr: f64, factor: f64, patience: usize, min_delta: f64, min_lr: f64) -> Self {
        ReduceOnPlateau {
            factor,
            patience,
            min_delta,
            min_lr,
            best: f64::INFINITY,
            wait: 0,
            lr: initial_lr.max(min_lr),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation loss and returns the learning rate for the
    /// next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                if self.lr > self.min_lr {
                    self.lr = (self.lr * self.factor).max(self.min_lr);
                }
                self.wait = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Seconds since training started, at the end of this epoch.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub epochs_run: usize,
    /// 1-based epoch whose weights the network holds; 0 if none qualified.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_time_s: f64,
}

impl TrainLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                r.epoch, r.train_loss, r.val_loss, r.lr
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// The log without timing, for bit-level reproducibility comparisons.
    pub fn without_timing(&self) -> TrainLog {
        let mut log = self.clone();
        log.wall_time_s = 0.0;
        for r in &mut log.epochs {
            r.wall_time_s = 0.0;
        }
        log
    }
}

fn dataset_loss(net: &Network, ds: &Dataset) -> Result<f64> {
    let pred = net.predict(&ds.features)?;
    loss(&pred, &ds.targets, net.spec.output_head)
}

/// Runs the full protocol on `data.train`, monitoring `data.validation`.
/// `net` ends up holding the best-validation weights.
pub fn train(
    net: &mut Network,
    optimizer: &mut Optimizer,
    data: &SplitDataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let n = data.train.len();
    if cfg.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} exceeds {} training rows",
            cfg.batch_size, n
        )));
    }
    if data.validation.is_empty() {
        return Err(Error::Data("validation partition is empty".into()));
    }
    let initial_lr = cfg.initial_lr.unwrap_or(optimizer.config().learning_rate);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience, cfg.early_stop_min_delta);
    let mut scheduler = ReduceOnPlateau::new(
        initial_lr,
        cfg.lr_reduce_factor,
        cfg.lr_reduce_patience,
        cfg.early_stop_min_delta,
        cfg.min_lr,
    );
    let mut shuffle = Rng::new(cfg.seed);
    let start = Instant::now();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<Dense>)> = None;
    let mut stop_reason = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let lr = scheduler.lr();
        let order = shuffle.permutation(n);
        for batch in order.chunks(cfg.batch_size) {
            let x = data.train.features.select_rows(batch);
            let y = data.train.targets.select_rows(batch);
            let outcome = net
                .forward(&x)
                .and_then(|(_, cache)| net.backward(&cache, &y))
                .and_then(|grads| optimizer.step(net, &grads, lr));
            match outcome {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    stop_reason = StopReason::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }

        let losses = dataset_loss(net, &data.train)
            .and_then(|t| dataset_loss(net, &data.validation).map(|v| (t, v)));
        let (train_loss, val_loss) = match losses {
            Ok(pair) => pair,
            Err(Error::NonFinite(_)) => {
                stop_reason = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            wall_time_s: start.elapsed().as_secs_f64(),
        });

        let seen = stopper.observe(val_loss);
        if seen.improved {
            best = Some((epoch, val_loss, net.layers.clone()));
        }
        if seen.stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        scheduler.observe(val_loss);
    }

    let (best_epoch, best_val_loss) = match best {
        Some((epoch, loss, layers)) => {
            net.layers = layers;
            (epoch, loss)
        }
        None => (0, f64::INFINITY),
    };
    Ok(TrainLog {
        epochs_run: epochs.len(),
        epochs,
        stop_reason,
        best_epoch,
        best_val_loss,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Metric {
    Rmse(f64),
    Accuracy(f64),
}

impl Metric {
    pub fn value(self) -> f64 {
        match self {
            Metric::Rmse(v) | Metric::Accuracy(v) => v,
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy(_))
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// RMSE of the predictions against the targets.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> f64 {
    let n = predictions.len() as f64;
    (predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (y - p) * (y - p))
        .sum::<f64>()
        / n)
        .sqrt()
}

pub fn evaluate(net: &Network, data: &Dataset) -> Result<Metric> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let pred = net.predict(&data.features)?;
    match (&data.targets, net.spec.output_head) {
        (Targets::Values(y), OutputHead::LinearRegression) => {
            if y.shape() != pred.shape() {
                return Err(Error::Shape("targets do not match predictions".into()));
            }
            Ok(Metric::Rmse(rmse(pred.as_slice(), y.as_slice())))
        }
        (Targets::Classes(c), OutputHead::SoftmaxClassification) => {
            let correct = c
                .iter()
                .enumerate()
                .filter(|&(r, &k)| argmax(pred.row(r)) == k)
                .count();
            Ok(Metric::Accuracy(correct as f64 / c.len() as f64))
        }
        _ => Err(Error::Shape(
            "dataset task does not match the output head".into(),
        )),
    }
}

pub fn task_head(task: Task) -> OutputHead {
    match task {
        Task::Regression => OutputHead::LinearRegression,
        Task::Classification => OutputHead::SoftmaxClassification,
    }
}
