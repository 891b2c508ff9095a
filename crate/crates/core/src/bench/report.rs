//! Aggregation of trial results and comparison against a baseline optimizer.
//!
//! For every architecture the baseline cell is compared with each cell of the
//! same architecture, on the test metric, the wall time and the epoch count.
//! Improvement is expressed so that a positive number is better:
//!
//! - lower-is-better quantities (RMSE, time, epochs):
//!   `(baseline_mean - cell_mean) / baseline_mean × 100`
//! - accuracy: `(cell_mean - baseline_mean) / baseline_mean × 100`
//!
//! The t statistic follows the same orientation (positive means the cell is
//! better). Diverged trials are excluded from every statistic and counted
//! separately.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{architecture_label, write_json, TrialResult};
use super::stats::{mean, sample_std, significance_stars, welch_t_test};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub improvement_pct: f64,
    /// `None` when infinite (both samples constant with different means).
    pub t_stat: Option<f64>,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub architecture: Vec<usize>,
    pub optimizer: String,
    pub trials: usize,
    pub diverged: usize,
    pub metric: Option<Summary>,
    pub time: Option<Summary>,
    pub epochs: Option<Summary>,
    pub metric_vs_baseline: Option<Comparison>,
    pub time_vs_baseline: Option<Comparison>,
    pub epochs_vs_baseline: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Test used for every comparison.
    pub test: String,
    pub baseline: String,
    pub metric_kind: String,
    pub cells: Vec<CellReport>,
}

fn summarize(xs: &[f64]) -> Option<Summary> {
    match xs.len() {
        0 => None,
        1 => Some(Summary {
            mean: xs[0],
            std: 0.0,
        }),
        _ => Some(Summary {
            mean: mean(xs),
            std: sample_std(xs),
        }),
    }
}

/// `higher_better` flips both the improvement and the t orientation.
pub fn compare(baseline: &[f64], cell: &[f64], higher_better: bool) -> Option<Comparison> {
    if baseline.len() < 2 || cell.len() < 2 {
        return None;
    }
    let (mb, mc) = (mean(baseline), mean(cell));
    let improvement_pct = if higher_better {
        (mc - mb) / mb * 100.0
    } else {
        (mb - mc) / mb * 100.0
    };
    let test = if higher_better {
        welch_t_test(cell, baseline)
    } else {
        welch_t_test(baseline, cell)
    }
    .ok()?;
    Some(Comparison {
        improvement_pct: if improvement_pct.is_finite() {
            improvement_pct
        } else {
            0.0
        },
        t_stat: test.t.is_finite().then_some(test.t),
        p_value: test.p_value,
        stars: significance_stars(test.p_value).to_string(),
    })
}

pub fn build_report(trials: &[TrialResult], baseline: &str) -> Result<ComparisonReport> {
    let metric_kind = trials
        .first()
        .map(|t| t.metric_kind.clone())
        .ok_or_else(|| Error::Stats("no trials to report".into()))?;
    let higher_better = metric_kind == "accuracy";

    // cells in first-seen order
    let mut cells: Vec<(Vec<usize>, String)> = Vec::new();
    for t in trials {
        let key = (t.architecture.clone(), t.optimizer.clone());
        if !cells.contains(&key) {
            cells.push(key);
        }
    }

    let valid = |arch: &[usize], opt: &str| -> Vec<&TrialResult> {
        trials
            .iter()
            .filter(|t| t.architecture == arch && t.optimizer == opt && !t.diverged())
            .collect()
    };
    let metric_of = |ts: &[&TrialResult]| ts.iter().filter_map(|t| t.metric).collect::<Vec<_>>();
    let time_of = |ts: &[&TrialResult]| ts.iter().filter_map(|t| t.wall_time_s).collect::<Vec<_>>();
    let epochs_of =
        |ts: &[&TrialResult]| ts.iter().map(|t| t.epochs_run as f64).collect::<Vec<_>>();

    let mut out = Vec::with_capacity(cells.len());
    for (arch, opt) in &cells {
        if !cells.iter().any(|(a, o)| a == arch && o == baseline) {
            return Err(Error::Stats(format!(
                "baseline '{baseline}' missing for architecture {}",
                architecture_label(arch)
            )));
        }
        let all = trials
            .iter()
            .filter(|t| &t.architecture == arch && &t.optimizer == opt)
            .count();
        let cell = valid(arch, opt);
        let base = valid(arch, baseline);
        let (cm, bm) = (metric_of(&cell), metric_of(&base));
        let (ct, bt) = (time_of(&cell), time_of(&base));
        let (ce, be) = (epochs_of(&cell), epochs_of(&base));
        out.push(CellReport {
            architecture: arch.clone(),
            optimizer: opt.clone(),
            trials: all,
            diverged: all - cell.len(),
            metric: summarize(&cm),
            time: summarize(&ct),
            epochs: summarize(&ce),
            metric_vs_baseline: compare(&bm, &cm, higher_better),
            time_vs_baseline: compare(&bt, &ct, false),
            epochs_vs_baseline: compare(&be, &ce, false),
        });
    }
    Ok(ComparisonReport {
        test: "welch".into(),
        baseline: baseline.to_string(),
        metric_kind,
        cells: out,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "architecture,optimizer,trials,diverged,metric,metric_mean,metric_std,\
             time_mean,time_std,epochs_mean,epochs_std,\
             metric_improvement_pct,metric_t,metric_p,metric_stars,\
             time_improvement_pct,time_t,time_p,time_stars,\
             epochs_improvement_pct,epochs_t,epochs_p,epochs_stars\n",
        );
        for c in &self.cells {
            let summary = |x: &Option<Summary>| {
                format!(
                    "{},{}",
                    fmt_opt(x.as_ref().map(|s| s.mean)),
                    fmt_opt(x.as_ref().map(|s| s.std))
                )
            };
            let comparison = |x: &Option<Comparison>| match x {
                Some(c) => format!(
                    "{},{},{},{}",
                    c.improvement_pct,
                    fmt_opt(c.t_stat),
                    c.p_value,
                    c.stars
                ),
                None => ",,,".to_string(),
            };
            s.push_str(&format!(
                "\"{}\",{},{},{},{},{},{},{},{},{},{}\n",
                architecture_label(&c.architecture),
                c.optimizer,
                c.trials,
                c.diverged,
                self.metric_kind,
                summary(&c.metric),
                summary(&c.time),
                summary(&c.epochs),
                comparison(&c.metric_vs_baseline),
                comparison(&c.time_vs_baseline),
                comparison(&c.epochs_vs_baseline),
            ));
        }
        s
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<22} {:<24} {:>9} {:>8} {:>8} {:>9} {:>9} {:>10}  (welch t-test vs {})\n",
            "architecture",
            "optimizer",
            self.metric_kind,
            "std",
            "epochs",
            "improv%",
            "t",
            "p",
            self.baseline
        );
        for c in &self.cells {
            let (m, sd) = c
                .metric
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |x| (x.mean, x.std));
            let ep = c.epochs.as_ref().map_or(f64::NAN, |x| x.mean);
            let (imp, t, p) = match &c.metric_vs_baseline {
                Some(cmp) => (
                    format!("{:.2}", cmp.improvement_pct),
                    cmp.t_stat.map_or("inf".into(), |t| format!("{t:.2}")),
                    format!("{:.2e}{}", cmp.p_value, cmp.stars),
                ),
                None => ("-".into(), "-".into(), "-".into()),
            };
            s.push_str(&format!(
                "{:<22} {:<24} {:>9.4} {:>8.4} {:>8.1} {:>9} {:>9} {:>10}\n",
                architecture_label(&c.architecture),
                c.optimizer,
                m,
                sd,
                ep,
                imp,
                t,
                p
            ));
        }
        s
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(dir.join("report.json"), self)?;
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, self.to_csv()).map_err(|e| Error::io(&csv_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::StopReason;

    fn trial(opt: &str, seed: u64, metric: f64, epochs: usize, time: f64) -> TrialResult {
        TrialResult {
            architecture: vec![64, 32],
            optimizer: opt.into(),
            seed,
            metric_kind: "rmse".into(),
            metric: Some(metric),
            epochs_run: epochs,
            best_epoch: epochs,
            stop_reason: StopReason::EarlyStop,
            init_hash: String::new(),
            wall_time_s: Some(time),
        }
    }

    #[test]
    fn baseline_against_itself_is_zero() {
        let trials: Vec<_> = (0..4)
            .map(|i| {
                trial(
                    "adam",
                    i,
                    0.4 + 0.01 * i as f64,
                    10 + i as usize,
                    1.0 + i as f64,
                )
            })
            .collect();
        let r = build_report(&trials, "adam").unwrap();
        let c = r.cells[0].metric_vs_baseline.as_ref().unwrap();
        assert_eq!(c.improvement_pct, 0.0);
        assert_eq!(c.t_stat, Some(0.0));
        assert_eq!(c.p_value, 1.0);
        assert_eq!(c.stars, "");
    }

    #[test]
    fn improvement_formula() {
        // means 0.466 vs 0.446
        let mut trials = vec![
            trial("adam", 0, 0.465, 10, 1.0),
            trial("adam", 1, 0.467, 12, 1.0),
        ];
        trials.push(trial("caadam-multiplicative", 0, 0.445, 8, 1.0));
        trials.push(trial("caadam-multiplicative", 1, 0.447, 9, 1.0));
        let r = build_report(&trials, "adam").unwrap();
        let c = r.cells[1].metric_vs_baseline.as_ref().unwrap();
        let expected = (0.466 - 0.446) / 0.466 * 100.0;
        assert!((c.improvement_pct - expected).abs() < 1e-9);
        assert!((c.improvement_pct - 4.29).abs() < 5e-3);
        assert!(c.t_stat.unwrap() > 0.0);
    }

    #[test]
    fn accuracy_is_higher_better() {
        let mut b = trial("adam", 0, 0.80, 5, 1.0);
        b.metric_kind = "accuracy".into();
        let mut b2 = trial("adam", 1, 0.82, 5, 1.0);
        b2.metric_kind = "accuracy".into();
        let mut c = trial("x", 0, 0.90, 5, 1.0);
        c.metric_kind = "accuracy".into();
        let mut c2 = trial("x", 1, 0.92, 5, 1.0);
        c2.metric_kind = "accuracy".into();
        let r = build_report(&[b, b2, c, c2], "adam").unwrap();
        let cmp = r.cells[1].metric_vs_baseline.as_ref().unwrap();
        assert!((cmp.improvement_pct - (0.91 - 0.81) / 0.81 * 100.0).abs() < 1e-9);
        assert!(cmp.t_stat.unwrap() > 0.0);
    }

    #[test]
    fn missing_baseline() {
        let trials = vec![
            trial("nadam", 0, 0.4, 1, 1.0),
            trial("nadam", 1, 0.5, 1, 1.0),
        ];
        assert!(matches!(
            build_report(&trials, "adam"),
            Err(Error::Stats(_))
        ));
    }

    #[test]
    fn diverged_trials_are_excluded() {
        let mut bad = trial("nadam", 2, 0.0, 3, 1.0);
        bad.metric = None;
        bad.stop_reason = StopReason::Diverged;
        let trials = vec![
            trial("adam", 0, 0.4, 1, 1.0),
            trial("adam", 1, 0.5, 1, 1.0),
            trial("nadam", 0, 0.3, 1, 1.0),
            trial("nadam", 1, 0.5, 1, 1.0),
            bad,
        ];
        let r = build_report(&trials, "adam").unwrap();
        assert_eq!(r.cells[1].trials, 3);
        assert_eq!(r.cells[1].diverged, 1);
        assert!((r.cells[1].metric.as_ref().unwrap().mean - 0.4).abs() < 1e-15);
        assert!(r.to_csv().lines().count() == 3);
    }
}
