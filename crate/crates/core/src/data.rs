//! Datasets: CSV ingestion, seeded splits with train-only standardisation, and
//! synthetic generators.
//!
//! # Synthetic regression target
//!
//! Features are drawn i.i.d. from `U(-1, 1)`. With `x_j` the `j`-th feature and
//! indices taken modulo the feature count `m`, the noiseless target is
//!
//! ```text
//! f(x) = 2 + sin(π x₀) + x₁² + 0.5·x₂·x₃ + 0.8·tanh(2 x₄) + Σ_{j≥5} x_j / (j + 1)
//! ```
//!
//! and the returned target is `f(x) + noise_std · N(0, 1)`.
//!
//! # Synthetic classification
//!
//! `k` Gaussian blobs. Centres are drawn from `U(-3, 3)^m`; each row picks a
//! class uniformly and adds `spread · N(0, 1)` noise per feature.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::nn::Targets;

/// Floor on a feature's standard deviation during standardisation.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Targets,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, targets: Targets, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        if targets.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                features.rows(),
                targets.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Data(
                "feature name count differs from column count".into(),
            ));
        }
        Ok(Dataset {
            features,
            targets,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Values(_) => Task::Regression,
            Targets::Classes(_) => Task::Classification,
        }
    }

    /// Number of classes (max index + 1); 0 for regression.
    pub fn n_classes(&self) -> usize {
        match &self.targets {
            Targets::Classes(c) => c.iter().max().map_or(0, |m| m + 1),
            Targets::Values(_) => 0,
        }
    }

    /// Width of the network output this dataset needs.
    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Values(v) => v.cols(),
            Targets::Classes(_) => self.n_classes(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            targets: self.targets.select_rows(indices),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Which column holds the target, and how to read it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub target: String,
    pub task: Task,
}

/// Reads a headed, comma-separated file. Every non-target column is a feature.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_col = headers
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| Error::Data(format!("target column '{}' not in header", schema.target)))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_col)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut values = Vec::new();
    let mut classes = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    Error::Data(format!(
                        "row {row}, column '{}': cannot parse '{cell}' as a number",
                        headers[c]
                    ))
                })?;
            if c != target_col {
                features.push(value);
                continue;
            }
            match schema.task {
                Task::Regression => values.push(value),
                Task::Classification => {
                    if value < 0.0 || value.fract() != 0.0 {
                        return Err(Error::Data(format!(
                            "row {row}, column '{}': class label '{cell}' is not a non-negative integer",
                            headers[c]
                        )));
                    }
                    classes.push(value as usize);
                }
            }
        }
        rows += 1;
    }
    let features = Matrix::new(rows, feature_names.len(), features)?;
    let targets = match schema.task {
        Task::Regression => Targets::Values(Matrix::new(rows, 1, values)?),
        Task::Classification => Targets::Classes(classes),
    };
    Dataset::new(features, targets, feature_names)
}

/// Writes `ds` with its features followed by a target column named `target`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, target: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.feature_names.clone();
    header.push(target.to_string());
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds
            .features
            .row(r)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        rec.push(match &ds.targets {
            Targets::Values(v) => format!("{:?}", v.get(r, 0)),
            Targets::Classes(c) => c[r].to_string(),
        });
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Per-feature mean and standard deviation of the training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(features: &Matrix) -> Self {
        let n = features.rows() as f64;
        let mean: Vec<f64> = features.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; features.cols()];
        for r in 0..features.rows() {
            for (c, v) in features.row(r).iter().enumerate() {
                var[c] += (v - mean[c]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / n).sqrt().max(STD_FLOOR))
            .collect();
        Standardization { mean, std }
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.mean.len() {
            return Err(Error::Shape("standardisation width mismatch".into()));
        }
        let mut out = features.clone();
        let cols = features.cols();
        for row in out.as_mut_slice().chunks_exact_mut(cols) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        out.ensure_finite("standardised features")?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub standardization: Standardization,
    /// Source row indices of each partition, in partition order.
    pub indices: [Vec<usize>; 3],
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.64, 0.16, 0.20);

/// Partition sizes: train and validation get `floor(n·f)`, test the rest.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to 1: {fractions:?}"
        )));
    }
    // the epsilon absorbs representation error such as 0.7 * 10 = 6.999…
    let floor = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
    let train = floor(a);
    let val = floor(b);
    let test = n.saturating_sub(train + val);
    if train == 0 || val == 0 || test == 0 {
        return Err(Error::Data(format!(
            "split of {n} rows by {fractions:?} leaves an empty partition ({train}/{val}/{test})"
        )));
    }
    Ok((train, val, test))
}

/// Seeded shuffle, contiguous partition, then standardise all three parts with
/// statistics from the training part. Regression targets are left unscaled.
pub fn split_standardize(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitDataset> {
    let (n_train, n_val, _) = split_sizes(ds.len(), fractions)?;
    let order = Rng::new(seed).permutation(ds.len());
    let train_idx = order[..n_train].to_vec();
    let val_idx = order[n_train..n_train + n_val].to_vec();
    let test_idx = order[n_train + n_val..].to_vec();

    let mut train = ds.subset(&train_idx);
    let mut validation = ds.subset(&val_idx);
    let mut test = ds.subset(&test_idx);
    let standardization = Standardization::fit(&train.features);
    train.features = standardization.apply(&train.features)?;
    validation.features = standardization.apply(&validation.features)?;
    test.features = standardization.apply(&test.features)?;
    Ok(SplitDataset {
        train,
        validation,
        test,
        standardization,
        indices: [train_idx, val_idx, test_idx],
    })
}

/// Noiseless synthetic regression target for one feature row.
pub fn synth_target(x: &[f64]) -> f64 {
    let m = x.len();
    let at = |j: usize| x[j % m];
    let mut y = 2.0
        + (std::f64::consts::PI * at(0)).sin()
        + at(1) * at(1)
        + 0.5 * at(2) * at(3)
        + 0.8 * (2.0 * at(4)).tanh();
    for (j, v) in x.iter().enumerate().skip(5) {
        y += v / (j as f64 + 1.0);
    }
    y
}

pub fn synth_regression(n: usize, m: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || m == 0 || !(noise_std >= 0.0) {
        return Err(Error::Config(format!(
            "synth_regression needs n, m >= 1 and noise_std >= 0 (got {n}, {m}, {noise_std})"
        )));
    }
    let mut rng = Rng::new(seed);
    let features: Vec<f64> = (0..n * m).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let features = Matrix::new(n, m, features)?;
    let targets: Vec<f64> = (0..n)
        .map(|r| {
            let noise = if noise_std > 0.0 {
                noise_std * rng.standard_normal()
            } else {
                0.0
            };
            synth_target(features.row(r)) + noise
        })
        .collect();
    Dataset::new(
        features,
        Targets::Values(Matrix::new(n, 1, targets)?),
        (0..m).map(|j| format!("x{j}")).collect(),
    )
}

pub fn synth_classification(
    n: usize,
    m: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || m == 0 || classes < 2 || !(spread > 0.0) {
        return Err(Error::Config(format!(
            "synth_classification needs n, m >= 1, classes >= 2, spread > 0 (got {n}, {m}, {classes}, {spread})"
        )));
    }
    let mut rng = Rng::new(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..m).map(|_| rng.uniform_range(-3.0, 3.0)).collect())
        .collect();
    let mut features = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.below(classes);
        for c in &centres[k] {
            features.push(c + spread * rng.standard_normal());
        }
        labels.push(k);
    }
    Dataset::new(
        Matrix::new(n, m, features)?,
        Targets::Classes(labels),
        (0..m).map(|j| format!("x{j}")).collect(),
    )
}

/// Checks that no source row lands in two partitions, by hashing row contents.
pub fn partitions_disjoint(split: &SplitDataset, source: &Dataset) -> bool {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (p, idx) in split.indices.iter().enumerate() {
        for &i in idx {
            let key: Vec<u64> = source.features.row(i).iter().map(|v| v.to_bits()).collect();
            if let Some(&other) = seen.get(&key) {
                if other != p {
                    return false;
                }
            }
            seen.insert(key, p);
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema() -> CsvSchema {
        CsvSchema {
            target: "y".into(),
            task: Task::Regression,
        }
    }

    #[test]
    fn loads_small_csv() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8.5,9\n");
        let ds = load_csv(f.path(), &schema()).unwrap();
        assert_eq!((ds.len(), ds.n_features()), (3, 2));
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.features.row(2), &[7.0, 8.5]);
        assert_eq!(
            ds.targets,
            Targets::Values(Matrix::new(3, 1, vec![3.0, 6.0, 9.0]).unwrap())
        );
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let f = write_tmp("a,b,y\n1,2,3\n4,abc,6\n");
        let err = load_csv(f.path(), &schema()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(err.contains("'b'"), "{err}");
    }

    #[test]
    fn missing_target_and_file() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(load_csv(f.path(), &schema()), Err(Error::Data(_))));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &schema()),
            Err(Error::Io { .. })
        ));
        let f = write_tmp("a,y\n1,2.5\n");
        let cls = CsvSchema {
            target: "y".into(),
            task: Task::Classification,
        };
        assert!(matches!(load_csv(f.path(), &cls), Err(Error::Data(_))));
    }

    #[test]
    fn csv_round_trip() {
        let ds = synth_regression(40, 3, 0.1, 5).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path(), "y").unwrap();
        let back = load_csv(f.path(), &schema()).unwrap();
        for (a, b) in ds.features.as_slice().iter().zip(back.features.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(ds.targets, back.targets);
    }

    #[test]
    fn split_sizes_floor_then_remainder() {
        assert_eq!(split_sizes(10, (0.8, 0.1, 0.1)).unwrap(), (8, 1, 1));
        assert_eq!(split_sizes(100, DEFAULT_SPLIT).unwrap(), (64, 16, 20));
        assert!(split_sizes(3, (0.8, 0.1, 0.1)).is_err());
        assert!(split_sizes(10, (0.5, 0.5, 0.1)).is_err());
    }

    #[test]
    fn split_standardizes_on_train_only() {
        let ds = synth_regression(200, 4, 0.0, 1).unwrap();
        let split = split_standardize(&ds, DEFAULT_SPLIT, 9).unwrap();
        let stats = Standardization::fit(&split.train.features);
        for c in 0..4 {
            assert!(stats.mean[c].abs() < 1e-10);
            assert!((stats.std[c] - 1.0).abs() < 1e-10);
        }
        // the stored record is the raw train statistic, not the post-scaling one
        let raw = Standardization::fit(&ds.subset(&split.indices[0]).features);
        assert_eq!(raw, split.standardization);
        assert!(partitions_disjoint(&split, &ds));
        let mut all: Vec<usize> = split.indices.concat();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        // regression targets are untouched
        assert_eq!(split.train.targets, ds.subset(&split.indices[0]).targets);
    }

    #[test]
    fn split_is_deterministic() {
        let ds = synth_regression(50, 2, 0.1, 1).unwrap();
        let a = split_standardize(&ds, DEFAULT_SPLIT, 3).unwrap();
        let b = split_standardize(&ds, DEFAULT_SPLIT, 3).unwrap();
        assert_eq!(a, b);
        let c = split_standardize(&ds, DEFAULT_SPLIT, 4).unwrap();
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn constant_feature_uses_std_floor() {
        let features = Matrix::new(10, 1, vec![3.0; 10]).unwrap();
        let s = Standardization::fit(&features);
        assert_eq!(s.std, vec![STD_FLOOR]);
        assert!(s
            .apply(&features)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_synth_matches_function() {
        let ds = synth_regression(100, 8, 0.0, 2).unwrap();
        let Targets::Values(y) = &ds.targets else {
            panic!()
        };
        for r in 0..100 {
            assert_eq!(y.get(r, 0), synth_target(ds.features.row(r)));
        }
        let ds = synth_regression(1000, 8, 0.1, 2).unwrap();
        assert_eq!(ds.features.shape(), (1000, 8));
        assert_eq!(ds.output_dim(), 1);
    }

    #[test]
    fn synth_seeds_differ_with_same_ranges() {
        let mut firsts = Vec::new();
        for seed in 0..10 {
            let ds = synth_regression(500, 3, 0.0, seed).unwrap();
            let v = ds.features.as_slice();
            assert!(v.iter().all(|&x| (-1.0..1.0).contains(&x)));
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo < -0.95 && hi > 0.95);
            firsts.push(v[0].to_bits());
        }
        firsts.sort_unstable();
        firsts.dedup();
        assert_eq!(firsts.len(), 10);
    }

    #[test]
    fn synth_classification_shapes() {
        let ds = synth_classification(300, 4, 5, 0.5, 1).unwrap();
        assert_eq!(ds.task(), Task::Classification);
        assert_eq!(ds.n_classes(), 5);
        assert_eq!(ds.features.shape(), (300, 4));
        assert!(synth_classification(10, 2, 1, 0.5, 1).is_err());
    }
}
