//! Per-layer update scale factors for the connection-aware optimizers.
//!
//! Each strategy maps an [`ArchitectureSummary`] to a [`ScaleTable`] holding
//! one positive factor per trainable layer. The optimizer multiplies that
//! layer's Adam step (weights and bias) by the factor.
//!
//! The MinMaxMedian strategies place a layer's connection count `c` relative to
//! the network median `c̃`: layers at or below the median get factors above 1,
//! layers above it get factors below 1. When a branch's normaliser vanishes
//! (`c̃ == c_min` or `c̃ == c_max`) the factor falls back to 1.

use serde::{Deserialize, Serialize};

use crate::arch::ArchitectureSummary;
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    AdditiveMinmaxmedian,
    MultiplicativeMinmaxmedian,
    DepthBased,
}

impl ScalingKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ScalingKind::AdditiveMinmaxmedian => "additive",
            ScalingKind::MultiplicativeMinmaxmedian => "multiplicative",
            ScalingKind::DepthBased => "depth",
        }
    }
}

/// Sign convention for the normalised position `σ` in the multiplicative rule.
///
/// `Signed` makes `σ` negative at or below the median so that `γ^σ > 1` there,
/// mirroring the additive rule. `Unsigned` keeps `σ ≥ 0` on both sides, which
/// shrinks updates for small and large layers alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSign {
    #[default]
    Signed,
    Unsigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingStrategy {
    pub kind: ScalingKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub multiplicative_sigma: SigmaSign,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl ScalingStrategy {
    pub fn new(kind: ScalingKind) -> Self {
        ScalingStrategy {
            kind,
            gamma: DEFAULT_GAMMA,
            multiplicative_sigma: SigmaSign::Signed,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ScalingKind::DepthBased => self.gamma > -1.0 && self.gamma.is_finite(),
            _ => self.gamma > 0.0 && self.gamma < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "gamma {} out of range for {:?} scaling",
                self.gamma, self.kind
            )))
        }
    }

    pub fn table(&self, summary: &ArchitectureSummary) -> Result<ScaleTable> {
        self.validate()?;
        match self.kind {
            ScalingKind::AdditiveMinmaxmedian => scale_additive(summary, self.gamma),
            ScalingKind::MultiplicativeMinmaxmedian => {
                scale_multiplicative(summary, self.gamma, self.multiplicative_sigma)
            }
            ScalingKind::DepthBased => scale_depth(summary, self.gamma),
        }
    }
}

/// One scale factor per trainable layer, in forward order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTable(Vec<f64>);

impl ScaleTable {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!(
                "scale factors must be positive and finite: {factors:?}"
            )));
        }
        Ok(ScaleTable(factors))
    }

    pub fn ones(layers: usize) -> Self {
        ScaleTable(vec![1.0; layers])
    }

    pub fn factors(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, layer: usize) -> f64 {
        self.0[layer]
    }
}

fn check_minmax_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("gamma {gamma} must lie in (0, 1)")))
    }
}

/// Signed position of `c` relative to the median, in `[-1, 1]`.
/// Negative at or below the median, positive above; 0 on a degenerate branch.
fn median_position(summary: &ArchitectureSummary, c: u64) -> f64 {
    let c = c as f64;
    let median = summary.c_median;
    if c <= median {
        let span = median - summary.c_min as f64;
        if span == 0.0 {
            0.0
        } else {
            -(median - c) / span
        }
    } else {
        let span = summary.c_max as f64 - median;
        if span == 0.0 {
            0.0
        } else {
            (c - median) / span
        }
    }
}

pub fn scale_additive(summary: &ArchitectureSummary, gamma: f64) -> Result<ScaleTable> {
    check_minmax_gamma(gamma)?;
    ScaleTable::new(
        summary
            .layers
            .iter()
            .map(|l| 1.0 - gamma * median_position(summary, l.connections))
            .collect(),
    )
}

pub fn scale_multiplicative(
    summary: &ArchitectureSummary,
    gamma: f64,
    sign: SigmaSign,
) -> Result<ScaleTable> {
    check_minmax_gamma(gamma)?;
    let log_gamma = gamma.ln();
    ScaleTable::new(
        summary
            .layers
            .iter()
            .map(|l| {
                let sigma = match sign {
                    SigmaSign::Signed => median_position(summary, l.connections),
                    SigmaSign::Unsigned => median_position(summary, l.connections).abs(),
                };
                (sigma * log_gamma).exp()
            })
            .collect(),
    )
}

pub fn scale_depth(summary: &ArchitectureSummary, gamma: f64) -> Result<ScaleTable> {
    if !(gamma > -1.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma {gamma} must exceed -1")));
    }
    let depth = summary.total_depth as f64;
    ScaleTable::new(
        summary
            .layers
            .iter()
            .map(|l| (1.0 + gamma).powf((depth - (1.0 + l.index as f64)) / depth))
            .collect(),
    )
}
