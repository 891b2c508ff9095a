//! Structural statistics of a dense layer chain.
//!
//! A layer's connection count is the number of weight edges between its input
//! and output neurons, `fan_in × fan_out`. Biases are not counted. Depth is the
//! zero-based position of the layer in forward order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub index: usize,
    pub connections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSummary {
    pub layers: Vec<LayerInfo>,
    pub c_min: u64,
    pub c_max: u64,
    pub c_median: f64,
    /// Number of trainable layers.
    pub total_depth: usize,
}

impl ArchitectureSummary {
    /// Builds the summary from per-layer connection counts in forward order.
    pub fn from_connections(connections: &[u64]) -> Result<Self> {
        if connections.is_empty() {
            return Err(Error::Structure("network has no trainable layers".into()));
        }
        if connections.contains(&0) {
            return Err(Error::Structure("layer with zero connections".into()));
        }
        let mut sorted = connections.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let c_median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
        };
        Ok(ArchitectureSummary {
            layers: connections
                .iter()
                .enumerate()
                .map(|(index, &connections)| LayerInfo { index, connections })
                .collect(),
            c_min: sorted[0],
            c_max: sorted[n - 1],
            c_median,
            total_depth: n,
        })
    }

    pub fn connections(&self) -> Vec<u64> {
        self.layers.iter().map(|l| l.connections).collect()
    }
}

pub fn summarize(net: &Network) -> Result<ArchitectureSummary> {
    let connections: Vec<u64> = net
        .layers
        .iter()
        .map(|l| (l.fan_in() * l.fan_out()) as u64)
        .collect();
    ArchitectureSummary::from_connections(&connections)
}
