//! Dense feed-forward networks.
//!
//! Layers compute `z = x·W + b` with `W` stored `fan_in × fan_out`. Hidden
//! layers apply ReLU; the output layer is linear and its raw values are the
//! prediction (regression) or the logits (classification).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{glorot_uniform, Matrix, Rng};

/// Lower bound on a softmax probability before taking its log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    #[default]
    LinearRegression,
    SoftmaxClassification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
    #[serde(default)]
    pub output_head: OutputHead,
}

impl NetworkSpec {
    pub fn regression(input_dim: usize, hidden_sizes: &[usize]) -> Self {
        NetworkSpec {
            input_dim,
            hidden_sizes: hidden_sizes.to_vec(),
            output_dim: 1,
            hidden_activation: HiddenActivation::Relu,
            output_head: OutputHead::LinearRegression,
        }
    }

    pub fn classification(input_dim: usize, hidden_sizes: &[usize], classes: usize) -> Self {
        NetworkSpec {
            input_dim,
            hidden_sizes: hidden_sizes.to_vec(),
            output_dim: classes,
            hidden_activation: HiddenActivation::Relu,
            output_head: OutputHead::SoftmaxClassification,
        }
    }

    /// `(fan_in, fan_out)` of every trainable layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::Structure(format!(
                "all layer sizes must be >= 1: {} -> {:?} -> {}",
                self.input_dim, self.hidden_sizes, self.output_dim
            )));
        }
        Ok(())
    }
}

/// Parameters of one dense layer. The same shape doubles as a gradient or an
/// update for that layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.weights.shape() == other.weights.shape() && self.bias.len() == other.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
}

/// Per-layer gradients (or updates) congruent with a [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub layers: Vec<Dense>,
}

/// Supervision for a batch: real-valued targets or class indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(Matrix),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(m) => m.rows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select_rows(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Values(m) => Targets::Values(m.select_rows(indices)),
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Activations recorded by [`Network::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input seen by each layer (the batch, then each hidden activation).
    inputs: Vec<Matrix>,
    /// Pre-activation `x·W + b` of each layer.
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn inputs(&self) -> &[Matrix] {
        &self.inputs
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                Ok(Dense {
                    weights: glorot_uniform(rng, fan_in, fan_out)?,
                    bias: vec![0.0; fan_out],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network { spec, layers })
    }

    /// Builds a network from explicit layers, checking they chain.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len()
            || shapes
                .iter()
                .zip(&layers)
                .any(|(&(i, o), l)| l.weights.shape() != (i, o) || l.bias.len() != o)
        {
            return Err(Error::Shape("layers do not match the network spec".into()));
        }
        Ok(Network { spec, layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn zeros_like(&self) -> GradientSet {
        GradientSet {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.spec.input_dim
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = x.matmul(&layer.weights)?;
            z.add_row_broadcast(&layer.bias);
            z.ensure_finite("forward activation")?;
            let next = if i == last {
                z.clone()
            } else {
                z.map(|v| v.max(0.0))?
            };
            inputs.push(x);
            pre_activations.push(z);
            x = next;
        }
        Ok((
            x,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward(batch).map(|(p, _)| p)
    }

    pub fn backward(&self, cache: &ForwardCache, targets: &Targets) -> Result<GradientSet> {
        if cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(x, l)| x.cols() != l.fan_in())
        {
            return Err(Error::Shape(
                "forward cache does not match this network".into(),
            ));
        }
        let prediction = cache
            .pre_activations
            .last()
            .ok_or_else(|| Error::Shape("empty forward cache".into()))?;
        let mut delta = output_gradient(prediction, targets, self.spec.output_head)?;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let weights = cache.inputs[i].t_matmul(&delta)?;
            let bias = delta.column_sums();
            if i > 0 {
                let mut upstream = delta.matmul_t(&self.layers[i].weights)?;
                for (g, &z) in upstream
                    .as_mut_slice()
                    .iter_mut()
                    .zip(cache.pre_activations[i - 1].as_slice())
                {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok(GradientSet { layers: grads })
    }

    /// Adds `delta` to every parameter.
    pub fn apply_update(&mut self, delta: &GradientSet) -> Result<()> {
        self.check_congruent(delta)?;
        for (layer, d) in self.layers.iter_mut().zip(&delta.layers) {
            for (w, dw) in layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(d.weights.as_slice())
            {
                *w += dw;
            }
            for (b, db) in layer.bias.iter_mut().zip(&d.bias) {
                *b += db;
            }
        }
        if self
            .layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
        {
            Ok(())
        } else {
            Err(Error::NonFinite("parameters after update".into()))
        }
    }

    pub fn check_congruent(&self, grads: &GradientSet) -> Result<()> {
        if grads.layers.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(&grads.layers)
                .any(|(a, b)| !a.same_shape(b))
        {
            return Err(Error::Shape("gradient set does not match network".into()));
        }
        Ok(())
    }
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute entry across all tensors.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias))
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

fn check_targets(prediction: &Matrix, targets: &Targets, head: OutputHead) -> Result<()> {
    if targets.len() != prediction.rows() {
        return Err(Error::Shape(format!(
            "{} targets for {} predictions",
            targets.len(),
            prediction.rows()
        )));
    }
    match (head, targets) {
        (OutputHead::LinearRegression, Targets::Values(y)) => {
            if y.shape() != prediction.shape() {
                return Err(Error::Shape(format!(
                    "targets {:?} vs predictions {:?}",
                    y.shape(),
                    prediction.shape()
                )));
            }
        }
        (OutputHead::SoftmaxClassification, Targets::Classes(c)) => {
            if let Some(&bad) = c.iter().find(|&&k| k >= prediction.cols()) {
                return Err(Error::Data(format!(
                    "class index {bad} out of range for {} classes",
                    prediction.cols()
                )));
            }
        }
        _ => {
            return Err(Error::Shape(
                "target kind does not match the output head".into(),
            ))
        }
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let cols = logits.cols();
    for row in out.as_mut_slice().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Mean squared error over all elements, or mean sparse cross-entropy over rows.
pub fn loss(prediction: &Matrix, targets: &Targets, head: OutputHead) -> Result<f64> {
    check_targets(prediction, targets, head)?;
    let value = match targets {
        Targets::Values(y) => {
            let n = prediction.as_slice().len() as f64;
            prediction
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n
        }
        Targets::Classes(c) => {
            let probs = softmax(prediction);
            c.iter()
                .enumerate()
                .map(|(r, &k)| -probs.get(r, k).max(PROBABILITY_FLOOR).ln())
                .sum::<f64>()
                / c.len() as f64
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite("loss".into()))
    }
}

/// dL/d(output pre-activation) for the batch-mean loss.
fn output_gradient(prediction: &Matrix, targets: &Targets, head: OutputHead) -> Result<Matrix> {
    check_targets(prediction, targets, head)?;
    match targets {
        Targets::Values(y) => {
            let scale = 2.0 / prediction.as_slice().len() as f64;
            prediction.sub(y)?.map(|d| d * scale)
        }
        Targets::Classes(c) => {
            let mut g = softmax(prediction);
            let rows = c.len() as f64;
            for (r, &k) in c.iter().enumerate() {
                g.set(r, k, g.get(r, k) - 1.0);
            }
            g.map(|v| v / rows)
        }
    }
}
