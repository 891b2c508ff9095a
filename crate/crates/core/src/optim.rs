//! Optimizers.
//!
//! Every algorithm shares one contract: [`Optimizer::step`] takes the network,
//! its gradients for the current batch and the learning rate chosen by the
//! schedule, advances the step counter and the accumulators, and moves the
//! parameters. Accumulators start at zero and are allocated on the first step
//! with the shape of the gradients.
//!
//! Update rules, with `g` the gradient, `η` the step learning rate and
//! `m̂ = m/(1-β1ᵗ)`, `v̂ = v/(1-β2ᵗ)`:
//!
//! | algorithm | accumulators | update |
//! |-----------|--------------|--------|
//! | SGD       | none         | `θ -= η g` |
//! | Adagrad   | `G += g²` | `θ -= η g / sqrt(G + ε)` |
//! | Adadelta  | `E = ρE + (1-ρ)g²` | `θ -= η g / sqrt(E + ε)` |
//! | RMSprop   | `E = 0.9E + 0.1g²` | `θ -= η g / sqrt(E + ε)` |
//! | Adam      | `m`, `v` | `θ -= η m̂ / (sqrt(v̂) + ε)` |
//! | AdamW     | `m`, `v` | Adam step, then `θ -= η λ θ` on the pre-step `θ` |
//! | Adamax    | `m`, `u = max(β2 u, |g|)` | `θ -= η m̂ / u` |
//! | Nadam     | `m`, `v` | `θ -= η (β1 m̂ + (1-β1) g/(1-β1ᵗ)) / (sqrt(v̂) + ε)` |
//! | CaAdam    | `m`, `v` | Adam step multiplied by the layer's scale factor |
//!
//! The Adadelta variant divides the learning rate by the RMS of past gradients
//! only; it does not carry the parameter-update RMS of Zeiler's original.
//! Adamax applies no bias correction to `u`, and a coordinate whose `u` is
//! still zero (it has only ever seen zero gradients) is left in place.
//!
//! An update that would produce NaN/Inf leaves the network and the state
//! untouched and returns [`Error::NonFinite`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{summarize, ArchitectureSummary};
use crate::error::{Error, Result};
use crate::nn::{GradientSet, Network};
use crate::scaling::{ScaleTable, ScalingKind, ScalingStrategy, SigmaSign, DEFAULT_GAMMA};

pub const CHECKPOINT_VERSION: u32 = 1;

const RMSPROP_DECAY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Adagrad,
    Adadelta,
    Rmsprop,
    Adam,
    Adamw,
    Adamax,
    Nadam,
    Caadam,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Sgd,
        Algorithm::Adagrad,
        Algorithm::Adadelta,
        Algorithm::Rmsprop,
        Algorithm::Adam,
        Algorithm::Adamw,
        Algorithm::Adamax,
        Algorithm::Nadam,
        Algorithm::Caadam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Adagrad => "adagrad",
            Algorithm::Adadelta => "adadelta",
            Algorithm::Rmsprop => "rmsprop",
            Algorithm::Adam => "adam",
            Algorithm::Adamw => "adamw",
            Algorithm::Adamax => "adamax",
            Algorithm::Nadam => "nadam",
            Algorithm::Caadam => "caadam",
        }
    }
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_decay() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    0.004
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Display name; defaults to [`OptimizerConfig::label`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Adadelta's running-average decay.
    #[serde(default = "default_decay")]
    pub decay: f64,
    /// AdamW's decoupled weight decay.
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Scaling strategy, required for CaAdam.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingKind>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub multiplicative_sigma: SigmaSign,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        OptimizerConfig {
            algorithm,
            name: None,
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            decay: default_decay(),
            weight_decay: default_weight_decay(),
            scaling: None,
            gamma: DEFAULT_GAMMA,
            multiplicative_sigma: SigmaSign::Signed,
        }
    }

    pub fn caadam(kind: ScalingKind) -> Self {
        OptimizerConfig {
            scaling: Some(kind),
            ..OptimizerConfig::new(Algorithm::Caadam)
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn scaling_strategy(&self) -> Option<ScalingStrategy> {
        self.scaling.map(|kind| ScalingStrategy {
            kind,
            gamma: self.gamma,
            multiplicative_sigma: self.multiplicative_sigma,
        })
    }

    /// `adam`, `nadam`, `caadam-multiplicative`, ... unless a name is set.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match (self.algorithm, self.scaling) {
            (Algorithm::Caadam, Some(kind)) => format!("caadam-{}", kind.short_name()),
            (alg, _) => alg.name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{}: {what}", self.label())));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.decay) {
            return bad("decay must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        match (self.algorithm, self.scaling_strategy()) {
            (Algorithm::Caadam, None) => bad("caadam needs a scaling strategy"),
            (Algorithm::Caadam, Some(s)) => s.validate(),
            _ => Ok(()),
        }
    }
}

/// Optimizer state: configuration, step counter, accumulators and, for
/// CaAdam, the per-layer scale table. Serialises to the checkpoint layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    format_version: u32,
    algorithm: Algorithm,
    config: OptimizerConfig,
    step: u64,
    /// `m` for the Adam family; unused otherwise. One entry per tensor,
    /// ordered weights then bias for each layer.
    first: Vec<Vec<f64>>,
    /// `v`, `u`, `G` or `E[g²]` depending on the algorithm.
    second: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_table: Option<ScaleTable>,
}

impl Optimizer {
    /// Builds the optimizer for `net`. CaAdam summarises the architecture and
    /// precomputes its scale table here.
    pub fn new(config: OptimizerConfig, net: &Network) -> Result<Self> {
        if config.algorithm == Algorithm::Caadam {
            let summary = summarize(net)?;
            return Optimizer::caadam(config, &summary);
        }
        Optimizer::plain(config)
    }

    /// Non-scaled optimizers only.
    pub fn plain(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        if config.algorithm == Algorithm::Caadam {
            return Err(Error::Config(
                "caadam needs an architecture summary or a scale table".into(),
            ));
        }
        Ok(Optimizer::empty(config, None))
    }

    pub fn caadam(config: OptimizerConfig, summary: &ArchitectureSummary) -> Result<Self> {
        config.validate()?;
        let strategy = match (config.algorithm, config.scaling_strategy()) {
            (Algorithm::Caadam, Some(s)) => s,
            _ => {
                return Err(Error::Config(
                    "caadam requires algorithm=caadam and a scaling strategy".into(),
                ))
            }
        };
        let table = strategy.table(summary)?;
        Ok(Optimizer::empty(config, Some(table)))
    }

    /// CaAdam with an explicit table, bypassing the strategy.
    pub fn with_scale_table(mut config: OptimizerConfig, table: ScaleTable) -> Result<Self> {
        config.algorithm = Algorithm::Caadam;
        if config.scaling.is_none() {
            config.scaling = Some(ScalingKind::MultiplicativeMinmaxmedian);
        }
        config.validate()?;
        Ok(Optimizer::empty(config, Some(table)))
    }

    fn empty(config: OptimizerConfig, scale_table: Option<ScaleTable>) -> Self {
        Optimizer {
            format_version: CHECKPOINT_VERSION,
            algorithm: config.algorithm,
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
            scale_table,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn scale_table(&self) -> Option<&ScaleTable> {
        self.scale_table.as_ref()
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn step(&mut self, net: &mut Network, grads: &GradientSet, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {lr} must be positive"
            )));
        }
        net.check_congruent(grads)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        if let Some(table) = &self.scale_table {
            if table.len() != net.layers.len() {
                return Err(Error::Shape(format!(
                    "scale table has {} entries for {} layers",
                    table.len(),
                    net.layers.len()
                )));
            }
        }

        let grad_tensors: Vec<&[f64]> = grads
            .layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect();
        // fresh state is materialised only once a step is committed
        let zeros: Vec<Vec<f64>>;
        let (first, second) = if self.first.is_empty() && self.step == 0 {
            zeros = grad_tensors.iter().map(|g| vec![0.0; g.len()]).collect();
            (&zeros, &zeros)
        } else {
            (&self.first, &self.second)
        };
        if first.len() != grad_tensors.len()
            || second.len() != grad_tensors.len()
            || first
                .iter()
                .zip(&grad_tensors)
                .any(|(m, g)| m.len() != g.len())
        {
            return Err(Error::Shape(
                "optimizer state does not match gradients".into(),
            ));
        }

        let t = self.step + 1;
        let mut new_params = Vec::with_capacity(grad_tensors.len());
        let mut new_first = Vec::with_capacity(grad_tensors.len());
        let mut new_second = Vec::with_capacity(grad_tensors.len());
        for (k, g) in grad_tensors.iter().enumerate() {
            let layer = &net.layers[k / 2];
            let theta = if k % 2 == 0 {
                layer.weights.as_slice()
            } else {
                layer.bias.as_slice()
            };
            let scale = self.scale_table.as_ref().map_or(1.0, |s| s.get(k / 2));
            let mut p = theta.to_vec();
            let mut m = first[k].clone();
            let mut v = second[k].clone();
            self.update_tensor(&mut p, g, &mut m, &mut v, lr, t, scale);
            if p.iter().chain(&m).chain(&v).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{} update at step {t}",
                    self.config.label()
                )));
            }
            new_params.push(p);
            new_first.push(m);
            new_second.push(v);
        }

        for (k, p) in new_params.into_iter().enumerate() {
            let layer = &mut net.layers[k / 2];
            if k % 2 == 0 {
                layer.weights.as_mut_slice().copy_from_slice(&p);
            } else {
                layer.bias = p;
            }
        }
        self.first = new_first;
        self.second = new_second;
        self.step = t;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn update_tensor(
        &self,
        theta: &mut [f64],
        grad: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        lr: f64,
        t: u64,
        scale: f64,
    ) {
        let c = &self.config;
        let (b1, b2, eps) = (c.beta1, c.beta2, c.epsilon);
        let ti = t.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - b1.powi(ti);
        let bc2 = 1.0 - b2.powi(ti);

        for i in 0..theta.len() {
            let g = grad[i];
            match self.algorithm {
                Algorithm::Sgd => theta[i] -= lr * g,
                Algorithm::Adagrad => {
                    v[i] += g * g;
                    theta[i] -= lr / (v[i] + eps).sqrt() * g;
                }
                Algorithm::Adadelta => {
                    v[i] = c.decay * v[i] + (1.0 - c.decay) * g * g;
                    theta[i] -= lr / (v[i] + eps).sqrt() * g;
                }
                Algorithm::Rmsprop => {
                    v[i] = RMSPROP_DECAY * v[i] + (1.0 - RMSPROP_DECAY) * g * g;
                    theta[i] -= lr / (v[i] + eps).sqrt() * g;
                }
                Algorithm::Adam | Algorithm::Adamw | Algorithm::Caadam => {
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    let delta = -lr * m_hat / (v_hat.sqrt() + eps);
                    theta[i] = match self.algorithm {
                        Algorithm::Adamw => theta[i] + delta - lr * c.weight_decay * theta[i],
                        Algorithm::Caadam => theta[i] + scale * delta,
                        _ => theta[i] + delta,
                    };
                }
                Algorithm::Adamax => {
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = (b2 * v[i]).max(g.abs());
                    if v[i] > 0.0 {
                        theta[i] -= lr / v[i] * (m[i] / bc1);
                    }
                }
                Algorithm::Nadam => {
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    theta[i] -= lr / (v_hat.sqrt() + eps) * (b1 * m_hat + (1.0 - b1) * g / bc1);
                }
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let opt: Optimizer = serde_json::from_str(&text)?;
        if opt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                opt.format_version
            )));
        }
        if opt.algorithm != opt.config.algorithm {
            return Err(Error::Config("checkpoint algorithm tag mismatch".into()));
        }
        Ok(opt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, Rng};
    use crate::nn::{Dense, NetworkSpec};

    fn scalar_net(theta: f64) -> Network {
        Network::from_layers(
            NetworkSpec::regression(1, &[]),
            vec![Dense {
                weights: Matrix::new(1, 1, vec![theta]).unwrap(),
                bias: vec![0.0],
            }],
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> GradientSet {
        GradientSet {
            layers: vec![Dense {
                weights: Matrix::new(1, 1, vec![g]).unwrap(),
                bias: vec![0.0],
            }],
        }
    }

    fn weight(net: &Network) -> f64 {
        net.layers[0].weights.as_slice()[0]
    }

    #[test]
    fn adam_first_step_is_sign_step() {
        let mut net = scalar_net(1.0);
        let mut opt = Optimizer::plain(OptimizerConfig::new(Algorithm::Adam)).unwrap();
        opt.step(&mut net, &scalar_grad(0.5), 0.1).unwrap();
        assert!((weight(&net) - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
        assert!((weight(&net) - 0.9).abs() < 1e-7);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn adamax_first_step() {
        let mut net = scalar_net(0.0);
        let mut opt = Optimizer::plain(OptimizerConfig::new(Algorithm::Adamax)).unwrap();
        opt.step(&mut net, &scalar_grad(-2.0), 0.1).unwrap();
        assert!((weight(&net) - 0.1).abs() < 1e-15);
        assert_eq!(opt.second_moments()[0], vec![2.0]);
    }

    #[test]
    fn nadam_first_step() {
        let mut net = scalar_net(0.0);
        let mut opt = Optimizer::plain(OptimizerConfig::new(Algorithm::Nadam)).unwrap();
        opt.step(&mut net, &scalar_grad(1.0), 0.1).unwrap();
        assert!((weight(&net) + 0.1 * 1.9 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_exact_noop() {
        let mut net = scalar_net(0.37);
        let mut opt = Optimizer::plain(OptimizerConfig::new(Algorithm::Adam)).unwrap();
        opt.step(&mut net, &scalar_grad(0.0), 0.1).unwrap();
        assert_eq!(weight(&net), 0.37);
    }

    #[test]
    fn constant_gradient_bias_correction() {
        let g = 0.3;
        let mut net = scalar_net(0.0);
        let cfg = OptimizerConfig::new(Algorithm::Adam);
        let mut opt = Optimizer::plain(cfg.clone()).unwrap();
        for t in 1..=50 {
            opt.step(&mut net, &scalar_grad(g), 1e-3).unwrap();
            // geometric series: m_t = g (1 - β1ᵗ), v_t = g² (1 - β2ᵗ)
            let m_hat = opt.first_moments()[0][0] / (1.0 - cfg.beta1.powi(t));
            let v_hat = opt.second_moments()[0][0] / (1.0 - cfg.beta2.powi(t));
            assert!((m_hat - g).abs() < 1e-12);
            assert!((v_hat - g * g).abs() < 1e-12);
        }
    }

    #[test]
    fn caadam_needs_strategy() {
        let net = scalar_net(0.0);
        let cfg = OptimizerConfig::new(Algorithm::Caadam);
        assert!(matches!(Optimizer::new(cfg, &net), Err(Error::Config(_))));
    }

    #[test]
    fn caadam_tables() {
        let net = Network::init(NetworkSpec::regression(8, &[64, 32]), &mut Rng::new(0)).unwrap();
        let opt = Optimizer::new(
            OptimizerConfig::caadam(ScalingKind::MultiplicativeMinmaxmedian),
            &net,
        )
        .unwrap();
        let f = opt.scale_table().unwrap().factors();
        assert_eq!(f.len(), 3);
        assert_eq!(f[0], 1.0);
        assert!((f[1] - 0.95).abs() < 1e-15);
        assert!((f[2] - 1.0 / 0.95).abs() < 1e-12);

        let net = Network::init(NetworkSpec::regression(3, &[5]), &mut Rng::new(0)).unwrap();
        let opt = Optimizer::new(OptimizerConfig::caadam(ScalingKind::DepthBased), &net).unwrap();
        let f = opt.scale_table().unwrap().factors();
        assert!((f[0] - 1.95f64.sqrt()).abs() < 1e-15);
        assert_eq!(f[1], 1.0);
    }

    #[test]
    fn non_finite_update_leaves_state_untouched() {
        let mut net = scalar_net(1e308);
        let mut opt = Optimizer::plain(OptimizerConfig::new(Algorithm::Sgd)).unwrap();
        let before = (net.clone(), opt.clone());
        let err = opt.step(&mut net, &scalar_grad(-1e308), 10.0);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!((net, opt), before);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = Network::init(NetworkSpec::regression(2, &[3]), &mut Rng::new(0)).unwrap();
        let mut opt = Optimizer::plain(OptimizerConfig::new(Algorithm::Adam)).unwrap();
        assert!(matches!(
            opt.step(&mut net, &scalar_grad(1.0), 0.1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::new(Algorithm::Adam);
        cfg.beta1 = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = OptimizerConfig::new(Algorithm::Adam).with_learning_rate(0.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(OptimizerConfig::new(Algorithm::Adamw).label(), "adamw");
        assert_eq!(
            OptimizerConfig::caadam(ScalingKind::AdditiveMinmaxmedian).label(),
            "caadam-additive"
        );
    }
}
