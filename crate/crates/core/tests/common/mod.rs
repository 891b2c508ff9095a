//! Shared oracles for the integration and acceptance suites.
#![allow(dead_code)]

use caadam::linalg::{Matrix, Rng};
use caadam::nn::{loss, Dense, GradientSet, Network, NetworkSpec, Targets};
use caadam::optim::{Algorithm, Optimizer, OptimizerConfig};
use caadam::scaling::ScaleTable;

/// Scalar objective gradient driving the oracle trajectories. Nonlinear so
/// that every step depends on the previous parameter value.
pub fn scalar_grad(theta: f64) -> f64 {
    2.0 * (theta - 0.3) + (3.0 * theta).sin()
}

/// Brute-force scalar optimizer, written out per algorithm without sharing
/// any code with the library.
pub struct ScalarOracle {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub rho: f64,
    pub weight_decay: f64,
    pub scale: f64,
}

impl ScalarOracle {
    pub fn new(algorithm: Algorithm, lr: f64) -> Self {
        ScalarOracle {
            algorithm,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rho: 0.9,
            weight_decay: 0.004,
            scale: 1.0,
        }
    }

    /// Parameter values after each of `steps` updates starting from `theta0`.
    pub fn trajectory(&self, theta0: f64, steps: usize) -> Vec<f64> {
        let mut theta = theta0;
        let (mut m, mut v, mut acc) = (0.0f64, 0.0f64, 0.0f64);
        let (mut b1_pow, mut b2_pow) = (1.0f64, 1.0f64);
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let g = scalar_grad(theta);
            b1_pow *= self.beta1;
            b2_pow *= self.beta2;
            match self.algorithm {
                Algorithm::Sgd => theta -= self.lr * g,
                Algorithm::Adagrad => {
                    acc += g.powi(2);
                    theta -= self.lr * g / (acc + self.eps).sqrt();
                }
                Algorithm::Adadelta => {
                    acc = self.rho * acc + (1.0 - self.rho) * g.powi(2);
                    theta -= self.lr * g / (acc + self.eps).sqrt();
                }
                Algorithm::Rmsprop => {
                    acc = 0.9 * acc + 0.1 * g.powi(2);
                    theta -= self.lr * g / (acc + self.eps).sqrt();
                }
                Algorithm::Adam | Algorithm::Adamw | Algorithm::Caadam => {
                    m = self.beta1 * m + (1.0 - self.beta1) * g;
                    v = self.beta2 * v + (1.0 - self.beta2) * g.powi(2);
                    let m_hat = m / (1.0 - b1_pow);
                    let v_hat = v / (1.0 - b2_pow);
                    let step = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    theta = match self.algorithm {
                        Algorithm::Adam => theta - step,
                        Algorithm::Adamw => theta - step - self.lr * self.weight_decay * theta,
                        _ => theta - self.scale * step,
                    };
                }
                Algorithm::Adamax => {
                    m = self.beta1 * m + (1.0 - self.beta1) * g;
                    acc = f64::max(self.beta2 * acc, g.abs());
                    let m_hat = m / (1.0 - b1_pow);
                    if acc != 0.0 {
                        theta -= self.lr / acc * m_hat;
                    }
                }
                Algorithm::Nadam => {
                    m = self.beta1 * m + (1.0 - self.beta1) * g;
                    v = self.beta2 * v + (1.0 - self.beta2) * g.powi(2);
                    let m_hat = m / (1.0 - b1_pow);
                    let v_hat = v / (1.0 - b2_pow);
                    let nesterov = self.beta1 * m_hat + (1.0 - self.beta1) * g / (1.0 - b1_pow);
                    theta -= self.lr / (v_hat.sqrt() + self.eps) * nesterov;
                }
            }
            out.push(theta);
        }
        out
    }
}

/// 1×1 linear network whose weight and bias hold two independent scalars.
pub fn scalar_network(w: f64, b: f64) -> Network {
    let layer = Dense {
        weights: Matrix::new(1, 1, vec![w]).unwrap(),
        bias: vec![b],
    };
    Network::from_layers(NetworkSpec::regression(1, &[]), vec![layer]).unwrap()
}

/// Steps the library optimizer on the scalar objective, applied separately to
/// the weight and the bias. Returns both trajectories.
pub fn library_scalar_trajectory(
    opt: &mut Optimizer,
    w0: f64,
    b0: f64,
    lr: f64,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut net = scalar_network(w0, b0);
    let (mut ws, mut bs) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        let w = net.layers[0].weights.get(0, 0);
        let b = net.layers[0].bias[0];
        let grads = GradientSet {
            layers: vec![Dense {
                weights: Matrix::new(1, 1, vec![scalar_grad(w)]).unwrap(),
                bias: vec![scalar_grad(b)],
            }],
        };
        opt.step(&mut net, &grads, lr).unwrap();
        ws.push(net.layers[0].weights.get(0, 0));
        bs.push(net.layers[0].bias[0]);
    }
    (ws, bs)
}

/// Library optimizer for `algorithm`; CaAdam gets an explicit one-entry table.
pub fn scalar_optimizer(algorithm: Algorithm, lr: f64, caadam_scale: f64) -> Optimizer {
    let cfg = OptimizerConfig::new(algorithm).with_learning_rate(lr);
    if algorithm == Algorithm::Caadam {
        Optimizer::with_scale_table(cfg, ScaleTable::new(vec![caadam_scale]).unwrap()).unwrap()
    } else {
        Optimizer::plain(cfg).unwrap()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random batch and matching targets for `spec`.
pub fn random_batch(spec: &NetworkSpec, batch: usize, rng: &mut Rng) -> (Matrix, Targets) {
    let x: Vec<f64> = (0..batch * spec.input_dim)
        .map(|_| rng.uniform_range(-1.5, 1.5))
        .collect();
    let x = Matrix::new(batch, spec.input_dim, x).unwrap();
    let targets = match spec.output_head {
        caadam::nn::OutputHead::LinearRegression => {
            let y: Vec<f64> = (0..batch * spec.output_dim)
                .map(|_| rng.uniform_range(-2.0, 2.0))
                .collect();
            Targets::Values(Matrix::new(batch, spec.output_dim, y).unwrap())
        }
        caadam::nn::OutputHead::SoftmaxClassification => {
            Targets::Classes((0..batch).map(|_| rng.below(spec.output_dim)).collect())
        }
    };
    (x, targets)
}

fn loss_at(net: &Network, x: &Matrix, y: &Targets) -> f64 {
    let pred = net.predict(x).unwrap();
    loss(&pred, y, net.spec.output_head).unwrap()
}

/// Largest relative error between backprop and central differences over
/// every parameter. Relative error is `|a - n| / max(|a| + |n|, 1e-8)`.
pub fn max_gradient_error(net: &Network, x: &Matrix, y: &Targets, h: f64) -> f64 {
    let (_, cache) = net.forward(x).unwrap();
    let analytic = net.backward(&cache, y).unwrap();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let rel = |a: f64, n: f64| (a - n).abs() / f64::max(a.abs() + n.abs(), 1e-8);
    for l in 0..net.layers.len() {
        for i in 0..net.layers[l].weights.as_slice().len() {
            let orig = probe.layers[l].weights.as_slice()[i];
            probe.layers[l].weights.as_mut_slice()[i] = orig + h;
            let up = loss_at(&probe, x, y);
            probe.layers[l].weights.as_mut_slice()[i] = orig - h;
            let down = loss_at(&probe, x, y);
            probe.layers[l].weights.as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel(analytic.layers[l].weights.as_slice()[i], numeric));
        }
        for i in 0..net.layers[l].bias.len() {
            let orig = probe.layers[l].bias[i];
            probe.layers[l].bias[i] = orig + h;
            let up = loss_at(&probe, x, y);
            probe.layers[l].bias[i] = orig - h;
            let down = loss_at(&probe, x, y);
            probe.layers[l].bias[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel(analytic.layers[l].bias[i], numeric));
        }
    }
    worst
}

/// Network for the gradient check. Biases are randomised so no pre-activation
/// sits exactly on the ReLU kink, where central differences are meaningless.
pub fn gradient_check_network(spec: &NetworkSpec, rng: &mut Rng) -> Network {
    let mut net = Network::init(spec.clone(), rng).unwrap();
    for layer in &mut net.layers {
        layer
            .bias
            .iter_mut()
            .for_each(|b| *b = rng.uniform_range(-0.5, 0.5));
    }
    net
}

/// Architectures and heads used by the gradient check.
pub fn gradient_check_specs() -> Vec<NetworkSpec> {
    vec![
        NetworkSpec::regression(3, &[]),
        NetworkSpec::regression(4, &[6]),
        NetworkSpec::regression(5, &[8, 4]),
        NetworkSpec::classification(4, &[7, 5], 3),
        NetworkSpec::classification(3, &[6], 4),
        NetworkSpec::classification(6, &[], 2),
    ]
}

/// (a, b, t, two-sided p) from an established statistics package.
pub const CANNED: &[(&[f64], &[f64], f64, f64)] = &[
    (
        &[1.0, 2.0, 3.0],
        &[4.0, 5.0, 6.0],
        -3.674_234_614_174_767_3,
        0.021_311_641_128_756_727,
    ),
    (
        &[0.466, 0.471, 0.458, 0.462, 0.470],
        &[0.446, 0.452, 0.441, 0.449, 0.455],
        4.886_529_708_170_463,
        0.001_214_529_467_345_593_9,
    ),
    (
        &[10.1, 9.8, 10.4, 10.0, 9.9, 10.2],
        &[10.3, 10.5, 10.1, 10.6],
        -2.176_470_588_235_309_5,
        0.069_276_174_886_627_63,
    ),
    (
        &[1.5, 2.5],
        &[3.0, 3.5, 2.0],
        -1.25,
        0.318_310_943_220_255_9,
    ),
    (
        &[170.0, 150.0, 190.0, 165.0, 180.0, 175.0, 160.0],
        &[110.0, 120.0, 105.0, 115.0, 118.0],
        9.899_308_215_341_566,
        4.148_493_992_462_422e-6,
    ),
    (
        &[0.1, 0.2, 0.15, 0.12, 0.18, 0.11, 0.16, 0.14],
        &[0.13, 0.19, 0.17, 0.12, 0.15, 0.2, 0.16, 0.18],
        -1.108_778_914_393_479_2,
        0.286_974_009_575_021_3,
    ),
    (
        &[-1.2, 0.4, 2.2, -0.7, 1.1],
        &[5.0, -3.0, 9.0, -6.0, 4.0, 2.0],
        -0.633_882_175_095_183_2,
        0.550_592_427_461_039_4,
    ),
    (
        &[100.0, 101.0],
        &[99.0, 150.0],
        -0.940_995_596_853_387_7,
        0.519_250_064_553_318_9,
    ),
    (
        &[3.3, 3.1, 3.4, 3.2, 3.5, 3.3, 3.0, 3.6, 3.2, 3.4],
        &[3.9, 3.7, 4.1, 3.8, 4.0],
        -6.572_670_690_061_998,
        8.908_051_844_081_547e-5,
    ),
    (
        &[2.0, 4.0, 6.0, 8.0, 10.0],
        &[1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0],
        -0.462_910_049_886_275_7,
        0.653_371_685_164_076_6,
    ),
];
