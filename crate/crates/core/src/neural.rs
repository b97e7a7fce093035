//! Two-hidden-layer ReLU network with a sigmoid output, trained with
//! mini-batch gradient descent on the knowledge-weighted cross-entropy.
//!
//! Each sample's BCE term is multiplied by `1 + alpha` when the protocol's
//! prediction for it equals the true label, and left as is otherwise
//! (including when the protocol makes no prediction).

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, LabeledDataset, ScalerParams};

/// Probability clamp used by the loss.
pub const EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid network config: {0}")]
    InvalidConfig(&'static str),
    #[error("no training samples")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub hidden_sizes: (usize, usize),
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: (16, 8),
            learning_rate: 0.05,
            batch_size: 20,
            epochs: 25,
            seed: 0,
            alpha: 0.0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.batch_size == 0 {
            return Err(NeuralError::InvalidConfig("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(NeuralError::InvalidConfig("epochs must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(NeuralError::InvalidConfig("alpha must be finite and non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NeuralError::InvalidConfig("learning_rate must be positive"));
        }
        if self.hidden_sizes.0 == 0 || self.hidden_sizes.1 == 0 {
            return Err(NeuralError::InvalidConfig("hidden layers must be non-empty"));
        }
        Ok(())
    }
}

/// `L(y, p)` with `p` clamped to `[EPSILON, 1 - EPSILON]`.
pub fn bce_loss(y: u8, p: f64) -> f64 {
    let p = p.clamp(EPSILON, 1.0 - EPSILON);
    if y == 1 {
        -libm::log(p)
    } else {
        -libm::log(1.0 - p)
    }
}

/// Loss multiplier for one sample.
pub fn sample_weight(y: u8, r: Option<u8>, alpha: f64) -> f64 {
    if r == Some(y) {
        1.0 + alpha
    } else {
        1.0
    }
}

pub fn csl_loss(y: u8, p: f64, r: Option<u8>, alpha: f64) -> f64 {
    sample_weight(y, r, alpha) * bce_loss(y, p)
}

/// Mean of the per-sample knowledge-weighted losses.
pub fn ctl_loss(y: &[u8], p: &[f64], r: &[Option<u8>], alpha: f64) -> Result<f64, NeuralError> {
    if y.len() != p.len() || y.len() != r.len() {
        return Err(NeuralError::LengthMismatch);
    }
    if y.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let total: f64 = (0..y.len()).map(|i| csl_loss(y[i], p[i], r[i], alpha)).sum();
    Ok(total / y.len() as f64)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Uniform Xavier weights, zero biases.
    pub fn xavier<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[o];
            out.push(z);
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(&mut self.biases)
    }
}

/// The three dense layers. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
}

#[derive(Default)]
struct Cache {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    z3: Vec<f64>,
}

impl Network {
    pub fn zeros(inputs: usize, hidden: (usize, usize)) -> Self {
        Self {
            layers: vec![
                Dense::zeros(inputs, hidden.0),
                Dense::zeros(hidden.0, hidden.1),
                Dense::zeros(hidden.1, 1),
            ],
        }
    }

    pub fn xavier<R: Rng>(inputs: usize, hidden: (usize, usize), rng: &mut R) -> Self {
        Self {
            layers: vec![
                Dense::xavier(inputs, hidden.0, rng),
                Dense::xavier(hidden.0, hidden.1, rng),
                Dense::xavier(hidden.1, 1, rng),
            ],
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(Dense::params).copied().collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) {
        for (p, &v) in self.layers.iter_mut().flat_map(Dense::params_mut).zip(values) {
            *p = v;
        }
    }

    fn forward_cached(&self, x: &[f64], c: &mut Cache) -> f64 {
        self.layers[0].apply(x, &mut c.z1);
        c.a1.clear();
        c.a1.extend(c.z1.iter().map(|&z| z.max(0.0)));
        self.layers[1].apply(&c.a1, &mut c.z2);
        c.a2.clear();
        c.a2.extend(c.z2.iter().map(|&z| z.max(0.0)));
        self.layers[2].apply(&c.a2, &mut c.z3);
        sigmoid(c.z3[0])
    }

    /// Output probability for one already-scaled input.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_cached(x, &mut Cache::default())
    }

    /// Mean weighted loss over the given scaled samples and its exact gradient.
    pub fn loss_and_gradient<R: AsRef<[f64]>>(
        &self,
        xs: &[R],
        y: &[u8],
        r: &[Option<u8>],
        alpha: f64,
    ) -> Result<(f64, Network), NeuralError> {
        if xs.len() != y.len() || xs.len() != r.len() {
            return Err(NeuralError::LengthMismatch);
        }
        if xs.is_empty() {
            return Err(NeuralError::EmptyTrainingSet);
        }
        let mut grad = Network {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        };
        let mut cache = Cache::default();
        let mut dz2 = Vec::new();
        let mut dz1 = Vec::new();
        let mut total = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let x = x.as_ref();
            let p = self.forward_cached(x, &mut cache);
            let w = sample_weight(y[i], r[i], alpha);
            total += w * bce_loss(y[i], p);
            // the clamp has zero derivative outside its interior
            let dz3 = if p > EPSILON && p < 1.0 - EPSILON {
                w * (p - y[i] as f64)
            } else {
                0.0
            };

            let (l3, g3) = (&self.layers[2], &mut grad.layers[2]);
            for (j, &a) in cache.a2.iter().enumerate() {
                g3.weights[j] += dz3 * a;
            }
            g3.biases[0] += dz3;

            dz2.clear();
            dz2.extend((0..l3.inputs).map(|j| if cache.z2[j] > 0.0 { l3.weights[j] * dz3 } else { 0.0 }));
            let (l2, g2) = (&self.layers[1], &mut grad.layers[1]);
            for (o, &d) in dz2.iter().enumerate() {
                let row = &mut g2.weights[o * l2.inputs..(o + 1) * l2.inputs];
                for (g, &a) in row.iter_mut().zip(&cache.a1) {
                    *g += d * a;
                }
                g2.biases[o] += d;
            }

            dz1.clear();
            dz1.extend((0..l2.inputs).map(|j| {
                if cache.z1[j] > 0.0 {
                    (0..l2.outputs).map(|o| l2.weights[o * l2.inputs + j] * dz2[o]).sum()
                } else {
                    0.0
                }
            }));
            let (l1, g1) = (&self.layers[0], &mut grad.layers[0]);
            for (o, &d) in dz1.iter().enumerate() {
                let row = &mut g1.weights[o * l1.inputs..(o + 1) * l1.inputs];
                for (g, &v) in row.iter_mut().zip(x) {
                    *g += d * v;
                }
                g1.biases[o] += d;
            }
        }
        let n = xs.len() as f64;
        for layer in &mut grad.layers {
            layer.params_mut().for_each(|g| *g /= n);
        }
        Ok((total / n, grad))
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(net: &mut Network, grad: &Network, lr: f64, adam: Option<&mut AdamState>) {
    let params = net.layers.iter_mut().flat_map(Dense::params_mut);
    let grads = grad.layers.iter().flat_map(Dense::params);
    match adam {
        None => {
            for (p, g) in params.zip(grads) {
                *p -= lr * g;
            }
        }
        Some(s) => {
            s.t += 1;
            let c1 = 1.0 - libm::pow(ADAM_BETA1, s.t as f64);
            let c2 = 1.0 - libm::pow(ADAM_BETA2, s.t as f64);
            for (k, (p, &g)) in params.zip(grads).enumerate() {
                s.m[k] = ADAM_BETA1 * s.m[k] + (1.0 - ADAM_BETA1) * g;
                s.v[k] = ADAM_BETA2 * s.v[k] + (1.0 - ADAM_BETA2) * g * g;
                let mh = s.m[k] / c1;
                let vh = s.v[k] / c2;
                *p -= lr * mh / (libm::sqrt(vh) + ADAM_EPS);
            }
        }
    }
}

/// A fitted network together with the scaler fitted on its training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub network: Network,
    pub scaler: ScalerParams,
    pub config: NetworkConfig,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

impl TrainedNetwork {
    pub fn from_parts(network: Network, scaler: ScalerParams, config: NetworkConfig) -> Self {
        Self {
            network,
            scaler,
            config,
            loss_history: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.network.inputs()
    }

    /// Probability of class 1 for one raw sample.
    pub fn predict_one(&self, row: &[f64]) -> Result<f64, NeuralError> {
        if row.len() != self.n_features() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.n_features(),
                found: row.len(),
            });
        }
        Ok(self.network.forward(&self.scaler.transform(row)))
    }

    pub fn predict_proba<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<f64>, NeuralError> {
        rows.iter().map(|r| self.predict_one(r.as_ref())).collect()
    }

    pub fn predict_indices(&self, data: &LabeledDataset, indices: &[usize]) -> Result<Vec<f64>, NeuralError> {
        indices.iter().map(|&i| self.predict_one(data.row(i))).collect()
    }
}

/// Fits a network on `train_indices`. `r` holds the protocol prediction for
/// every row of `data`, not only the training rows.
pub fn train(
    data: &LabeledDataset,
    train_indices: &[usize],
    r: &[Option<u8>],
    config: &NetworkConfig,
) -> Result<TrainedNetwork, NeuralError> {
    config.validate()?;
    if train_indices.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    if r.len() != data.n_rows() {
        return Err(NeuralError::LengthMismatch);
    }
    let scaler = ScalerParams::fit(data, train_indices)?;
    let xs: Vec<Vec<f64>> = train_indices.iter().map(|&i| scaler.transform(data.row(i))).collect();
    let ys: Vec<u8> = train_indices.iter().map(|&i| data.labels()[i]).collect();
    let rs: Vec<Option<u8>> = train_indices.iter().map(|&i| r[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Network::xavier(data.n_features(), config.hidden_sizes, &mut rng);
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| AdamState {
        m: vec![0.0; net.n_params()],
        v: vec![0.0; net.n_params()],
        t: 0,
    });

    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut bx: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    let mut by = Vec::with_capacity(config.batch_size);
    let mut br = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            bx.clear();
            by.clear();
            br.clear();
            for &k in chunk {
                bx.push(&xs[k]);
                by.push(ys[k]);
                br.push(rs[k]);
            }
            let (loss, grad) = net.loss_and_gradient(&bx, &by, &br, config.alpha)?;
            if !loss.is_finite() || grad.parameters().iter().any(|g| !g.is_finite()) {
                return Err(NeuralError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += loss * chunk.len() as f64;
            apply_update(&mut net, &grad, config.learning_rate, adam.as_mut());
        }
        let mean = epoch_loss / xs.len() as f64;
        log::trace!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(TrainedNetwork {
        network: net,
        scaler,
        config: config.clone(),
        loss_history: history,
    })
}
