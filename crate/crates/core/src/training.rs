//! Losses, optimizers, initialization and the mini-batch training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::network::Network;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    /// Binary cross-entropy on a logit.
    Bce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Sgd,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 8,
            seed: 0,
            loss: LossKind::Mse,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::Config("adam needs 0 <= beta < 1 and eps > 0".into()));
            }
        }
        Ok(())
    }
}

/// Feature rows with scalar targets.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        check_dim("dataset targets", features.len(), targets.len())?;
        if let Some(first) = features.first() {
            for row in &features {
                check_dim("dataset row", first.len(), row.len())?;
            }
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Fills every weight and bias with draws from `U(−1/√fan_in, 1/√fan_in)`,
/// `fan_in` being the layer's input width.
pub fn init_params<T: Scalar>(net: &Network<T>, seed: u64) -> Network<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = net.clone();
    out.for_each_params_mut(|spec, params| {
        let bound = 1.0 / (spec.in_dim as f64).sqrt();
        for v in params.w.as_mut_slice().iter_mut().chain(params.b.iter_mut()) {
            *v = T::lit(rng.gen_range(-bound..=bound));
        }
    });
    out
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean loss and its gradient with respect to each prediction.
pub fn loss(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim("loss targets", pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::Data("loss of an empty batch".into()));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        match kind {
            LossKind::Mse => {
                let d = p - t;
                total += d * d;
                grad.push(2.0 * d / n);
            }
            LossKind::Bce => {
                if t != 0.0 && t != 1.0 {
                    return Err(Error::Data(format!("bce target must be 0 or 1, got {t}")));
                }
                total += softplus(p) - t * p;
                grad.push((sigmoid(p) - t) / n);
            }
        }
    }
    Ok((total / n, grad))
}

/// Mean loss over `indices` and the flat parameter gradient, summed over
/// samples in index order.
pub fn batch_gradient<T: Scalar>(
    net: &Network<T>,
    data: &Dataset,
    indices: &[usize],
    kind: LossKind,
) -> Result<(f64, Vec<T>)> {
    check_dim("network output", 1, net.output_dim())?;
    let mut traces = Vec::with_capacity(indices.len());
    let mut preds = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len());
    for &i in indices {
        let x: Vec<T> = data.features[i].iter().map(|&v| T::lit(v)).collect();
        let trace = net.trace(&x)?;
        preds.push(trace.output[0].as_f64());
        targets.push(data.targets[i]);
        traces.push(trace);
    }
    let (value, dl) = loss(kind, &preds, &targets)?;
    let mut grad = vec![T::zero(); net.param_count()];
    for (trace, g) in traces.iter().zip(dl) {
        net.accumulate_grad(trace, &[T::lit(g)], &mut grad);
    }
    Ok((value, grad))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let one = T::one();
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

enum Optimizer<T> {
    Adam(Adam<T>),
    Sgd(f64),
}

impl<T: Scalar> Optimizer<T> {
    fn step(&mut self, params: &mut [T], grad: &[T]) {
        match self {
            Optimizer::Adam(a) => a.step(params, grad),
            Optimizer::Sgd(lr) => {
                let lr = T::lit(*lr);
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p = *p - lr * g;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub network: Network<T>,
    /// Mean training loss of each epoch, accumulated over its batches.
    pub losses: Vec<f64>,
}

/// Shuffled mini-batch training. The network's current parameters are the
/// starting point.
pub fn fit<T: Scalar>(net: &Network<T>, data: &Dataset, config: &TrainConfig) -> Result<FitResult<T>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    check_dim("dataset features", net.input_dim(), data.dim())?;
    let mut net = net.clone();
    let mut params = net.params_flat();
    let mut opt = match config.optimizer {
        OptimizerKind::Adam { beta1, beta2, eps } => {
            Optimizer::Adam(Adam::new(params.len(), config.learning_rate, beta1, beta2, eps))
        }
        OptimizerKind::Sgd => Optimizer::Sgd(config.learning_rate),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let (value, grad) = batch_gradient(&net, data, idx, config.loss)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NumericAbort {
                    epoch,
                    batch,
                    loss: value,
                });
            }
            total += value * idx.len() as f64;
            opt.step(&mut params, &grad);
            net.set_params_flat(&params)?;
        }
        losses.push(total / data.len() as f64);
    }
    Ok(FitResult {
        network: net,
        losses,
    })
}

/// First-output predictions for every row.
pub fn predict<T: Scalar>(net: &Network<T>, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    features
        .iter()
        .map(|row| {
            let x: Vec<T> = row.iter().map(|&v| T::lit(v)).collect();
            Ok(net.forward_scalar(&x)?.as_f64())
        })
        .collect()
}
