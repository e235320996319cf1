//! Surrogate-gradient training of memory-free networks.
//!
//! Forward passes run in parallel mode with the binarized weights. Gradients
//! go through the spike function via a rectangular surrogate and through the
//! binarizer via the straight-through estimator; both latent weights and the
//! temporal mix entries are learned.

mod backward;

pub use backward::{
    backward_parallel, cross_entropy, evaluate, forward_cached, loss, loss_and_gradients,
    ForwardCache, ForwardKind, LayerCache, LayerGrads,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::neurons::{Network, MIX_DIAGONAL_FLOOR};
use crate::tensor::{Real, Tensor};

/// Rectangular surrogate: `∂S/∂Ĥ ≈ 1` inside `|Ĥ − v_th| < width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub width: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self { width: 1.0 }
    }
}

pub(crate) fn surrogate_grad_slice<T: Real>(h: &[T], v_th: T, width: T) -> Vec<T> {
    h.iter()
        .map(|&v| {
            if (v - v_th).abs() < width {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Surrogate derivative of the spike function at each pre-activation.
pub fn surrogate_grad<T: Real>(
    pre_activation: &Tensor<T>,
    v_th: f64,
    spec: &SurrogateSpec,
) -> Tensor<T> {
    let data = surrogate_grad_slice(
        pre_activation.data(),
        T::from_f64(v_th),
        T::from_f64(spec.width),
    );
    Tensor::new(pre_activation.shape(), data).expect("same shape")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Softmax cross-entropy on the time-averaged readout potential.
    #[default]
    RateCrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub surrogate: SurrogateSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum: 0.9,
            epochs: 10,
            batch: 32,
            seed: 0,
            loss: LossKind::RateCrossEntropy,
            surrogate: SurrogateSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!(
                "train.lr must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "train.momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch == 0 {
            return Err(Error::config("train.batch must be positive"));
        }
        if !(self.surrogate.width.is_finite() && self.surrogate.width > 0.0) {
            return Err(Error::config("train.surrogate.width must be positive"));
        }
        Ok(())
    }
}

/// In-place momentum SGD on a flat parameter slice:
/// `v ← μ·v + g`, `p ← p − lr·v`.
pub fn sgd_step<T: Real>(params: &mut [T], grads: &[T], velocity: &mut [T], lr: T, momentum: T) {
    assert!(params.len() == grads.len() && params.len() == velocity.len());
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Momentum SGD over a whole network's latent weights and mix entries.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> Sgd<T> {
    pub fn new(net: &Network<T>, lr: f64, momentum: f64) -> Self {
        let velocity = net
            .layers
            .iter()
            .map(|l| {
                (
                    vec![T::zero(); l.weights.latent().len()],
                    vec![T::zero(); l.mix.learnable_count()],
                )
            })
            .collect();
        Self {
            lr: T::from_f64(lr),
            momentum: T::from_f64(momentum),
            velocity,
        }
    }

    /// Applies one update, re-binarizes and keeps mix diagonals away from 0.
    pub fn step(&mut self, net: &mut Network<T>, grads: &[LayerGrads<T>]) -> Result<()> {
        if grads.len() != net.layers.len() || self.velocity.len() != net.layers.len() {
            return Err(Error::shape("gradient count differs from layer count"));
        }
        let floor = T::from_f64(MIX_DIAGONAL_FLOOR);
        for ((layer, g), (vw, vm)) in net.layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            if g.latent.len() != vw.len() || g.mix.len() != vm.len() {
                return Err(Error::shape("gradient shape differs from layer"));
            }
            sgd_step(
                layer.weights.latent_mut(),
                g.latent.data(),
                vw,
                self.lr,
                self.momentum,
            );
            layer.weights.refresh();
            sgd_step(
                layer.mix.tri_mut().packed_mut(),
                &g.mix,
                vm,
                self.lr,
                self.momentum,
            );
            layer.mix.clamp_diagonal(floor);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_ms: f64,
}

fn check_labels(data: &Dataset, classes: usize) -> Result<()> {
    if let Some((index, &label)) = data
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &l)| l >= classes)
    {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            classes,
        });
    }
    Ok(())
}

/// Trains `net` on `train` for `cfg.epochs` epochs of shuffled minibatches.
///
/// Deterministic for a given network, dataset and config. After every epoch
/// the whole training set is re-evaluated with the exact forward; that loss
/// and accuracy are what the metrics report.
pub fn train<T: Real>(
    mut net: Network<T>,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network<T>, Vec<EpochMetrics>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.t_steps() != net.t_steps() || train.features() != net.input_width() {
        return Err(Error::shape(format!(
            "dataset has T={} and {} features, network expects T={} and {}",
            train.t_steps(),
            train.features(),
            net.t_steps(),
            net.input_width()
        )));
    }
    check_labels(train, net.output_width())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(&net, cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let (x, y) = train.batch(chunk);
            let (_, grads, _) =
                loss_and_gradients(&net, &x, &y, ForwardKind::Exact, &cfg.surrogate)?;
            opt.step(&mut net, &grads)?;
        }
        let (loss, accuracy) = evaluate(&net, train, 256)?;
        metrics.push(EpochMetrics {
            epoch,
            split: "train".into(),
            loss,
            accuracy,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok((net, metrics))
}
