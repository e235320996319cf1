use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::RateEncoder;
use crate::error::{Error, Result};
use crate::neurons::SpikeTrain;
use crate::tensor::Tensor;

/// Rate-coded samples with class labels. Sample `i` is batch entry `i` of
/// `inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: SpikeTrain,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: SpikeTrain, labels: Vec<usize>) -> Result<Self> {
        if inputs.batch() != labels.len() {
            return Err(Error::shape(format!(
                "{} samples but {} labels",
                inputs.batch(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn t_steps(&self) -> usize {
        self.inputs.t_steps()
    }

    pub fn features(&self) -> usize {
        self.inputs.features()
    }

    pub fn inputs(&self) -> &SpikeTrain {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [usize] {
        &mut self.labels
    }

    /// Number of classes implied by the labels (`max + 1`).
    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn batch(&self, indices: &[usize]) -> (SpikeTrain, Vec<usize>) {
        (
            self.inputs.select_batch(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (inputs, labels) = self.batch(indices);
        Dataset { inputs, labels }
    }
}

/// Standard deviation of the synthetic clusters.
pub const SYNTHETIC_SIGMA: f64 = 0.08;

/// Two-class Gaussian clusters in `[0, 1]^dims` centred at `0.3·1` and
/// `0.7·1`, clamped to the unit cube and rate-coded over `t_steps`.
///
/// `count` samples are generated, alternating class 0 and class 1, then
/// shuffled. Everything is drawn from a single ChaCha8 stream seeded with
/// `seed`.
pub fn gen_synthetic(
    dims: usize,
    count: usize,
    seed: u64,
    sigma: f64,
    t_steps: usize,
) -> Result<Dataset> {
    if dims < 2 {
        return Err(Error::config(format!(
            "synthetic.dims must be >= 2, got {dims}"
        )));
    }
    if count < 4 {
        return Err(Error::config(format!(
            "synthetic.count must give at least 2 samples per class, got {count}"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::config(format!(
            "synthetic.sigma must be non-negative, got {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);
    let mut x = Vec::with_capacity(count * dims);
    let mut labels = Vec::with_capacity(count);
    for &i in &order {
        let label = i % 2;
        let centre = if label == 0 { 0.3 } else { 0.7 };
        x.extend((0..dims).map(|_| (centre + noise.sample(&mut rng)).clamp(0.0, 1.0)));
        labels.push(label);
    }
    let intensities = Tensor::new(&[count, dims], x)?;
    let encoder = RateEncoder::new(t_steps, rand::Rng::random(&mut rng))?;
    Dataset::new(encoder.encode(&intensities)?, labels)
}
