use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neurons::SpikeTrain;
use crate::tensor::Tensor;

/// Bernoulli rate coding: at every timestep a feature with intensity `p`
/// spikes with probability `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateEncoder {
    pub t_steps: usize,
    pub seed: u64,
}

impl RateEncoder {
    pub fn new(t_steps: usize, seed: u64) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::config("encoder.t_steps must be positive"));
        }
        Ok(Self { t_steps, seed })
    }

    /// Encodes a `(B × N)` intensity matrix with values in `[0, 1]`.
    pub fn encode(&self, intensities: &Tensor<f64>) -> Result<SpikeTrain> {
        if intensities.shape().len() != 2 {
            return Err(Error::shape("encoder expects a (batch x features) matrix"));
        }
        if let Some(p) = intensities
            .data()
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::config(format!("intensity {p} outside [0, 1]")));
        }
        let (batch, features) = (intensities.rows(), intensities.cols());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // random::<f64>() lies in [0, 1): p = 0 never fires, p = 1 always does
        Ok(SpikeTrain::from_fn(
            self.t_steps,
            batch,
            features,
            |_, b, n| rng.random::<f64>() < intensities.at2(b, n),
        ))
    }
}
