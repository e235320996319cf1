//! Neuron dynamics and layer engines.
//!
//! Five engines share the types in this module:
//!
//! | engine | state carried across timesteps |
//! |---|---|
//! | [`lif_step`] | membrane potential `U` (full precision) |
//! | [`qlif_step`] | membrane potential quantized to `b` bits |
//! | [`mfp_parallel_forward`] | none: whole `(T, B, N)` block at once |
//! | [`mfp_streaming_step`] | `T` partial sums per neuron, no `U` |
//! | [`mfp_folded_step`] | none: per-timestep folded thresholds |
//!
//! The parallel and streaming engines accumulate identical terms in identical
//! order, so at equal precision their spike trains agree bit for bit.

mod lif;
mod mfp;
mod network;
mod spikes;

pub use lif::{lif_step, qlif_decay_bound, qlif_step, LifState, QLifState, StepTerms};
pub use mfp::{mfp_folded_step, mfp_parallel_forward, mfp_streaming_step, StreamingState};
pub use network::{
    compare_modes, network_forward, network_forward_counted, DenseLinear, MfpLayer, Mismatch, Mode,
    ModeComparison, Network, NetworkOutput, Weights,
};
pub use spikes::{SpikeFrame, SpikeTrain};

pub(crate) use mfp::{mix_time, streaming_step, synaptic_currents, time_mean};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Real;
use crate::tri::LowerTriangular;

/// Scalar hyperparameters of the neuron model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronConfig {
    pub tau: f64,
    pub v_th: f64,
    pub v_reset: f64,
    #[serde(default)]
    pub membrane_bits: Option<u32>,
    #[serde(default = "default_weight_bits")]
    pub weight_bits: u32,
}

fn default_weight_bits() -> u32 {
    1
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            v_th: 1.0,
            v_reset: 0.0,
            membrane_bits: None,
            weight_bits: 1,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!(
                "neuron.tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if !(self.v_th.is_finite() && self.v_th > 0.0) {
            return Err(Error::config(format!(
                "neuron.v_th must be positive, got {}",
                self.v_th
            )));
        }
        if !(self.v_reset.is_finite() && self.v_th > self.v_reset) {
            return Err(Error::config("neuron.v_reset must be below neuron.v_th"));
        }
        if let Some(b) = self.membrane_bits {
            if b < 2 {
                return Err(Error::config(format!(
                    "neuron.membrane_bits must be >= 2, got {b}"
                )));
            }
        }
        if self.weight_bits != 1 && self.weight_bits != 32 {
            return Err(Error::config(format!(
                "neuron.weight_bits must be 1 or 32, got {}",
                self.weight_bits
            )));
        }
        Ok(())
    }
}

/// Heaviside firing rule with `Θ(0) = 1`.
#[inline]
pub fn fires<T: Real>(potential: T, v_th: T) -> bool {
    potential - v_th >= T::zero()
}

/// Learnable lower-triangular `T×T` matrix mixing synaptic currents across
/// timesteps: row `t` weights the contributions of steps `0..=t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalMixMatrix<T> {
    tri: LowerTriangular<T>,
}

/// Initial decay used for the below-diagonal entries.
pub const DEFAULT_MIX_DECAY: f64 = 0.5;

/// Smallest diagonal magnitude kept after an optimizer update.
pub const MIX_DIAGONAL_FLOOR: f64 = 1e-3;

impl<T: Real> TemporalMixMatrix<T> {
    pub fn new(tri: LowerTriangular<T>) -> Self {
        Self { tri }
    }

    pub fn identity(t_steps: usize) -> Self {
        Self::new(LowerTriangular::identity(t_steps))
    }

    /// Diagonal 1, entry `(t, i)` below it `decay^(t-i)`: the LIF kernel
    /// without reset.
    pub fn lif_like(t_steps: usize, decay: f64) -> Self {
        let mut tri = LowerTriangular::identity(t_steps);
        for t in 0..t_steps {
            for i in 0..t {
                tri.set(t, i, T::from_f64(decay.powi((t - i) as i32)));
            }
        }
        Self::new(tri)
    }

    pub fn order(&self) -> usize {
        self.tri.order()
    }

    pub fn tri(&self) -> &LowerTriangular<T> {
        &self.tri
    }

    pub fn tri_mut(&mut self) -> &mut LowerTriangular<T> {
        &mut self.tri
    }

    /// Number of trainable entries, `T(T+1)/2`.
    pub fn learnable_count(&self) -> usize {
        self.tri.packed().len()
    }

    /// Pushes every diagonal entry to magnitude at least `floor`, keeping its
    /// sign (`sign(0) = +1`).
    pub fn clamp_diagonal(&mut self, floor: T) {
        for i in 0..self.order() {
            let d = self.tri.diag(i);
            if d.abs() < floor {
                self.tri
                    .set(i, i, if d >= T::zero() { floor } else { -floor });
            }
        }
    }
}
