//! Recurrent LIF dynamics: full precision and with a quantized membrane.

use super::{fires, NeuronConfig};
use crate::error::{Error, Result};
use crate::quant::{quantize_level, QuantSpec};
use crate::tensor::{Real, Tensor};

/// Stored membrane potential `U`, one value per neuron.
#[derive(Clone, Debug, PartialEq)]
pub struct LifState<T> {
    pub u: Vec<T>,
}

impl<T: Real> LifState<T> {
    pub fn zeros(neurons: usize) -> Self {
        Self {
            u: vec![T::zero(); neurons],
        }
    }
}

/// Per-neuron magnitudes of the two terms feeding `H[t]`: the decayed history
/// `τ·U[t-1]` and the synaptic input `W·S[t]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepTerms {
    pub history: Vec<f64>,
    pub current: Vec<f64>,
}

/// One LIF step: `H = τ·u + I`, spike where `H ≥ v_th`, hard reset to
/// `v_reset` after a spike.
pub fn lif_step<T: Real>(
    state: &LifState<T>,
    input_current: &Tensor<T>,
    cfg: &NeuronConfig,
) -> Result<(Tensor<T>, LifState<T>)> {
    if input_current.len() != state.u.len() {
        return Err(Error::shape(format!(
            "lif_step: {} inputs for {} neurons",
            input_current.len(),
            state.u.len()
        )));
    }
    let tau = T::from_f64(cfg.tau);
    let v_th = T::from_f64(cfg.v_th);
    let v_reset = T::from_f64(cfg.v_reset);
    let mut spikes = Vec::with_capacity(state.u.len());
    let mut u = Vec::with_capacity(state.u.len());
    for (&prev, &x) in state.u.iter().zip(input_current.data()) {
        let h = tau * prev + x;
        if fires(h, v_th) {
            spikes.push(T::one());
            u.push(v_reset);
        } else {
            spikes.push(T::zero());
            u.push(h);
        }
    }
    Ok((Tensor::new(input_current.shape(), spikes)?, LifState { u }))
}

/// Membrane held as integer levels of a uniform `b`-bit grid with scale `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct QLifState {
    pub levels: Vec<i64>,
    pub scale: f64,
}

impl QLifState {
    pub fn zeros(neurons: usize, scale: f64) -> Self {
        Self {
            levels: vec![0; neurons],
            scale,
        }
    }

    pub fn values(&self, bits: u32) -> Result<Vec<f64>> {
        let spec = QuantSpec::new(bits, self.scale)?;
        Ok(self.levels.iter().map(|&l| spec.level_value(l)).collect())
    }
}

fn membrane_spec(cfg: &NeuronConfig, scale: f64) -> Result<QuantSpec> {
    let bits = cfg
        .membrane_bits
        .ok_or(Error::UnsupportedBits { bits: 0 })?;
    QuantSpec::new(bits, scale)
}

/// One quantized-membrane LIF step.
///
/// The decay acts on the integer level the way a hardware right shift does:
/// `trunc(τ·q)`, truncating toward zero. The resulting potential
/// `α·trunc(τ·q)/L + I` then goes through the ordinary LIF fire/reset rule and
/// the new membrane is re-quantized to the nearest level.
pub fn qlif_step(
    state: &QLifState,
    input_current: &Tensor<f64>,
    cfg: &NeuronConfig,
) -> Result<(Tensor<f64>, QLifState, StepTerms)> {
    let spec = membrane_spec(cfg, state.scale)?;
    if input_current.len() != state.levels.len() {
        return Err(Error::shape(format!(
            "qlif_step: {} inputs for {} neurons",
            input_current.len(),
            state.levels.len()
        )));
    }
    let n = state.levels.len();
    let mut spikes = Vec::with_capacity(n);
    let mut levels = Vec::with_capacity(n);
    let mut terms = StepTerms {
        history: Vec::with_capacity(n),
        current: Vec::with_capacity(n),
    };
    for (&q, &x) in state.levels.iter().zip(input_current.data()) {
        let decayed = (cfg.tau * q as f64).trunc() as i64;
        let history = spec.level_value(decayed);
        let h = history + x;
        terms.history.push(history.abs());
        terms.current.push(x.abs());
        if fires(h, cfg.v_th) {
            spikes.push(1.0);
            levels.push(quantize_level(cfg.v_reset, &spec)?);
        } else {
            spikes.push(0.0);
            levels.push(quantize_level(h, &spec)?);
        }
    }
    Ok((
        Tensor::new(input_current.shape(), spikes)?,
        QLifState {
            levels,
            scale: state.scale,
        },
        terms,
    ))
}

/// Steps after which a `bits`-bit membrane with decay `tau` and no input is
/// guaranteed to hold exactly zero, from any level. `None` when `tau = 1`
/// (no decay).
///
/// Truncated decay satisfies `|q_k| ≤ τ^k·L`, which drops below one level
/// once `k > log_{1/τ} L`.
pub fn qlif_decay_bound(bits: u32, tau: f64) -> Option<usize> {
    if tau >= 1.0 {
        return None;
    }
    if tau <= 0.0 {
        return Some(1);
    }
    let l = ((1u64 << (bits - 1)) - 1) as f64;
    let mut k = (l.ln() / (1.0 / tau).ln()).floor() as usize + 1;
    // guard against ln rounding at exact powers
    while tau.powi(k as i32 - 1) * l < 1.0 && k > 1 {
        k -= 1;
    }
    Some(k)
}
