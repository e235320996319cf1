//! The memory-free layer engines.
//!
//! Potential of neuron `n` at step `t`:
//!
//! ```text
//! Ĥ[t] = α · Σ_{i ≤ t} M[t][i] · Y[i],    Y[i] = Ŵ · S_in[i]
//! ```
//!
//! The parallel engine evaluates this for all `t` at once; the streaming
//! engine scatters each `Y[t]` into `T` running sums as it arrives; the folded
//! engine compares `Y[t]` against a precomputed threshold and keeps no state.

use super::network::MfpLayer;
use super::{fires, NeuronConfig, SpikeFrame, SpikeTrain};
use crate::analysis::OpCount;
use crate::error::{Error, Result};
use crate::quant::FoldedThresholds;
use crate::tensor::{matmul_into, Real, Tensor};
use crate::tri::LowerTriangular;

/// `Y = S · Wᵀ` for `rows` input rows, where `syn_t` is `Wᵀ` laid out
/// `(fan_in × fan_out)`.
pub(crate) fn synaptic_currents<T: Real>(
    syn_t: &[T],
    fan_in: usize,
    fan_out: usize,
    input: &[T],
    rows: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); rows * fan_out];
    matmul_into(input, syn_t, &mut out, rows, fan_in, fan_out);
    out
}

/// `P[t] = Σ_{i ≤ t} M[t][i] · Y[i]` over `(T × width)` blocks, accumulated
/// in increasing `i`.
pub(crate) fn mix_time<T: Real>(
    mix: &LowerTriangular<T>,
    y: &[T],
    t_steps: usize,
    width: usize,
) -> Vec<T> {
    let mut p = vec![T::zero(); t_steps * width];
    for t in 0..t_steps {
        let out = &mut p[t * width..(t + 1) * width];
        for (i, &m) in mix.row(t).iter().enumerate() {
            let yi = &y[i * width..(i + 1) * width];
            for (o, &v) in out.iter_mut().zip(yi) {
                *o += m * v;
            }
        }
    }
    p
}

/// Mean over the leading time axis of a `(T × width)` block.
pub(crate) fn time_mean<T: Real>(h: &[T], t_steps: usize, width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); width];
    for t in 0..t_steps {
        for (o, &v) in out.iter_mut().zip(&h[t * width..(t + 1) * width]) {
            *o += v;
        }
    }
    let inv = T::from_usize(t_steps);
    out.iter_mut().for_each(|o| *o = *o / inv);
    out
}

fn count_input_ac(input: &[bool], fan_out: usize, ops: &mut OpCount) {
    let active = input.iter().filter(|&&b| b).count();
    ops.ac_ops += (active * fan_out) as u64;
}

/// Parallel forward of one layer on a `(T, B, fan_in)` block of 0/1 values.
/// Returns the spikes and `Ĥ`, both `(T, B, fan_out)`.
pub(crate) fn parallel_layer<T: Real>(
    layer: &MfpLayer<T>,
    input: &[T],
    t_steps: usize,
    batch: usize,
    cfg: &NeuronConfig,
    ops: &mut OpCount,
) -> Result<(Vec<bool>, Vec<T>)> {
    let (fan_in, fan_out) = (layer.weights.fan_in(), layer.weights.fan_out());
    if layer.mix.order() != t_steps {
        return Err(Error::shape(format!(
            "mix matrix has order {} but input has T={t_steps}",
            layer.mix.order()
        )));
    }
    if input.len() != t_steps * batch * fan_in {
        return Err(Error::shape(format!(
            "layer expects {fan_in} input features, got {} values for T={t_steps}, B={batch}",
            input.len()
        )));
    }
    ops.ac_ops += (input.iter().filter(|&&v| v != T::zero()).count() * fan_out) as u64;

    let width = batch * fan_out;
    let y = synaptic_currents(
        layer.weights.synaptic_t(),
        fan_in,
        fan_out,
        input,
        t_steps * batch,
    );
    let p = mix_time(layer.mix.tri(), &y, t_steps, width);
    ops.mac_ops += (t_steps * (t_steps + 1) / 2 * width) as u64;

    let alpha = layer.weights.scale();
    if layer.weights.is_binary() {
        ops.mac_ops += (t_steps * width) as u64;
    }
    let v_th = T::from_f64(cfg.v_th);
    let h: Vec<T> = p.iter().map(|&v| alpha * v).collect();
    let spikes = h.iter().map(|&v| fires(v, v_th)).collect();
    Ok((spikes, h))
}

/// Whole-sequence forward of one layer: one synaptic matmul over all
/// `T·B` rows, then the lower-triangular temporal mix.
pub fn mfp_parallel_forward<T: Real>(
    layer: &MfpLayer<T>,
    input: &SpikeTrain,
    cfg: &NeuronConfig,
) -> Result<(SpikeTrain, Tensor<T>)> {
    let (t_steps, batch) = (input.t_steps(), input.batch());
    let fan_out = layer.weights.fan_out();
    let (spikes, h) = parallel_layer(
        layer,
        &input.to_values(),
        t_steps,
        batch,
        cfg,
        &mut OpCount::default(),
    )?;
    let out = SpikeTrain::from_fn(t_steps, batch, fan_out, |t, b, n| {
        spikes[(t * batch + b) * fan_out + n]
    });
    Ok((out, Tensor::new(&[t_steps, batch, fan_out], h)?))
}

/// Per-layer state of the streaming engine: `T` partial sums per neuron.
///
/// After consuming steps `0..t`, slot `j` of a neuron holds
/// `Σ_{i < t} M[j][i]·Y[i]`. No membrane potential is kept.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamingState<T> {
    t_steps: usize,
    batch: usize,
    width: usize,
    cursor: usize,
    // neuron-major: acc[neuron * t_steps + j]
    acc: Vec<T>,
}

impl<T: Real> StreamingState<T> {
    pub fn new(t_steps: usize, batch: usize, width: usize) -> Self {
        Self {
            t_steps,
            batch,
            width,
            cursor: 0,
            acc: vec![T::zero(); t_steps * batch * width],
        }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn neurons(&self) -> usize {
        self.batch * self.width
    }

    pub fn accumulators_per_neuron(&self) -> usize {
        self.t_steps
    }

    /// Stored membrane potentials. Always zero for this engine.
    pub fn membrane_slots(&self) -> usize {
        0
    }

    /// Total persistent values; equals `neurons · T`.
    pub fn persistent_len(&self) -> usize {
        self.acc.len()
    }

    pub fn partial_sum(&self, neuron: usize, j: usize) -> T {
        self.acc[neuron * self.t_steps + j]
    }
}

pub(crate) fn streaming_step<T: Real>(
    state: &mut StreamingState<T>,
    layer: &MfpLayer<T>,
    frame: &SpikeFrame,
    t: usize,
    cfg: &NeuronConfig,
    ops: &mut OpCount,
) -> Result<(SpikeFrame, Vec<T>)> {
    if t != state.cursor {
        return Err(Error::Sequencing {
            expected: state.cursor,
            got: t,
        });
    }
    if t >= state.t_steps {
        return Err(Error::Range {
            t,
            t_steps: state.t_steps,
        });
    }
    let (fan_in, fan_out) = (layer.weights.fan_in(), layer.weights.fan_out());
    if frame.features != fan_in || frame.batch != state.batch || fan_out != state.width {
        return Err(Error::shape(format!(
            "streaming step: frame {}x{} for a {fan_in}->{fan_out} layer with batch {}",
            frame.batch, frame.features, state.batch
        )));
    }
    if layer.mix.order() != state.t_steps {
        return Err(Error::shape("mix order differs from streaming state T"));
    }
    count_input_ac(&frame.bits, fan_out, ops);
    let y = synaptic_currents(
        layer.weights.synaptic_t(),
        fan_in,
        fan_out,
        &frame.to_values(),
        frame.batch,
    );

    let tt = state.t_steps;
    let column: Vec<T> = (t..tt).map(|j| layer.mix.tri().get(j, t)).collect();
    for (k, &yk) in y.iter().enumerate() {
        let slots = &mut state.acc[k * tt + t..(k + 1) * tt];
        for (a, &m) in slots.iter_mut().zip(&column) {
            *a += m * yk;
        }
    }
    ops.mac_ops += (column.len() * y.len()) as u64;

    let alpha = layer.weights.scale();
    if layer.weights.is_binary() {
        ops.mac_ops += y.len() as u64;
    }
    let v_th = T::from_f64(cfg.v_th);
    let h: Vec<T> = (0..y.len())
        .map(|k| alpha * state.acc[k * tt + t])
        .collect();
    let bits = h.iter().map(|&v| fires(v, v_th)).collect();
    state.cursor += 1;
    Ok((
        SpikeFrame {
            batch: frame.batch,
            features: fan_out,
            bits,
        },
        h,
    ))
}

/// Consumes the spikes of step `t` and emits that step's output spikes and
/// potentials `Ĥ[t]`. Steps must arrive in order `0, 1, …, T-1`.
pub fn mfp_streaming_step<T: Real>(
    state: &mut StreamingState<T>,
    layer: &MfpLayer<T>,
    input_spikes_t: &SpikeFrame,
    t: usize,
    cfg: &NeuronConfig,
) -> Result<(SpikeFrame, Vec<T>)> {
    streaming_step(
        state,
        layer,
        input_spikes_t,
        t,
        cfg,
        &mut OpCount::default(),
    )
}

pub(crate) fn folded_step<T: Real>(
    layer: &MfpLayer<T>,
    folded: &FoldedThresholds<T>,
    frame: &SpikeFrame,
    t: usize,
    ops: &mut OpCount,
) -> Result<SpikeFrame> {
    if t >= folded.per_step.len() {
        return Err(Error::Range {
            t,
            t_steps: folded.per_step.len(),
        });
    }
    let (fan_in, fan_out) = (layer.weights.fan_in(), layer.weights.fan_out());
    if frame.features != fan_in {
        return Err(Error::shape(format!(
            "folded step: {} input features for fan-in {fan_in}",
            frame.features
        )));
    }
    count_input_ac(&frame.bits, fan_out, ops);
    let y = synaptic_currents(
        layer.weights.synaptic_t(),
        fan_in,
        fan_out,
        &frame.to_values(),
        frame.batch,
    );
    let threshold = folded.per_step[t];
    Ok(SpikeFrame {
        batch: frame.batch,
        features: fan_out,
        bits: y.iter().map(|&v| fires(v, threshold)).collect(),
    })
}

/// Stateless serial step: `spike = Θ(Ŵ·S[t] − θ[t])` with folded threshold
/// `θ[t]`.
pub fn mfp_folded_step<T: Real>(
    layer: &MfpLayer<T>,
    folded: &FoldedThresholds<T>,
    input_spikes_t: &SpikeFrame,
    t: usize,
) -> Result<SpikeFrame> {
    folded_step(layer, folded, input_spikes_t, t, &mut OpCount::default())
}
