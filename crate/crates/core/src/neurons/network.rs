//! Layer stacks and whole-network forward passes in every engine mode.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mfp::{folded_step, parallel_layer, streaming_step, time_mean};
use super::{
    NeuronConfig, SpikeFrame, SpikeTrain, StreamingState, TemporalMixMatrix, DEFAULT_MIX_DECAY,
};
use crate::analysis::OpCount;
use crate::arch::{Architecture, LayerSpec};
use crate::error::{Error, Result};
use crate::quant::{binarize, fold_thresholds, BinaryLinear, FoldMode, FoldedThresholds};
use crate::tensor::{Real, Tensor};

/// Synaptic weights of a layer: sign-binarized or full precision.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights<T> {
    Binary(BinaryLinear<T>),
    Dense(DenseLinear<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLinear<T> {
    weight: Tensor<T>,
    weight_t: Vec<T>,
}

impl<T: Real> DenseLinear<T> {
    pub fn new(weight: Tensor<T>) -> Result<Self> {
        let weight_t = weight.transpose()?.into_data();
        Ok(Self { weight, weight_t })
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }
}

impl<T: Real> Weights<T> {
    /// Wraps `latent` (fan_out × fan_in) according to `weight_bits`.
    pub fn from_latent(latent: Tensor<T>, weight_bits: u32) -> Result<Self> {
        match weight_bits {
            1 => Ok(Weights::Binary(binarize(&latent)?)),
            32 => Ok(Weights::Dense(DenseLinear::new(latent)?)),
            b => Err(Error::config(format!(
                "weight_bits must be 1 or 32, got {b}"
            ))),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.latent().cols()
    }

    pub fn fan_out(&self) -> usize {
        self.latent().rows()
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Weights::Binary(_))
    }

    pub fn weight_bits(&self) -> u32 {
        if self.is_binary() {
            1
        } else {
            32
        }
    }

    /// `α` for binary layers, 1 otherwise.
    pub fn scale(&self) -> T {
        match self {
            Weights::Binary(b) => b.scale(),
            Weights::Dense(_) => T::one(),
        }
    }

    /// Values multiplying input spikes, transposed to `(fan_in × fan_out)`:
    /// the ±1 signs for binary layers, the raw weights otherwise.
    pub fn synaptic_t(&self) -> &[T] {
        match self {
            Weights::Binary(b) => b.signs_transposed(),
            Weights::Dense(d) => &d.weight_t,
        }
    }

    pub fn latent(&self) -> &Tensor<T> {
        match self {
            Weights::Binary(b) => b.latent(),
            Weights::Dense(d) => &d.weight,
        }
    }

    pub(crate) fn latent_mut(&mut self) -> &mut [T] {
        match self {
            Weights::Binary(b) => b.latent_mut(),
            Weights::Dense(d) => d.weight.data_mut(),
        }
    }

    /// Replaces the latent weights (same shape) and refreshes.
    pub fn set_latent(&mut self, latent: Tensor<T>) -> Result<()> {
        if latent.shape() != self.latent().shape() {
            return Err(Error::shape(format!(
                "latent {:?} does not match layer {:?}",
                latent.shape(),
                self.latent().shape()
            )));
        }
        self.latent_mut().copy_from_slice(latent.data());
        self.refresh();
        Ok(())
    }

    /// Re-derives everything computed from the latent weights.
    pub fn refresh(&mut self) {
        match self {
            Weights::Binary(b) => b.rebinarize(),
            Weights::Dense(d) => {
                d.weight_t = d.weight.transpose().expect("2-D weight").into_data();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MfpLayer<T> {
    pub weights: Weights<T>,
    pub mix: TemporalMixMatrix<T>,
}

impl<T: Real> MfpLayer<T> {
    pub fn fold(&self, v_th: f64, mode: FoldMode) -> Result<FoldedThresholds<T>> {
        fold_thresholds(
            self.mix.tri(),
            T::from_f64(v_th),
            self.weights.scale(),
            mode,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<MfpLayer<T>>,
    pub cfg: NeuronConfig,
    t_steps: usize,
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<MfpLayer<T>>, cfg: NeuronConfig, t_steps: usize) -> Result<Self> {
        let net = Self {
            layers,
            cfg,
            t_steps,
        };
        net.architecture().validate()?;
        if let Some((i, _)) = net
            .layers
            .iter()
            .enumerate()
            .find(|(_, l)| l.mix.order() != t_steps)
        {
            return Err(Error::config(format!(
                "layers[{i}]: mix matrix order differs from T={t_steps}"
            )));
        }
        Ok(net)
    }

    /// Seeded initialization: latent weights uniform in `±1/√fan_in`, mix
    /// matrices LIF-like with decay 0.5.
    pub fn init(arch: &Architecture, t_steps: usize, cfg: NeuronConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        if t_steps == 0 {
            return Err(Error::config("t_steps must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .layers
            .iter()
            .map(|spec| {
                let bound = 1.0 / (spec.fan_in as f64).sqrt();
                let data = (0..spec.weights())
                    .map(|_| T::from_f64(rng.random_range(-bound..bound)))
                    .collect();
                Ok(MfpLayer {
                    weights: Weights::from_latent(
                        Tensor::new(&[spec.fan_out, spec.fan_in], data)?,
                        spec.weight_bits,
                    )?,
                    mix: TemporalMixMatrix::lif_like(t_steps, DEFAULT_MIX_DECAY),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(layers, cfg, t_steps)
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    fan_in: l.weights.fan_in(),
                    fan_out: l.weights.fan_out(),
                    weight_bits: l.weights.weight_bits(),
                })
                .collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.fan_out()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Layer-major, whole sequence per layer.
    Parallel,
    /// Timestep-major with exact running sums.
    Streaming,
    /// Timestep-major with thresholds folded from the diagonal of `M⁻¹`.
    FoldedDiagonal,
    /// Timestep-major with thresholds folded from row sums of `M⁻¹`.
    FoldedRowsum,
}

impl Mode {
    pub fn fold_mode(self) -> Option<FoldMode> {
        match self {
            Mode::FoldedDiagonal => Some(FoldMode::Diagonal),
            Mode::FoldedRowsum => Some(FoldMode::Rowsum),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Parallel => "parallel",
            Mode::Streaming => "streaming",
            Mode::FoldedDiagonal => "folded-diag",
            Mode::FoldedRowsum => "folded-rowsum",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Mode::Parallel),
            "streaming" => Ok(Mode::Streaming),
            "folded-diag" | "folded-diagonal" => Ok(Mode::FoldedDiagonal),
            "folded-rowsum" => Ok(Mode::FoldedRowsum),
            other => Err(Error::config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutput<T> {
    /// Mean over time of the last layer's potentials, `(B × classes)`.
    pub logits: Tensor<T>,
    /// Output spikes of every layer.
    pub spikes: Vec<SpikeTrain>,
    /// Last layer's potentials `Ĥ`, `(T, B, classes)`.
    pub readout: Tensor<T>,
}

pub fn network_forward<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    mode: Mode,
) -> Result<NetworkOutput<T>> {
    network_forward_counted(net, input, mode, &mut OpCount::default())
}

/// [`network_forward`] that also tallies AC and MAC operations into `ops`.
///
/// AC: one per (input spike, fan-out synapse). MAC: one per temporal mix
/// product and one per `α` scaling of a binary layer. Folded layers perform
/// no MACs; the readout layer always keeps exact running sums because the
/// logits need its potentials.
pub fn network_forward_counted<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    mode: Mode,
    ops: &mut OpCount,
) -> Result<NetworkOutput<T>> {
    if input.t_steps() != net.t_steps {
        return Err(Error::shape(format!(
            "input has T={} but the network was built for T={}",
            input.t_steps(),
            net.t_steps
        )));
    }
    if input.features() != net.input_width() {
        return Err(Error::shape(format!(
            "input has {} features, network expects {}",
            input.features(),
            net.input_width()
        )));
    }
    match mode {
        Mode::Parallel => forward_parallel(net, input, ops),
        _ => forward_serial(net, input, mode, ops),
    }
}

fn forward_parallel<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    ops: &mut OpCount,
) -> Result<NetworkOutput<T>> {
    let (t_steps, batch) = (input.t_steps(), input.batch());
    let mut values: Vec<T> = input.to_values();
    let mut spikes = Vec::with_capacity(net.layers.len());
    let mut last_h = Vec::new();
    for layer in &net.layers {
        let fan_out = layer.weights.fan_out();
        let (s, h) = parallel_layer(layer, &values, t_steps, batch, &net.cfg, ops)?;
        values = s
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect();
        spikes.push(SpikeTrain::from_values(t_steps, batch, fan_out, &values)?);
        last_h = h;
    }
    finish(net, spikes, last_h, t_steps, batch)
}

fn forward_serial<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    mode: Mode,
    ops: &mut OpCount,
) -> Result<NetworkOutput<T>> {
    let (t_steps, batch) = (input.t_steps(), input.batch());
    let last = net.layers.len() - 1;
    let folded: Vec<Option<FoldedThresholds<T>>> = match mode.fold_mode() {
        Some(fm) => net
            .layers
            .iter()
            .map(|l| l.fold(net.cfg.v_th, fm).map(Some))
            .collect::<Result<_>>()?,
        None => vec![None; net.layers.len()],
    };
    let mut states: Vec<Option<StreamingState<T>>> = net
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            (folded[i].is_none() || i == last)
                .then(|| StreamingState::new(t_steps, batch, l.weights.fan_out()))
        })
        .collect();
    let mut frames: Vec<Vec<SpikeFrame>> = vec![Vec::with_capacity(t_steps); net.layers.len()];
    let mut last_h = Vec::with_capacity(t_steps * batch * net.output_width());

    for t in 0..t_steps {
        let mut frame = input.frame(t);
        for (i, layer) in net.layers.iter().enumerate() {
            let next = match (&folded[i], states[i].as_mut()) {
                (Some(th), Some(state)) => {
                    // readout layer: folded spikes, exact potentials for logits
                    let spikes = folded_step(layer, th, &frame, t, ops)?;
                    let (_, h) =
                        streaming_step(state, layer, &frame, t, &net.cfg, &mut OpCount::default())?;
                    let width = h.len() as u64;
                    ops.mac_ops += width * (t_steps - t) as u64;
                    if layer.weights.is_binary() {
                        ops.mac_ops += width;
                    }
                    last_h.extend(h);
                    spikes
                }
                (Some(th), None) => folded_step(layer, th, &frame, t, ops)?,
                (None, Some(state)) => {
                    let (spikes, h) = streaming_step(state, layer, &frame, t, &net.cfg, ops)?;
                    if i == last {
                        last_h.extend(h);
                    }
                    spikes
                }
                (None, None) => unreachable!("every unfolded layer has a streaming state"),
            };
            frames[i].push(next.clone());
            frame = next;
        }
    }
    let spikes = frames
        .iter()
        .map(|f| SpikeTrain::from_frames(f))
        .collect::<Result<Vec<_>>>()?;
    finish(net, spikes, last_h, t_steps, batch)
}

fn finish<T: Real>(
    net: &Network<T>,
    spikes: Vec<SpikeTrain>,
    last_h: Vec<T>,
    t_steps: usize,
    batch: usize,
) -> Result<NetworkOutput<T>> {
    let classes = net.output_width();
    let logits = time_mean(&last_h, t_steps, batch * classes);
    Ok(NetworkOutput {
        logits: Tensor::new(&[batch, classes], logits)?,
        spikes,
        readout: Tensor::new(&[t_steps, batch, classes], last_h)?,
    })
}

/// Location of a spike that differs between two runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub layer: usize,
    pub t: usize,
    pub batch: usize,
    pub neuron: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeComparison {
    pub mode: Mode,
    pub compared: usize,
    pub mismatched: usize,
    pub first: Option<Mismatch>,
    pub logits_identical: bool,
}

impl ModeComparison {
    pub fn divergence_rate(&self) -> f64 {
        if self.compared == 0 {
            0.0
        } else {
            self.mismatched as f64 / self.compared as f64
        }
    }
}

/// Runs `input` through the parallel engine and through `mode`, comparing
/// every layer's spikes element by element.
pub fn compare_modes<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    mode: Mode,
) -> Result<ModeComparison> {
    let reference = network_forward(net, input, Mode::Parallel)?;
    let other = network_forward(net, input, mode)?;
    let mut cmp = ModeComparison {
        mode,
        compared: 0,
        mismatched: 0,
        first: None,
        logits_identical: reference.logits == other.logits,
    };
    for (layer, (a, b)) in reference.spikes.iter().zip(&other.spikes).enumerate() {
        for t in 0..a.t_steps() {
            for bi in 0..a.batch() {
                for n in 0..a.features() {
                    cmp.compared += 1;
                    if a.get(t, bi, n) != b.get(t, bi, n) {
                        cmp.mismatched += 1;
                        cmp.first.get_or_insert(Mismatch {
                            layer,
                            t,
                            batch: bi,
                            neuron: n,
                        });
                    }
                }
            }
        }
    }
    Ok(cmp)
}
