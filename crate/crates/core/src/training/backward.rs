//! Cached parallel forward and its reverse pass.
//!
//! Per layer the forward is linear in everything but the spike function:
//!
//! ```text
//! Y = S_in·Wᵀ       (T·B rows)
//! P[t] = Σ_{i≤t} M[t][i]·Y[i]
//! Ĥ = α·P
//! ```
//!
//! so the reverse pass is three transposed products plus the surrogate at the
//! spike nonlinearity and the straight-through mask at the binarizer.

use super::{surrogate_grad_slice, SurrogateSpec};
use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::neurons::{
    mix_time, synaptic_currents, time_mean, MfpLayer, Network, SpikeTrain, Weights,
};
use crate::quant::DEFAULT_STE_CLIP;
use crate::tensor::{matmul_into, Real, Tensor};

/// How the non-differentiable pieces are evaluated in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardKind {
    /// Sign weights with scale `α`, Heaviside spikes. What training runs.
    Exact,
    /// Binary layers use `clamp(latent, ±1)` with unit scale and spikes use
    /// the clipped ramp `clamp(Ĥ − v_th + a, 0, 2a)`. Its exact derivatives
    /// are the straight-through and surrogate rules, which makes it the
    /// reference for finite-difference checks.
    Smoothed,
}

/// Everything the reverse pass needs from one layer's forward.
#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    pub t_steps: usize,
    pub batch: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    /// Input activations, `(T·B × fan_in)`.
    pub input: Vec<T>,
    /// Weight values multiplying the input, `(fan_out × fan_in)`. Empty on
    /// the exact path, where they are the layer's own signs or weights.
    pub weight_values: Vec<T>,
    pub scale: T,
    /// `Y`, `(T·B × fan_out)`.
    pub currents: Vec<T>,
    /// `Ĥ`, `(T·B × fan_out)`.
    pub potentials: Vec<T>,
    /// Last layer: potentials feed the readout directly, no spike function.
    pub readout: bool,
}

#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub layers: Vec<LayerCache<T>>,
    /// `(B × classes)`
    pub logits: Tensor<T>,
}

fn smoothed_weights<T: Real>(weights: &Weights<T>) -> Vec<T> {
    match weights {
        Weights::Binary(b) => {
            let clip = T::from_f64(DEFAULT_STE_CLIP);
            b.latent()
                .data()
                .iter()
                .map(|&x| x.max(-clip).min(clip))
                .collect()
        }
        Weights::Dense(d) => d.weight().data().to_vec(),
    }
}

fn transpose_generic<T: Real>(w: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = w[i * cols + j];
        }
    }
    out
}

fn activate<T: Real>(h: &[T], kind: ForwardKind, v_th: T, width: T) -> Vec<T> {
    match kind {
        ForwardKind::Exact => h
            .iter()
            .map(|&v| {
                if crate::neurons::fires(v, v_th) {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect(),
        ForwardKind::Smoothed => {
            let two = width + width;
            h.iter()
                .map(|&v| (v - v_th + width).max(T::zero()).min(two))
                .collect()
        }
    }
}

/// Parallel forward over the whole network, keeping every layer's
/// intermediates. In [`ForwardKind::Exact`] the arithmetic is the same as
/// [`crate::neurons::network_forward`] in parallel mode.
pub fn forward_cached<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    kind: ForwardKind,
    surrogate: &SurrogateSpec,
) -> Result<ForwardCache<T>> {
    if input.t_steps() != net.t_steps() || input.features() != net.input_width() {
        return Err(Error::shape(format!(
            "input {}x{}x{} does not fit network (T={}, inputs={})",
            input.t_steps(),
            input.batch(),
            input.features(),
            net.t_steps(),
            net.input_width()
        )));
    }
    let (t_steps, batch) = (input.t_steps(), input.batch());
    let v_th = T::from_f64(net.cfg.v_th);
    let width = T::from_f64(surrogate.width);
    let last = net.layers.len() - 1;
    let mut x: Vec<T> = input.to_values();
    let mut layers = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let (fan_in, fan_out) = (layer.weights.fan_in(), layer.weights.fan_out());
        let (w, scale, currents) = match kind {
            ForwardKind::Exact => (
                Vec::new(),
                layer.weights.scale(),
                synaptic_currents(
                    layer.weights.synaptic_t(),
                    fan_in,
                    fan_out,
                    &x,
                    t_steps * batch,
                ),
            ),
            ForwardKind::Smoothed => {
                let w = smoothed_weights(&layer.weights);
                let y = synaptic_currents(
                    &transpose_generic(&w, fan_out, fan_in),
                    fan_in,
                    fan_out,
                    &x,
                    t_steps * batch,
                );
                (w, T::one(), y)
            }
        };
        let mut potentials = mix_time(layer.mix.tri(), &currents, t_steps, batch * fan_out);
        potentials.iter_mut().for_each(|v| *v = scale * *v);
        let next = if l == last {
            Vec::new()
        } else {
            activate(&potentials, kind, v_th, width)
        };
        layers.push(LayerCache {
            t_steps,
            batch,
            fan_in,
            fan_out,
            input: std::mem::replace(&mut x, next),
            weight_values: w,
            scale,
            currents,
            potentials,
            readout: l == last,
        });
    }
    let out = layers.last().expect("at least one layer");
    let logits = time_mean(&out.potentials, t_steps, batch * out.fan_out);
    Ok(ForwardCache {
        logits: Tensor::new(&[batch, out.fan_out], logits)?,
        layers,
    })
}

/// Gradients of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    /// With respect to the latent weights, `(fan_out × fan_in)`.
    pub latent: Tensor<T>,
    /// With respect to the packed lower-triangular mix entries.
    pub mix: Vec<T>,
    /// With respect to the layer input, `(T·B × fan_in)`.
    pub input: Vec<T>,
}

/// Reverse pass through one parallel layer.
///
/// `upstream` is `∂L/∂S_out` for a spiking layer (it is multiplied by the
/// surrogate derivative here) and `∂L/∂Ĥ` for the readout layer.
pub fn backward_parallel<T: Real>(
    layer: &MfpLayer<T>,
    cache: &LayerCache<T>,
    upstream: &[T],
    v_th: f64,
    surrogate: &SurrogateSpec,
) -> Result<LayerGrads<T>> {
    let (tt, bb, fan_in, fan_out) = (cache.t_steps, cache.batch, cache.fan_in, cache.fan_out);
    let rows = tt * bb;
    let width = bb * fan_out;
    if layer.weights.fan_in() != fan_in
        || layer.weights.fan_out() != fan_out
        || layer.mix.order() != tt
        || cache.potentials.len() != rows * fan_out
        || cache.input.len() != rows * fan_in
    {
        return Err(Error::MissingCache("cache does not belong to this layer"));
    }
    if upstream.len() != rows * fan_out {
        return Err(Error::shape(format!(
            "upstream gradient has {} values, layer output has {}",
            upstream.len(),
            rows * fan_out
        )));
    }

    let d_h: Vec<T> = if cache.readout {
        upstream.to_vec()
    } else {
        let sg = surrogate_grad_slice(
            &cache.potentials,
            T::from_f64(v_th),
            T::from_f64(surrogate.width),
        );
        upstream.iter().zip(&sg).map(|(&g, &s)| g * s).collect()
    };

    // mix entries: dM[t][i] = α·<dĤ[t], Y[i]>
    let mix = layer.mix.tri();
    let mut d_mix = Vec::with_capacity(mix.packed().len());
    for t in 0..tt {
        let dh_t = &d_h[t * width..(t + 1) * width];
        for i in 0..=t {
            let y_i = &cache.currents[i * width..(i + 1) * width];
            let mut s = T::zero();
            for (&a, &b) in dh_t.iter().zip(y_i) {
                s += a * b;
            }
            d_mix.push(cache.scale * s);
        }
    }

    // dQ[i] = α·Σ_{t≥i} M[t][i]·dĤ[t]: gradient with respect to Y·α
    let mut d_q = vec![T::zero(); rows * fan_out];
    for i in 0..tt {
        let out = &mut d_q[i * width..(i + 1) * width];
        for t in i..tt {
            let m = mix.get(t, i);
            for (o, &g) in out.iter_mut().zip(&d_h[t * width..(t + 1) * width]) {
                *o += m * g;
            }
        }
    }

    // effective weight W_eff = α·W: dW_eff = dQᵀ·S_in
    let input_t = transpose_generic(&cache.input, rows, fan_in);
    let mut d_w_t = vec![T::zero(); fan_in * fan_out];
    matmul_into(&input_t, &d_q, &mut d_w_t, fan_in, rows, fan_out);
    let d_w = Tensor::new(
        &[fan_out, fan_in],
        transpose_generic(&d_w_t, fan_in, fan_out),
    )?;

    let latent = match &layer.weights {
        Weights::Binary(b) => {
            crate::quant::ste_grad(&d_w, b.latent(), T::from_f64(DEFAULT_STE_CLIP))?
        }
        Weights::Dense(_) => d_w,
    };

    // dS_in = α·dQ·W
    let mut d_in = vec![T::zero(); rows * fan_in];
    let own;
    let w = if cache.weight_values.is_empty() {
        own = transpose_generic(layer.weights.synaptic_t(), fan_in, fan_out);
        &own
    } else {
        &cache.weight_values
    };
    matmul_into(&d_q, w, &mut d_in, rows, fan_out, fan_in);
    if cache.scale != T::one() {
        d_in.iter_mut().for_each(|v| *v *= cache.scale);
    }

    Ok(LayerGrads {
        latent,
        mix: d_mix,
        input: d_in,
    })
}

/// Mean cross-entropy of `logits` (B × C) and its gradient.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (b, c) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(Error::shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    let inv_b = T::one() / T::from_usize(b);
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(&[b, c]);
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::LabelOutOfRange {
                index: i,
                label,
                classes: c,
            });
        }
        let row = &logits.data()[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for &v in row {
            z += (v - max).exp();
        }
        let log_z = z.ln() + max;
        loss += (log_z - row[label]) * inv_b;
        for (j, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            let target = if j == label { T::one() } else { T::zero() };
            grad.set2(i, j, (p - target) * inv_b);
        }
    }
    Ok((loss, grad))
}

pub fn loss<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    labels: &[usize],
    kind: ForwardKind,
    surrogate: &SurrogateSpec,
) -> Result<T> {
    let cache = forward_cached(net, input, kind, surrogate)?;
    Ok(cross_entropy(&cache.logits, labels)?.0)
}

/// Loss and per-layer gradients for one batch.
pub fn loss_and_gradients<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    labels: &[usize],
    kind: ForwardKind,
    surrogate: &SurrogateSpec,
) -> Result<(T, Vec<LayerGrads<T>>, ForwardCache<T>)> {
    let cache = forward_cached(net, input, kind, surrogate)?;
    let (loss, d_logits) = cross_entropy(&cache.logits, labels)?;
    let tt = net.t_steps();
    // logits are a time mean: every step receives dz / T
    let inv_t = T::one() / T::from_usize(tt);
    let per_step: Vec<T> = d_logits.data().iter().map(|&g| g * inv_t).collect();
    let mut upstream: Vec<T> = (0..tt).flat_map(|_| per_step.iter().copied()).collect();

    let mut grads = Vec::with_capacity(net.layers.len());
    for (layer, lc) in net.layers.iter().zip(&cache.layers).rev() {
        let g = backward_parallel(layer, lc, &upstream, net.cfg.v_th, surrogate)?;
        upstream = g.input.clone();
        grads.push(g);
    }
    grads.reverse();
    Ok((loss, grads, cache))
}

/// Full-dataset loss and accuracy with the exact forward, in fixed-size
/// chunks.
pub fn evaluate<T: Real>(net: &Network<T>, data: &Dataset, chunk: usize) -> Result<(f64, f64)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let surrogate = SurrogateSpec::default();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..n).collect();
    for part in idx.chunks(chunk.max(1)) {
        let (x, y) = data.batch(part);
        let cache = forward_cached(net, &x, ForwardKind::Exact, &surrogate)?;
        let (l, _) = cross_entropy(&cache.logits, &y)?;
        loss_sum += l.as_f64() * part.len() as f64;
        let c = cache.logits.cols();
        for (i, &label) in y.iter().enumerate() {
            let row = &cache.logits.data()[i * c..(i + 1) * c];
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            correct += usize::from(best == label);
        }
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Architecture;
    use crate::neurons::{network_forward, Mode, NeuronConfig, TemporalMixMatrix};
    use crate::quant::binarize;
    use crate::tri::LowerTriangular;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(t: usize, b: usize, n: usize, seed: u64) -> SpikeTrain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpikeTrain::from_fn(t, b, n, |_, _, _| rng.random_bool(0.5))
    }

    #[test]
    fn exact_forward_matches_engine() {
        let arch = Architecture::binary_stack(&[6, 9, 3]);
        let net = Network::<f32>::init(
            &arch,
            4,
            NeuronConfig {
                v_th: 0.3,
                ..NeuronConfig::default()
            },
            3,
        )
        .unwrap();
        let input = random_input(4, 3, 6, 1);
        let cache =
            forward_cached(&net, &input, ForwardKind::Exact, &SurrogateSpec::default()).unwrap();
        let out = network_forward(&net, &input, Mode::Parallel).unwrap();
        assert_eq!(cache.logits, out.logits);
        assert_eq!(cache.layers[1].input, out.spikes[0].to_values::<f32>());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let arch = Architecture::binary_stack(&[5, 7, 2]);
        let net = Network::<f64>::init(&arch, 3, NeuronConfig::default(), 9).unwrap();
        let input = random_input(3, 2, 5, 4);
        let s = SurrogateSpec::default();
        let cache = forward_cached(&net, &input, ForwardKind::Exact, &s).unwrap();
        for (layer, lc) in net.layers.iter().zip(&cache.layers) {
            let up = vec![0.0; lc.potentials.len()];
            let g = backward_parallel(layer, lc, &up, 1.0, &s).unwrap();
            assert!(g.latent.data().iter().all(|&v| v == 0.0));
            assert!(g.mix.iter().all(|&v| v == 0.0));
            assert!(g.input.iter().all(|&v| v == 0.0));
            assert_eq!(g.mix.len(), 3 * 4 / 2);
        }
    }

    #[test]
    fn single_neuron_matches_hand_chain_rule() {
        // T = 1, M = [m], two inputs, one spiking output.
        let latent = Tensor::new(&[1, 2], vec![0.6f64, 0.3]).unwrap();
        let m = 1.0;
        let weights = Weights::Binary(binarize(&latent).unwrap());
        let alpha = weights.scale();
        let layer = MfpLayer {
            weights,
            mix: TemporalMixMatrix::new(LowerTriangular::diagonal(&[m])),
        };
        let net = Network::new(vec![layer.clone()], NeuronConfig::default(), 1).unwrap();
        let input = SpikeTrain::from_fn(1, 1, 2, |_, _, _| true);
        let s = SurrogateSpec::default();
        let mut cache = forward_cached(&net, &input, ForwardKind::Exact, &s).unwrap();
        cache.layers[0].readout = false;
        // Y = 2, Ĥ = 2α = 0.9: inside the unit window around v_th = 1
        assert_eq!(cache.layers[0].currents, vec![2.0]);
        let g = 2.5;
        let grads = backward_parallel(&layer, &cache.layers[0], &[g], 1.0, &s).unwrap();
        assert_eq!(grads.mix, vec![alpha * (g * 2.0)]);
        // straight-through: dL/dw_n = g · m · s_n, both latents inside the clip
        assert_eq!(grads.latent.data(), &[g * m, g * m]);
        // dL/ds_n = α · g · m · sign(w_n)
        assert_eq!(grads.input, vec![g * m * alpha, g * m * alpha]);
    }

    #[test]
    fn foreign_cache_is_rejected() {
        let a = Network::<f64>::init(
            &Architecture::binary_stack(&[4, 3]),
            2,
            NeuronConfig::default(),
            1,
        )
        .unwrap();
        let b = Network::<f64>::init(
            &Architecture::binary_stack(&[5, 3]),
            2,
            NeuronConfig::default(),
            1,
        )
        .unwrap();
        let s = SurrogateSpec::default();
        let cache = forward_cached(&b, &random_input(2, 1, 5, 0), ForwardKind::Exact, &s).unwrap();
        let up = vec![0.0; 6];
        assert!(matches!(
            backward_parallel(&a.layers[0], &cache.layers[0], &up, 1.0, &s),
            Err(Error::MissingCache(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let logits = Tensor::from_rows(&[vec![0.3f64, -1.2, 2.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let (l, g) = cross_entropy(&logits, &[2, 0]).unwrap();
        assert!(l > 0.0);
        for i in 0..2 {
            let s: f64 = (0..3).map(|j| g.at2(i, j)).sum();
            assert!(s.abs() < 1e-15);
        }
        assert!(matches!(
            cross_entropy(&logits, &[3, 0]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }
}
