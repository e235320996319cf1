#![allow(dead_code)]

use mfpq::arch::{Architecture, LayerSpec};
use mfpq::neurons::{MfpLayer, Network, NeuronConfig, SpikeTrain, TemporalMixMatrix, Weights};
use mfpq::training::{loss, loss_and_gradients, ForwardKind, SurrogateSpec};
use mfpq::{LowerTriangular, Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_spikes(rng: &mut ChaCha8Rng, t: usize, b: usize, n: usize, p: f64) -> SpikeTrain {
    SpikeTrain::from_fn(t, b, n, |_, _, _| rng.random_bool(p))
}

/// Lower-triangular with diagonal magnitude in `[0.2, 1.5]` (random sign when
/// `signed_diag`) and off-diagonal entries in `[-1, 1]`.
pub fn random_mix<T: Real>(
    rng: &mut ChaCha8Rng,
    t: usize,
    signed_diag: bool,
) -> TemporalMixMatrix<T> {
    let mut tri = LowerTriangular::identity(t);
    for i in 0..t {
        for j in 0..=i {
            let v = if i == j {
                let m: f64 = rng.random_range(0.2..1.5);
                if signed_diag && rng.random_bool(0.5) {
                    -m
                } else {
                    m
                }
            } else {
                rng.random_range(-1.0..1.0)
            };
            tri.set(i, j, T::from_f64(v));
        }
    }
    TemporalMixMatrix::new(tri)
}

pub fn random_latent<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.random_range(-1.0..1.0)))
        .collect();
    Tensor::new(&[rows, cols], data).unwrap()
}

/// Network over `widths` with random latent weights and random mix matrices.
pub fn random_network<T: Real>(
    rng: &mut ChaCha8Rng,
    widths: &[usize],
    t: usize,
    cfg: NeuronConfig,
    dense: bool,
) -> Network<T> {
    let layers = widths
        .windows(2)
        .map(|w| MfpLayer {
            weights: Weights::from_latent(
                random_latent(rng, w[1], w[0]),
                if dense { 32 } else { 1 },
            )
            .unwrap(),
            mix: random_mix(rng, t, true),
        })
        .collect();
    Network::new(layers, cfg, t).unwrap()
}

pub fn arch(widths: &[usize]) -> Architecture {
    Architecture {
        layers: widths
            .windows(2)
            .map(|w| LayerSpec::binary(w[0], w[1]))
            .collect(),
    }
}

pub struct GradCheck {
    pub parameters: usize,
    pub worst_rel: f64,
    pub worst_name: String,
}

/// Relative error `|a − n| / max(|a|, |n|)`, with pairs where both values are
/// below `floor` counted as exact.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < floor {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Compares every analytic gradient of the smoothed forward against central
/// finite differences with step `h`.
pub fn finite_difference_check(
    net: &Network<f64>,
    input: &SpikeTrain,
    labels: &[usize],
    h: f64,
    floor: f64,
) -> GradCheck {
    let s = SurrogateSpec::default();
    let (_, grads, _) = loss_and_gradients(net, input, labels, ForwardKind::Smoothed, &s).unwrap();
    let eval = |n: &Network<f64>| loss(n, input, labels, ForwardKind::Smoothed, &s).unwrap();
    let mut out = GradCheck {
        parameters: 0,
        worst_rel: 0.0,
        worst_name: String::new(),
    };
    let mut record = |name: String, analytic: f64, numeric: f64| {
        let e = rel_err(analytic, numeric, floor);
        out.parameters += 1;
        if out.parameters == 1 || e > out.worst_rel {
            out.worst_rel = e;
            out.worst_name = format!("{name}: analytic {analytic:e}, numeric {numeric:e}");
        }
    };
    for (l, g) in grads.iter().enumerate() {
        let latent = net.layers[l].weights.latent().clone();
        for k in 0..latent.len() {
            let bumped = |delta: f64| {
                let mut n = net.clone();
                let mut w = latent.clone();
                w.data_mut()[k] += delta;
                n.layers[l].weights.set_latent(w).unwrap();
                eval(&n)
            };
            let numeric = (bumped(h) - bumped(-h)) / (2.0 * h);
            record(
                format!("layers[{l}].latent[{k}]"),
                g.latent.data()[k],
                numeric,
            );
        }
        for k in 0..g.mix.len() {
            let bumped = |delta: f64| {
                let mut n = net.clone();
                n.layers[l].mix.tri_mut().packed_mut()[k] += delta;
                eval(&n)
            };
            let numeric = (bumped(h) - bumped(-h)) / (2.0 * h);
            record(format!("layers[{l}].mix[{k}]"), g.mix[k], numeric);
        }
    }
    out
}
