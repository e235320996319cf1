//! Wall-clock comparison of the parallel and streaming engines on a
//! training-shaped forward: both keep every layer's `Ĥ` for a later
//! backward pass.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::neurons::{streaming_step, Network, SpikeFrame, SpikeTrain, StreamingState};
use crate::tensor::Real;
use crate::training::{forward_cached, ForwardKind, SurrogateSpec};

use super::OpCount;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub t_steps: usize,
    pub batch: usize,
    pub repeats: usize,
    pub parallel_ms: f64,
    pub serial_ms: f64,
    /// `serial_ms / parallel_ms`
    pub speedup: f64,
    pub outputs_match: bool,
}

impl BenchResult {
    pub const CSV_HEADER: &'static str =
        "t_steps,batch,repeats,parallel_ms,serial_ms,speedup,outputs_match";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{}",
            self.t_steps,
            self.batch,
            self.repeats,
            self.parallel_ms,
            self.serial_ms,
            self.speedup,
            self.outputs_match
        )
    }
}

/// Bernoulli(`rate`) spikes for benchmarking and verification.
pub fn random_spikes(
    t_steps: usize,
    batch: usize,
    features: usize,
    rate: f64,
    seed: u64,
) -> SpikeTrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpikeTrain::from_fn(t_steps, batch, features, |_, _, _| rng.random_bool(rate))
}

/// Per-layer `Ĥ` blocks `(T, B, N)` from a timestep-major streaming run.
fn serial_forward<T: Real>(net: &Network<T>, input: &SpikeTrain) -> Result<Vec<Vec<T>>> {
    let (tt, batch) = (input.t_steps(), input.batch());
    let mut states: Vec<StreamingState<T>> = net
        .layers
        .iter()
        .map(|l| StreamingState::new(tt, batch, l.weights.fan_out()))
        .collect();
    let mut cache: Vec<Vec<T>> = net
        .layers
        .iter()
        .map(|l| Vec::with_capacity(tt * batch * l.weights.fan_out()))
        .collect();
    let mut ops = OpCount::default();
    for t in 0..tt {
        let mut frame: SpikeFrame = input.frame(t);
        for (l, layer) in net.layers.iter().enumerate() {
            let (next, h) = streaming_step(&mut states[l], layer, &frame, t, &net.cfg, &mut ops)?;
            cache[l].extend(h);
            frame = next;
        }
    }
    Ok(cache)
}

fn parallel_forward<T: Real>(net: &Network<T>, input: &SpikeTrain) -> Result<Vec<Vec<T>>> {
    let cache = forward_cached(net, input, ForwardKind::Exact, &SurrogateSpec::default())?;
    Ok(cache.layers.into_iter().map(|l| l.potentials).collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall-clock of `repeats` timed forwards per engine after one
/// untimed warm-up each. Runs alternate between the engines so drift in
/// machine load hits both alike.
pub fn bench_parallel_vs_serial<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    repeats: usize,
) -> Result<BenchResult> {
    if repeats < 5 {
        return Err(Error::config(format!(
            "bench.repeats must be >= 5, got {repeats}"
        )));
    }
    if input.t_steps() != net.t_steps() {
        return Err(Error::shape(format!(
            "input has T={}, network T={}",
            input.t_steps(),
            net.t_steps()
        )));
    }
    let reference = parallel_forward(net, input)?;
    let serial = serial_forward(net, input)?;
    let mut outputs_match = reference == serial;

    let mut par = Vec::with_capacity(repeats);
    let mut ser = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let p = parallel_forward(net, input)?;
        par.push(start.elapsed().as_secs_f64() * 1e3);
        let start = Instant::now();
        let s = serial_forward(net, input)?;
        ser.push(start.elapsed().as_secs_f64() * 1e3);
        outputs_match &= p == reference && s == reference;
    }
    let (parallel_ms, serial_ms) = (median(par), median(ser));
    Ok(BenchResult {
        t_steps: input.t_steps(),
        batch: input.batch(),
        repeats,
        parallel_ms,
        serial_ms,
        speedup: serial_ms / parallel_ms,
        outputs_match,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Architecture;
    use crate::neurons::NeuronConfig;

    #[test]
    fn engines_agree_and_repeats_checked() {
        let net = Network::<f32>::init(
            &Architecture::binary_stack(&[12, 16, 4]),
            5,
            NeuronConfig::default(),
            1,
        )
        .unwrap();
        let input = random_spikes(5, 3, 12, 0.4, 2);
        let r = bench_parallel_vs_serial(&net, &input, 5).unwrap();
        assert!(r.outputs_match);
        assert!(r.parallel_ms > 0.0 && r.serial_ms > 0.0);
        assert!(bench_parallel_vs_serial(&net, &input, 4).is_err());
        assert_eq!(
            r.csv_row().split(',').count(),
            BenchResult::CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
