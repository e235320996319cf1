//! How much of each LIF pre-activation comes from the decayed membrane and
//! how much from the current input, as the membrane bit width shrinks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::neurons::{
    lif_step, qlif_step, LifState, Network, NeuronConfig, QLifState, SpikeTrain, StepTerms,
};
use crate::quant::calibrate_scale;
use crate::tensor::{matmul_into, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContributionStats {
    pub bits: Option<u32>,
    /// Mean `|τ·U[t-1]|` at each step over every neuron and sample.
    pub per_step_history: Vec<f64>,
    /// Mean `|W·S[t]|` at each step.
    pub per_step_current: Vec<f64>,
    /// `Σ|τU| / (Σ|τU| + Σ|WS|)`, 0 when both sums vanish.
    pub history_fraction: f64,
}

/// Running sums of the two terms, one slot per timestep.
#[derive(Clone, Debug, Default)]
pub struct ContributionAccumulator {
    history: Vec<f64>,
    current: Vec<f64>,
    counts: Vec<usize>,
}

impl ContributionAccumulator {
    pub fn new(t_steps: usize) -> Self {
        Self {
            history: vec![0.0; t_steps],
            current: vec![0.0; t_steps],
            counts: vec![0; t_steps],
        }
    }

    pub fn record(&mut self, t: usize, terms: &StepTerms) {
        self.history[t] += terms.history.iter().sum::<f64>();
        self.current[t] += terms.current.iter().sum::<f64>();
        self.counts[t] += terms.history.len();
    }

    pub fn finish(&self, bits: Option<u32>) -> ContributionStats {
        let mean = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(&self.counts)
                .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
                .collect()
        };
        let h: f64 = self.history.iter().sum();
        let c: f64 = self.current.iter().sum();
        ContributionStats {
            bits,
            per_step_history: mean(&self.history),
            per_step_current: mean(&self.current),
            history_fraction: if h + c == 0.0 { 0.0 } else { h / (h + c) },
        }
    }
}

/// A network re-run as recurrent LIF layers: effective weights `α·signs`
/// (or the dense weights), decay `τ`, reset and threshold from `cfg`.
#[derive(Clone, Debug)]
pub struct QlifModel {
    // transposed effective weights, (fan_in × fan_out)
    weights_t: Vec<Tensor<f64>>,
    pub cfg: NeuronConfig,
}

impl QlifModel {
    pub fn from_network<T: Real>(net: &Network<T>) -> Result<Self> {
        let weights_t = net
            .layers
            .iter()
            .map(|l| {
                let scale = l.weights.scale().as_f64();
                let fan_out = l.weights.fan_out();
                let data = l
                    .weights
                    .synaptic_t()
                    .iter()
                    .map(|&v| scale * v.as_f64())
                    .collect();
                Tensor::new(&[l.weights.fan_in(), fan_out], data)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            weights_t,
            cfg: net.cfg,
        })
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.cfg.tau = tau;
        self
    }

    fn currents(&self, layer: usize, spikes: &[f64], batch: usize) -> Tensor<f64> {
        let w = &self.weights_t[layer];
        let (fan_in, fan_out) = (w.rows(), w.cols());
        let mut out = vec![0.0; batch * fan_out];
        matmul_into(spikes, w.data(), &mut out, batch, fan_in, fan_out);
        Tensor::new(&[batch * fan_out], out).expect("sized")
    }

    fn check(&self, input: &SpikeTrain) -> Result<()> {
        if input.features() != self.weights_t[0].rows() {
            return Err(Error::shape(format!(
                "input has {} features, model expects {}",
                input.features(),
                self.weights_t[0].rows()
            )));
        }
        Ok(())
    }

    /// Per-layer membrane scale: largest `|H|` seen in a full-precision LIF
    /// run on `input`. Never zero.
    pub fn calibrate(&self, input: &SpikeTrain) -> Result<Vec<f64>> {
        self.check(input)?;
        let batch = input.batch();
        let mut states: Vec<LifState<f64>> = self
            .weights_t
            .iter()
            .map(|w| LifState::zeros(batch * w.cols()))
            .collect();
        let mut scales = vec![0.0f64; self.weights_t.len()];
        for t in 0..input.t_steps() {
            let mut s: Vec<f64> = input.frame(t).to_values();
            for l in 0..self.weights_t.len() {
                let i = self.currents(l, &s, batch);
                let tau = self.cfg.tau;
                scales[l] = scales[l].max(calibrate_scale(
                    states[l].u.iter().zip(i.data()).map(|(&u, &x)| tau * u + x),
                ));
                let (spikes, next) = lif_step(&states[l], &i, &self.cfg)?;
                states[l] = next;
                s = spikes.into_data();
            }
        }
        Ok(scales
            .into_iter()
            .map(|s| if s > 0.0 { s } else { 1.0 })
            .collect())
    }

    /// QLIF inference with `bits`-bit membranes at the given per-layer
    /// scales, recording both terms of every neuron update.
    pub fn run(
        &self,
        input: &SpikeTrain,
        bits: u32,
        scales: &[f64],
    ) -> Result<(Vec<SpikeTrain>, ContributionStats)> {
        self.check(input)?;
        if scales.len() != self.weights_t.len() {
            return Err(Error::shape("one membrane scale per layer required"));
        }
        let cfg = NeuronConfig {
            membrane_bits: Some(bits),
            ..self.cfg
        };
        let (tt, batch) = (input.t_steps(), input.batch());
        let mut states: Vec<QLifState> = self
            .weights_t
            .iter()
            .zip(scales)
            .map(|(w, &s)| QLifState::zeros(batch * w.cols(), s))
            .collect();
        let mut acc = ContributionAccumulator::new(tt);
        let mut outputs: Vec<Vec<f64>> = vec![Vec::new(); self.weights_t.len()];
        for t in 0..tt {
            let mut s: Vec<f64> = input.frame(t).to_values();
            for l in 0..self.weights_t.len() {
                let i = self.currents(l, &s, batch);
                let (spikes, next, terms) = qlif_step(&states[l], &i, &cfg)?;
                acc.record(t, &terms);
                states[l] = next;
                s = spikes.into_data();
                outputs[l].extend_from_slice(&s);
            }
        }
        let trains = outputs
            .iter()
            .zip(&self.weights_t)
            .map(|(v, w)| SpikeTrain::from_values(tt, batch, w.cols(), v))
            .collect::<Result<_>>()?;
        Ok((trains, acc.finish(Some(bits))))
    }
}

/// Calibrates membrane scales on `sample` and reports the history/current
/// split of a QLIF run at `membrane_bits`.
pub fn contribution_stats(
    model: &QlifModel,
    sample: &SpikeTrain,
    membrane_bits: u32,
) -> Result<ContributionStats> {
    let scales = model.calibrate(sample)?;
    Ok(model.run(sample, membrane_bits, &scales)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(t: usize, b: usize, n: usize, seed: u64) -> SpikeTrain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpikeTrain::from_fn(t, b, n, |_, _, _| rng.random_bool(0.3))
    }

    fn model(tau: f64) -> QlifModel {
        let net = Network::<f32>::init(
            &Architecture::binary_stack(&[10, 16, 4]),
            6,
            NeuronConfig::default(),
            7,
        )
        .unwrap();
        QlifModel::from_network(&net).unwrap().with_tau(tau)
    }

    #[test]
    fn no_decay_term_without_tau() {
        let m = model(0.0);
        let s = contribution_stats(&m, &sample(6, 8, 10, 1), 8).unwrap();
        assert_eq!(s.history_fraction, 0.0);
        assert!(s.per_step_history.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn fraction_in_unit_interval() {
        for bits in [2u32, 4, 8] {
            let s = contribution_stats(&model(0.5), &sample(6, 8, 10, 2), bits).unwrap();
            assert!((0.0..=1.0).contains(&s.history_fraction));
            assert_eq!(s.per_step_history[0], 0.0);
            assert_eq!(s.per_step_current.len(), 6);
        }
    }

    #[test]
    fn silent_run_is_zero_over_zero() {
        let s = contribution_stats(&model(0.5), &SpikeTrain::zeros(6, 2, 10), 4).unwrap();
        assert_eq!(s.history_fraction, 0.0);
    }

    #[test]
    fn pure_decay_is_all_history() {
        let cfg = NeuronConfig {
            v_th: 100.0,
            membrane_bits: Some(8),
            ..NeuronConfig::default()
        };
        let mut st = QLifState {
            levels: vec![127, -64],
            scale: 1.0,
        };
        let zero = Tensor::new(&[2], vec![0.0, 0.0]).unwrap();
        let mut acc = ContributionAccumulator::new(3);
        for t in 0..3 {
            let (_, next, terms) = qlif_step(&st, &zero, &cfg).unwrap();
            acc.record(t, &terms);
            st = next;
        }
        let s = acc.finish(Some(8));
        assert_eq!(s.history_fraction, 1.0);
        assert!(s.per_step_history[2] > 0.0);
    }

    #[test]
    fn calibration_scales_positive() {
        let m = model(0.5);
        let scales = m.calibrate(&sample(6, 4, 10, 3)).unwrap();
        assert_eq!(scales.len(), 2);
        assert!(scales.iter().all(|&s| s > 0.0));
        assert!(m.calibrate(&sample(6, 4, 9, 3)).is_err());
    }
}
