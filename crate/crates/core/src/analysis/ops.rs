use std::ops::AddAssign;

use serde::Serialize;

use crate::error::Result;
use crate::neurons::{network_forward_counted, Mode, Network, NetworkOutput, SpikeTrain};
use crate::tensor::Real;

/// Accumulate and multiply-accumulate counters for one or more forwards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub ac_ops: u64,
    pub mac_ops: u64,
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        self.ac_ops += rhs.ac_ops;
        self.mac_ops += rhs.mac_ops;
    }
}

/// Runs one forward in `mode` and returns its operation counts with the
/// output.
pub fn count_ops<T: Real>(
    net: &Network<T>,
    input: &SpikeTrain,
    mode: Mode,
) -> Result<(OpCount, NetworkOutput<T>)> {
    let mut ops = OpCount::default();
    let out = network_forward_counted(net, input, mode, &mut ops)?;
    Ok((ops, out))
}

/// AC total implied by recorded spike trains alone: every spike entering a
/// layer costs one accumulate per fan-out synapse.
pub fn recount_ac<T: Real>(net: &Network<T>, input: &SpikeTrain, out: &NetworkOutput<T>) -> u64 {
    let mut ac = 0u64;
    for (l, layer) in net.layers.iter().enumerate() {
        let spikes = if l == 0 { input } else { &out.spikes[l - 1] };
        ac += (spikes.count_ones() * layer.weights.fan_out()) as u64;
    }
    ac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Architecture;
    use crate::neurons::NeuronConfig;

    #[test]
    fn silent_input_costs_no_accumulates() {
        let net = Network::<f32>::init(
            &Architecture::binary_stack(&[5, 4, 3]),
            4,
            NeuronConfig::default(),
            0,
        )
        .unwrap();
        let (ops, _) = count_ops(&net, &SpikeTrain::zeros(4, 2, 5), Mode::Streaming).unwrap();
        assert_eq!(ops.ac_ops, 0);
        assert!(ops.mac_ops > 0);
    }

    #[test]
    fn one_spike_costs_fan_out() {
        let net = Network::<f32>::init(
            &Architecture::binary_stack(&[3, 7]),
            1,
            NeuronConfig::default(),
            0,
        )
        .unwrap();
        let mut input = SpikeTrain::zeros(1, 1, 3);
        input.set(0, 0, 1, true);
        for mode in [Mode::Parallel, Mode::Streaming, Mode::FoldedDiagonal] {
            assert_eq!(count_ops(&net, &input, mode).unwrap().0.ac_ops, 7);
        }
    }

    #[test]
    fn add_assign_sums_fields() {
        let mut a = OpCount {
            ac_ops: 1,
            mac_ops: 2,
        };
        a += OpCount {
            ac_ops: 10,
            mac_ops: 20,
        };
        assert_eq!(
            a,
            OpCount {
                ac_ops: 11,
                mac_ops: 22
            }
        );
    }
}
