//! Closed-form storage accounting for a network's parameters and state.
//!
//! `fp32-lif` keeps 32-bit weights and one 32-bit membrane potential per
//! neuron. `mfp-binary` keeps `weight_bits` per weight, no membrane, and per
//! layer a 32-bit `α`, the `T(T+1)/2` mix entries and `T` folded thresholds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::Architecture;
use crate::error::{Error, Result};

/// Bytes per megabyte used in every report.
pub const MB: f64 = (1u64 << 20) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Fp32Lif,
    MfpBinary,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Fp32Lif => "fp32-lif",
            Scheme::MfpBinary => "mfp-binary",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp32-lif" => Ok(Scheme::Fp32Lif),
            "mfp-binary" => Ok(Scheme::MfpBinary),
            _ => Err(Error::config(format!(
                "unknown scheme {s:?}, expected fp32-lif or mfp-binary"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LayerMemory {
    pub weight_bits_total: u64,
    pub membrane_bits_total: u64,
    /// `α`, mix entries and folded thresholds.
    pub aux_bits_total: u64,
}

impl LayerMemory {
    pub fn total(&self) -> u64 {
        self.weight_bits_total + self.membrane_bits_total + self.aux_bits_total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryReport {
    pub scheme: Scheme,
    pub t_steps: usize,
    pub layers: Vec<LayerMemory>,
    pub weight_bits: u64,
    pub membrane_bits: u64,
    pub aux_bits: u64,
    pub total_bits: u64,
    /// Total of the `fp32-lif` scheme on the same architecture.
    pub baseline_bits: u64,
    /// `baseline_bits / total_bits`.
    pub ratio: f64,
}

impl MemoryReport {
    pub fn bytes(&self) -> f64 {
        self.total_bits as f64 / 8.0
    }

    pub fn megabytes(&self) -> f64 {
        self.bytes() / MB
    }

    pub const CSV_HEADER: &'static str = "scheme,t_steps,layer,weight_bits,membrane_bits,aux_bits,total_bits,bytes,megabytes,ratio_vs_fp32_lif";

    /// One row per layer followed by a `total` row; only the total carries
    /// the ratio.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows: Vec<String> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let bits = l.total();
                format!(
                    "{},{},{i},{},{},{},{bits},{},{},",
                    self.scheme,
                    self.t_steps,
                    l.weight_bits_total,
                    l.membrane_bits_total,
                    l.aux_bits_total,
                    bits as f64 / 8.0,
                    bits as f64 / 8.0 / MB
                )
            })
            .collect();
        rows.push(format!(
            "{},{},total,{},{},{},{},{},{},{}",
            self.scheme,
            self.t_steps,
            self.weight_bits,
            self.membrane_bits,
            self.aux_bits,
            self.total_bits,
            self.bytes(),
            self.megabytes(),
            self.ratio
        ));
        rows
    }

    pub fn render_text(&self) -> String {
        let mut s = format!(
            "scheme {} (T = {}, 1 MB = 2^20 bytes)\n",
            self.scheme, self.t_steps
        );
        for (i, l) in self.layers.iter().enumerate() {
            s += &format!(
                "  layer {i}: weights {} b, membrane {} b, aux {} b\n",
                l.weight_bits_total, l.membrane_bits_total, l.aux_bits_total
            );
        }
        s += &format!(
            "  total: {} bits = {} bytes = {:.6} MB\n  ratio vs fp32-lif: {:.3}x\n",
            self.total_bits,
            self.bytes(),
            self.megabytes(),
            self.ratio
        );
        s
    }
}

fn layer_memory(arch: &Architecture, scheme: Scheme, t_steps: usize) -> Vec<LayerMemory> {
    let t = t_steps as u64;
    arch.layers
        .iter()
        .map(|l| match scheme {
            Scheme::Fp32Lif => LayerMemory {
                weight_bits_total: 32 * l.weights() as u64,
                membrane_bits_total: 32 * l.fan_out as u64,
                aux_bits_total: 0,
            },
            Scheme::MfpBinary => LayerMemory {
                weight_bits_total: l.weight_bits as u64 * l.weights() as u64,
                membrane_bits_total: 0,
                aux_bits_total: 32 + 32 * t * (t + 1) / 2 + 32 * t,
            },
        })
        .collect()
}

fn sum(layers: &[LayerMemory]) -> u64 {
    layers.iter().map(LayerMemory::total).sum()
}

pub fn account_memory(arch: &Architecture, scheme: Scheme, t_steps: usize) -> Result<MemoryReport> {
    if arch.layers.is_empty() {
        return Err(Error::config("architecture has no layers"));
    }
    arch.validate()?;
    if t_steps == 0 {
        return Err(Error::config("t_steps must be positive"));
    }
    let layers = layer_memory(arch, scheme, t_steps);
    let baseline_bits = sum(&layer_memory(arch, Scheme::Fp32Lif, t_steps));
    let total_bits = sum(&layers);
    Ok(MemoryReport {
        scheme,
        t_steps,
        weight_bits: layers.iter().map(|l| l.weight_bits_total).sum(),
        membrane_bits: layers.iter().map(|l| l.membrane_bits_total).sum(),
        aux_bits: layers.iter().map(|l| l.aux_bits_total).sum(),
        total_bits,
        baseline_bits,
        ratio: baseline_bits as f64 / total_bits as f64,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::LayerSpec;

    #[test]
    fn single_hundred_by_hundred_layer() {
        let arch = Architecture::binary_stack(&[100, 100]);
        let base = account_memory(&arch, Scheme::Fp32Lif, 4).unwrap();
        let mfp = account_memory(&arch, Scheme::MfpBinary, 4).unwrap();
        assert_eq!(base.total_bits, 323_200);
        assert_eq!(mfp.total_bits, 10_480);
        assert_eq!(mfp.layers[0].aux_bits_total, 32 + 320 + 128);
        assert_eq!(mfp.membrane_bits, 0);
        assert!((mfp.ratio - 323_200.0 / 10_480.0).abs() < 1e-12);
        assert_eq!(base.ratio, 1.0);
    }

    #[test]
    fn empty_architecture_rejected() {
        assert!(account_memory(&Architecture { layers: vec![] }, Scheme::MfpBinary, 4).is_err());
    }

    #[test]
    fn totals_are_sums_of_parts() {
        let arch = Architecture::binary_stack(&[31, 17, 9, 4]);
        for scheme in [Scheme::Fp32Lif, Scheme::MfpBinary] {
            let r = account_memory(&arch, scheme, 7).unwrap();
            assert_eq!(
                r.total_bits,
                r.layers.iter().map(LayerMemory::total).sum::<u64>()
            );
            assert_eq!(r.total_bits, r.weight_bits + r.membrane_bits + r.aux_bits);
            assert_eq!(r.csv_rows().len(), 4);
        }
    }

    #[test]
    fn ratio_tends_to_thirty_two() {
        let mut last = f64::INFINITY;
        for n in [64usize, 256, 1024, 4096] {
            let r = account_memory(&Architecture::binary_stack(&[n, n]), Scheme::MfpBinary, 10)
                .unwrap();
            let gap = (r.ratio - 32.0).abs();
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn dense_layer_counts_full_width() {
        let arch = Architecture {
            layers: vec![LayerSpec::dense(10, 10)],
        };
        let r = account_memory(&arch, Scheme::MfpBinary, 1).unwrap();
        assert_eq!(r.weight_bits, 3200);
    }

    #[test]
    fn scheme_names() {
        for s in [Scheme::Fp32Lif, Scheme::MfpBinary] {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert!("fp16".parse::<Scheme>().is_err());
    }
}
