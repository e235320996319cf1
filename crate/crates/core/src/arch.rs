//! Architecture descriptions shared by model construction, checkpoints and
//! memory accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    /// 1 for sign-binarized weights, 32 for full-precision weights.
    #[serde(default = "default_weight_bits")]
    pub weight_bits: u32,
}

fn default_weight_bits() -> u32 {
    1
}

impl LayerSpec {
    pub fn binary(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weight_bits: 1,
        }
    }

    pub fn dense(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weight_bits: 32,
        }
    }

    pub fn weights(&self) -> usize {
        self.fan_in * self.fan_out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Fully connected stack from a list of widths `[input, hidden.., output]`,
    /// all layers binary.
    pub fn binary_stack(widths: &[usize]) -> Self {
        Self {
            layers: widths
                .windows(2)
                .map(|w| LayerSpec::binary(w[0], w[1]))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("architecture has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.fan_in == 0 || l.fan_out == 0 {
                return Err(Error::config(format!(
                    "layers[{i}]: fan_in and fan_out must be positive"
                )));
            }
            if l.weight_bits != 1 && l.weight_bits != 32 {
                return Err(Error::config(format!(
                    "layers[{i}].weight_bits: expected 1 or 32, got {}",
                    l.weight_bits
                )));
            }
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].fan_out != w[1].fan_in {
                return Err(Error::config(format!(
                    "layers[{}].fan_in = {} does not match layers[{i}].fan_out = {}",
                    i + 1,
                    w[1].fan_in,
                    w[0].fan_out
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.fan_in)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(LayerSpec::weights).sum()
    }

    pub fn total_neurons(&self) -> usize {
        self.layers.iter().map(|l| l.fan_out).sum()
    }
}
