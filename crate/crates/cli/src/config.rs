//! JSON run config for `mfpq train`.
//!
//! ```json
//! {
//!   "architecture": {"layers": [{"fan_in": 16, "fan_out": 32}, {"fan_in": 32, "fan_out": 2}]},
//!   "t_steps": 4,
//!   "neuron": {"tau": 0.5, "v_th": 1.0, "v_reset": 0.0},
//!   "train": {"lr": 0.05, "momentum": 0.9, "epochs": 30, "batch": 32},
//!   "data": {"synthetic": {"dims": 16, "count": 400}}
//! }
//! ```

use std::path::{Path, PathBuf};

use mfpq::neurons::NeuronConfig;
use mfpq::training::TrainConfig;
use mfpq::Architecture;
use serde::Deserialize;

use crate::commands::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: Architecture,
    pub t_steps: usize,
    #[serde(default)]
    pub neuron: NeuronConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        dims: usize,
        count: usize,
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        sigma: Option<f64>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        classes: usize,
        /// Encoder seed; defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// Parsed config plus whether `train.seed` was written explicitly.
#[derive(Debug)]
pub struct Loaded {
    pub run: RunConfig,
    pub seed_in_file: bool,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::data(format!("{}: {}", path.display(), e.message)))
}

pub fn parse(text: &str) -> Result<Loaded, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::data(format!("invalid JSON: {e}")))?;
    let seed_in_file = value.pointer("/train/seed").is_some();
    let run: RunConfig = serde_path_to_error::deserialize(&value).map_err(|e| {
        let path = e.path().to_string();
        CliError::data(format!("field `{path}`: {}", e.into_inner()))
    })?;
    run.neuron
        .validate()
        .and_then(|_| run.train.validate())
        .and_then(|_| run.architecture.validate())
        .map_err(|e| CliError::data(e.to_string()))?;
    if run.t_steps == 0 {
        return Err(CliError::data("field `t_steps`: must be positive"));
    }
    Ok(Loaded { run, seed_in_file })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "architecture": {"layers": [{"fan_in": 4, "fan_out": 2}]},
        "t_steps": 3,
        "train": {"lr": 0.1, "epochs": 1, "batch": 8},
        "data": {"synthetic": {"dims": 4, "count": 8}}
    }"#;

    #[test]
    fn minimal_config() {
        let l = parse(GOOD).unwrap();
        assert!(!l.seed_in_file);
        assert_eq!(l.run.neuron, NeuronConfig::default());
        assert!(matches!(
            l.run.data,
            DataConfig::Synthetic {
                dims: 4,
                count: 8,
                ..
            }
        ));
    }

    #[test]
    fn explicit_seed_detected() {
        let text = GOOD.replace("\"batch\": 8", "\"batch\": 8, \"seed\": 0");
        assert!(parse(&text).unwrap().seed_in_file);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad_type = GOOD.replace("\"lr\": 0.1", "\"lr\": \"fast\"");
        assert!(parse(&bad_type).unwrap_err().message.contains("train.lr"));

        let missing = GOOD.replace("\"t_steps\": 3,", "");
        assert!(parse(&missing).unwrap_err().message.contains("t_steps"));

        let unknown = GOOD.replace("\"epochs\": 1", "\"epochs\": 1, \"lrate\": 2");
        assert!(parse(&unknown).unwrap_err().message.contains("lrate"));

        let invalid = GOOD.replace("\"lr\": 0.1", "\"lr\": -1");
        assert!(parse(&invalid).unwrap_err().message.contains("train.lr"));

        let arch = GOOD.replace("\"fan_out\": 2}", "\"fan_out\": 2, \"width\": 1}");
        assert!(parse(&arch)
            .unwrap_err()
            .message
            .contains("architecture.layers[0]"));
    }
}
