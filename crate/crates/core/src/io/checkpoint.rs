//! Checkpoint file layout:
//!
//! ```text
//! b"MFPQCKPT" | header_len: u32 LE | header (JSON, header_len bytes) | payload
//! ```
//!
//! The header lists every payload section with its byte offset and length.
//! Sections are little-endian `f32` arrays or raw bytes, and they tile the
//! payload exactly, in order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::neurons::{DenseLinear, MfpLayer, Network, NeuronConfig, TemporalMixMatrix, Weights};
use crate::quant::{BinaryLinear, FoldMode};
use crate::tensor::Tensor;
use crate::tri::{packed_len, LowerTriangular};

pub const MAGIC: &[u8; 8] = b"MFPQCKPT";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX: usize = MAGIC.len() + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub name: String,
    pub dtype: Dtype,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub layers: usize,
    pub weights: usize,
    pub mix_entries: usize,
    pub payload_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub architecture: Architecture,
    pub t_steps: usize,
    pub seed: u64,
    pub neuron: NeuronConfig,
    pub counts: Counts,
    pub sections: Vec<Section>,
}

/// A trained (or freshly initialized) network plus the seed that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub seed: u64,
}

struct PayloadWriter {
    bytes: Vec<u8>,
    sections: Vec<Section>,
}

impl PayloadWriter {
    fn f32s(&mut self, name: String, values: &[f32]) {
        let offset = self.bytes.len();
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.sections.push(Section {
            name,
            dtype: Dtype::F32,
            offset,
            len: self.bytes.len() - offset,
        });
    }

    fn raw(&mut self, name: String, values: &[u8]) {
        let offset = self.bytes.len();
        self.bytes.extend_from_slice(values);
        self.sections.push(Section {
            name,
            dtype: Dtype::U8,
            offset,
            len: values.len(),
        });
    }
}

impl Checkpoint {
    pub fn new(network: Network<f32>, seed: u64) -> Self {
        Self { network, seed }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let net = &self.network;
        let mut w = PayloadWriter {
            bytes: Vec::new(),
            sections: Vec::new(),
        };
        for (i, layer) in net.layers.iter().enumerate() {
            w.f32s(format!("layers[{i}].latent"), layer.weights.latent().data());
            if let Weights::Binary(b) = &layer.weights {
                w.raw(format!("layers[{i}].signs"), b.packed_signs());
                w.f32s(format!("layers[{i}].alpha"), &[b.scale()]);
            }
            w.f32s(format!("layers[{i}].mix"), layer.mix.tri().packed());
            let folded = layer.fold(net.cfg.v_th, FoldMode::Diagonal)?;
            w.f32s(format!("layers[{i}].thresholds"), &folded.per_step);
        }
        let arch = net.architecture();
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            t_steps: net.t_steps(),
            seed: self.seed,
            neuron: net.cfg,
            counts: Counts {
                layers: arch.layers.len(),
                weights: arch.total_weights(),
                mix_entries: arch.layers.len() * packed_len(net.t_steps()),
                payload_bytes: w.bytes.len(),
            },
            architecture: arch,
            sections: w.sections,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(PREFIX + json.len() + w.bytes.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&w.bytes);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload_start) = read_header(bytes)?;
        let payload = &bytes[payload_start..];
        let reader = SectionReader {
            header: &header,
            payload,
            base: payload_start,
        };
        let t = header.t_steps;
        let mut layers = Vec::with_capacity(header.architecture.layers.len());
        for (i, spec) in header.architecture.layers.iter().enumerate() {
            let latent = Tensor::new(
                &[spec.fan_out, spec.fan_in],
                reader.f32s(&format!("layers[{i}].latent"), spec.weights())?,
            )?;
            let weights = if spec.weight_bits == 1 {
                let name = format!("layers[{i}].signs");
                let signs = reader.raw(&name, spec.fan_out * spec.fan_in.div_ceil(8))?;
                let alpha = reader.f32s(&format!("layers[{i}].alpha"), 1)?[0];
                let off = reader.section(&name)?.offset + payload_start;
                Weights::Binary(
                    BinaryLinear::from_parts(latent, signs.to_vec(), alpha)
                        .map_err(|e| Error::format(off, format!("{name}: {e}")))?,
                )
            } else {
                Weights::Dense(DenseLinear::new(latent)?)
            };
            let mix = reader.f32s(&format!("layers[{i}].mix"), packed_len(t))?;
            let layer = MfpLayer {
                weights,
                mix: TemporalMixMatrix::new(LowerTriangular::from_packed(t, mix)?),
            };
            let name = format!("layers[{i}].thresholds");
            let stored = reader.f32s(&name, t)?;
            if layer.fold(header.neuron.v_th, FoldMode::Diagonal)?.per_step != stored {
                let off = reader.section(&name)?.offset + payload_start;
                return Err(Error::format(
                    off,
                    format!("{name} inconsistent with mix and alpha"),
                ));
            }
            layers.push(layer);
        }
        let network = Network::new(layers, header.neuron, t)
            .map_err(|e| Error::format(MAGIC.len() + 4, format!("header: {e}")))?;
        Ok(Self {
            network,
            seed: header.seed,
        })
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Replaces `path` with `bytes` via write-temp-then-rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Parses and checks the header; returns it with the payload start offset.
pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < PREFIX {
        return Err(Error::format(
            bytes.len(),
            format!("file is {} bytes, shorter than the prefix", bytes.len()),
        ));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::format(0, "bad magic, not a checkpoint"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let end = PREFIX
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| {
            Error::format(
                8,
                format!("header length {len} exceeds file size {}", bytes.len()),
            )
        })?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[PREFIX..end])
        .map_err(|e| Error::format(PREFIX, format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(
            PREFIX,
            format!(
                "header.format_version {} unsupported",
                header.format_version
            ),
        ));
    }
    header
        .architecture
        .validate()
        .map_err(|e| Error::format(PREFIX, format!("header.architecture: {e}")))?;
    header
        .neuron
        .validate()
        .map_err(|e| Error::format(PREFIX, format!("header.neuron: {e}")))?;
    if header.t_steps == 0 {
        return Err(Error::format(PREFIX, "header.t_steps must be positive"));
    }
    let payload_len = bytes.len() - end;
    if header.counts.payload_bytes != payload_len {
        return Err(Error::format(
            end,
            format!(
                "header.counts.payload_bytes is {}, file carries {payload_len}",
                header.counts.payload_bytes
            ),
        ));
    }
    let mut cursor = 0;
    for s in &header.sections {
        if s.offset != cursor {
            return Err(Error::format(
                end + cursor.min(s.offset),
                format!(
                    "section {} starts at {}, expected {cursor}",
                    s.name, s.offset
                ),
            ));
        }
        cursor += s.len;
    }
    if cursor != payload_len {
        return Err(Error::format(
            end + cursor.min(payload_len),
            format!("sections cover {cursor} bytes, payload has {payload_len}"),
        ));
    }
    Ok((header, end))
}

struct SectionReader<'a> {
    header: &'a CheckpointHeader,
    payload: &'a [u8],
    base: usize,
}

impl SectionReader<'_> {
    fn section(&self, name: &str) -> Result<&Section> {
        self.header
            .sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::format(PREFIX, format!("header.sections: missing {name}")))
    }

    fn raw(&self, name: &str, expected: usize) -> Result<&[u8]> {
        let s = self.section(name)?;
        if s.dtype != Dtype::U8 || s.len != expected {
            return Err(Error::format(
                self.base + s.offset,
                format!(
                    "{name}: expected {expected} u8 bytes, found {} {:?}",
                    s.len, s.dtype
                ),
            ));
        }
        Ok(&self.payload[s.offset..s.offset + s.len])
    }

    fn f32s(&self, name: &str, count: usize) -> Result<Vec<f32>> {
        let s = self.section(name)?;
        if s.dtype != Dtype::F32 || s.len != 4 * count {
            return Err(Error::format(
                self.base + s.offset,
                format!(
                    "{name}: expected {count} f32 values ({} bytes), found {} bytes",
                    4 * count,
                    s.len
                ),
            ));
        }
        Ok(self.payload[s.offset..s.offset + s.len]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
