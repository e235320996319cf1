//! Files and data: checkpoints, rate coding, synthetic data and IDX images.

mod checkpoint;
mod dataset;
mod encoder;
mod idx;

pub use checkpoint::{
    read_header, write_atomic, Checkpoint, CheckpointHeader, Counts, Dtype, Section,
    FORMAT_VERSION, MAGIC,
};
pub use dataset::{gen_synthetic, Dataset, SYNTHETIC_SIGMA};
pub use encoder::RateEncoder;
pub use idx::{encode_idx, idx_images, idx_labels, load_idx, parse_idx, IdxArray};
