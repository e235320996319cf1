//! Memory-free parallel quantized spiking neural networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`tri`]: dense arrays, a deterministic matmul, and packed
//!   lower-triangular matrices with forward-substitution inversion.
//! - [`quant`]: the uniform b-bit quantizer, sign binarization with a
//!   straight-through gradient, and threshold folding.
//! - [`neurons`]: LIF and quantized LIF dynamics plus the three engines of the
//!   memory-free model (parallel, exact streaming, folded threshold).
//! - [`training`]: surrogate-gradient backward pass, SGD with momentum and the
//!   training loop.
//! - [`analysis`]: memory accounting, history-contribution statistics, AC/MAC
//!   counting and the parallel-vs-serial benchmark.
//! - [`io`]: checkpoints, rate coding, synthetic data and IDX ingestion.

pub mod analysis;
pub mod arch;
pub mod error;
pub mod io;
pub mod neurons;
pub mod quant;
pub mod tensor;
pub mod training;
pub mod tri;

pub use arch::{Architecture, LayerSpec};
pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
pub use tri::LowerTriangular;
