//! Measurement tools: memory accounting, membrane-history statistics,
//! operation counts and engine timing.

mod bench;
mod contribution;
mod memory;
mod ops;

pub use bench::{bench_parallel_vs_serial, random_spikes, BenchResult};
pub use contribution::{contribution_stats, ContributionAccumulator, ContributionStats, QlifModel};
pub use memory::{account_memory, LayerMemory, MemoryReport, Scheme, MB};
pub use ops::{count_ops, recount_ac, OpCount};
