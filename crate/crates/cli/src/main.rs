//! `mfpq`: train, verify, benchmark and inspect memory-free spiking networks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error,
//! 3 verification failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfpq::neurons::Mode;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "mfpq",
    version,
    about = "Memory-free parallel quantized spiking networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network from a JSON run config and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed used when the config has no `train.seed`.
        #[arg(long, env = "MFPQ_SEED")]
        seed: Option<u64>,
        /// Per-epoch metrics CSV (stdout when omitted).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Compare parallel spikes with a serial engine on random inputs.
    Verify {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_parser = parse_serial_mode)]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, env = "MFPQ_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time parallel against streaming forwards.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        /// Timesteps; the mix matrices are re-initialized if this differs
        /// from the checkpoint.
        #[arg(long = "T")]
        t_steps: Option<usize>,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 7)]
        repeats: usize,
        #[arg(long, default_value_t = 0.2)]
        rate: f64,
        #[arg(long, env = "MFPQ_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Storage of an architecture under the fp32-lif and mfp-binary schemes.
    ReportMemory {
        /// JSON architecture: `{"layers": [{"fan_in": .., "fan_out": ..}, ..]}`.
        #[arg(long)]
        arch: PathBuf,
        #[arg(long = "T")]
        t_steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// History/current contribution split under quantized membranes.
    Stats {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![8u32, 4, 2])]
        bits: Vec<u32>,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, env = "MFPQ_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Text,
}

fn parse_serial_mode(s: &str) -> Result<Mode, String> {
    match s.parse::<Mode>() {
        Ok(Mode::Parallel) => Err(
            "verify compares against parallel; choose streaming, folded-diag or folded-rowsum"
                .into(),
        ),
        Ok(m) => Ok(m),
        Err(e) => Err(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            out,
            seed,
            metrics,
        } => commands::train(&config, &out, seed, metrics.as_deref()),
        Command::Verify {
            ckpt,
            mode,
            trials,
            seed,
            out,
        } => commands::verify(&ckpt, mode, trials, seed, out.as_deref()),
        Command::Bench {
            ckpt,
            t_steps,
            batch,
            repeats,
            rate,
            seed,
            out,
        } => commands::bench(&ckpt, t_steps, batch, repeats, rate, seed, out.as_deref()),
        Command::ReportMemory {
            arch,
            t_steps,
            format,
            out,
        } => commands::report_memory(&arch, t_steps, format, out.as_deref()),
        Command::Stats {
            ckpt,
            bits,
            samples,
            seed,
            out,
        } => commands::stats(&ckpt, &bits, samples, seed, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("mfpq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
