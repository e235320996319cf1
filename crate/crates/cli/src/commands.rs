use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use mfpq::analysis::{
    account_memory, bench_parallel_vs_serial, random_spikes, BenchResult, MemoryReport, QlifModel,
    Scheme,
};
use mfpq::io::{
    gen_synthetic, load_idx, write_atomic, Checkpoint, Dataset, RateEncoder, SYNTHETIC_SIGMA,
};
use mfpq::neurons::{
    compare_modes, MfpLayer, Mode, Network, SpikeTrain, TemporalMixMatrix, DEFAULT_MIX_DECAY,
};
use mfpq::training::{self, EpochMetrics};
use mfpq::Architecture;

use crate::config::{self, DataConfig, RunConfig};
use crate::{Format, EXIT_DATA, EXIT_USAGE, EXIT_VERIFY};

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    code: u8,
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_DATA,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_USAGE,
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<mfpq::Error> for CliError {
    fn from(e: mfpq::Error) -> Self {
        CliError::data(e.to_string())
    }
}

type Outcome = Result<u8, CliError>;

/// Writes `text` atomically to `out`, or to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())
            .map_err(|e| CliError::data(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn build_dataset(run: &RunConfig, seed: u64) -> Result<Dataset, CliError> {
    let data = match &run.data {
        DataConfig::Synthetic {
            dims,
            count,
            seed: data_seed,
            sigma,
        } => gen_synthetic(
            *dims,
            *count,
            data_seed.unwrap_or(seed),
            sigma.unwrap_or(SYNTHETIC_SIGMA),
            run.t_steps,
        )
        .map_err(|e| CliError::data(format!("data.synthetic: {e}")))?,
        DataConfig::Idx {
            images,
            labels,
            classes,
            seed: enc_seed,
        } => {
            let (x, y) = load_idx(images, labels, *classes)
                .map_err(|e| CliError::data(format!("data.idx: {e}")))?;
            let n = x.shape()[0];
            let features = x.len() / n.max(1);
            let x = x.reshape(&[n, features])?;
            let spikes = RateEncoder::new(run.t_steps, enc_seed.unwrap_or(seed))?.encode(&x)?;
            Dataset::new(spikes, y)?
        }
    };
    let arch = &run.architecture;
    if data.features() != arch.input_width() {
        return Err(CliError::data(format!(
            "field `architecture.layers[0].fan_in`: {} but the data has {} features",
            arch.input_width(),
            data.features()
        )));
    }
    if data.classes() > arch.output_width() {
        return Err(CliError::data(format!(
            "field `architecture.layers[{}].fan_out`: {} outputs for {} classes",
            arch.layers.len() - 1,
            arch.output_width(),
            data.classes()
        )));
    }
    Ok(data)
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,split,loss,accuracy,wall_ms\n");
    for m in metrics {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.3}",
            m.epoch, m.split, m.loss, m.accuracy, m.wall_ms
        );
    }
    s
}

/// Seed precedence: `train.seed` in the config, then `--seed`/`MFPQ_SEED`,
/// then 0. The same seed drives initialization, shuffling and synthetic data.
pub fn train(
    config_path: &Path,
    out: &Path,
    flag_seed: Option<u64>,
    metrics_out: Option<&Path>,
) -> Outcome {
    let loaded = config::load(config_path)?;
    let mut run = loaded.run;
    let seed = if loaded.seed_in_file {
        run.train.seed
    } else {
        flag_seed.unwrap_or(0)
    };
    run.train.seed = seed;
    let data = build_dataset(&run, seed)?;
    let net = Network::<f32>::init(&run.architecture, run.t_steps, run.neuron, seed)?;
    let (net, metrics) = training::train(net, &data, &run.train)?;
    Checkpoint::new(net, seed)
        .save(out)
        .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    emit(metrics_out, &metrics_csv(&metrics))?;
    Ok(0)
}

pub const VERIFY_HEADER: &str =
    "mode,trials,compared,mismatched,divergence_rate,logits_identical,first_trial,first_layer,first_t,first_neuron,first_input";

/// Input of one sample as `0`/`1` per feature, timesteps separated by `|`.
fn input_bits(input: &SpikeTrain, sample: usize) -> String {
    (0..input.t_steps())
        .map(|t| {
            (0..input.features())
                .map(|n| if input.get(t, sample, n) { '1' } else { '0' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Runs `trials` Bernoulli(0.5) inputs through the parallel engine and `mode`.
/// Exits with 3 when streaming disagrees anywhere; folded modes only report.
pub fn verify(ckpt: &Path, mode: Mode, trials: usize, seed: u64, out: Option<&Path>) -> Outcome {
    if trials == 0 {
        return Err(CliError::usage("--trials must be positive"));
    }
    let net = load_checkpoint(ckpt)?.network;
    let input = random_spikes(net.t_steps(), trials, net.input_width(), 0.5, seed);
    let cmp = compare_modes(&net, &input, mode)?;
    let first = match cmp.first {
        Some(m) => format!(
            "{},{},{},{},{}",
            m.batch,
            m.layer,
            m.t,
            m.neuron,
            input_bits(&input, m.batch)
        ),
        None => ",,,,".to_string(),
    };
    let text = format!(
        "{VERIFY_HEADER}\n{mode},{trials},{},{},{},{},{first}\n",
        cmp.compared,
        cmp.mismatched,
        cmp.divergence_rate(),
        cmp.logits_identical
    );
    emit(out, &text)?;
    if mode == Mode::Streaming && cmp.mismatched > 0 {
        eprintln!(
            "mfpq: streaming diverged from parallel in {} of {} spikes",
            cmp.mismatched, cmp.compared
        );
        return Ok(EXIT_VERIFY);
    }
    Ok(0)
}

/// Same weights, LIF-like mix matrices of a new order.
fn with_t_steps(net: Network<f32>, t_steps: usize) -> Result<Network<f32>, CliError> {
    let cfg = net.cfg;
    let layers = net
        .layers
        .into_iter()
        .map(|l| MfpLayer {
            weights: l.weights,
            mix: TemporalMixMatrix::lif_like(t_steps, DEFAULT_MIX_DECAY),
        })
        .collect();
    Ok(Network::new(layers, cfg, t_steps)?)
}

pub fn bench(
    ckpt: &Path,
    t_steps: Option<usize>,
    batch: usize,
    repeats: usize,
    rate: f64,
    seed: u64,
    out: Option<&Path>,
) -> Outcome {
    if repeats < 5 {
        return Err(CliError::usage("--repeats must be at least 5"));
    }
    if batch == 0 {
        return Err(CliError::usage("--batch must be positive"));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(CliError::usage("--rate must lie in [0, 1]"));
    }
    let mut net = load_checkpoint(ckpt)?.network;
    match t_steps {
        Some(0) => return Err(CliError::usage("--T must be positive")),
        Some(t) if t != net.t_steps() => net = with_t_steps(net, t)?,
        _ => {}
    }
    let input = random_spikes(net.t_steps(), batch, net.input_width(), rate, seed);
    let r = bench_parallel_vs_serial(&net, &input, repeats)?;
    emit(
        out,
        &format!("{}\n{}\n", BenchResult::CSV_HEADER, r.csv_row()),
    )?;
    Ok(0)
}

pub fn memory_reports(arch: &Architecture, t_steps: usize) -> Result<Vec<MemoryReport>, CliError> {
    [Scheme::Fp32Lif, Scheme::MfpBinary]
        .into_iter()
        .map(|s| account_memory(arch, s, t_steps).map_err(CliError::from))
        .collect()
}

pub fn report_memory(
    arch_path: &Path,
    t_steps: usize,
    format: Format,
    out: Option<&Path>,
) -> Outcome {
    let text = std::fs::read_to_string(arch_path)
        .map_err(|e| CliError::data(format!("{}: {e}", arch_path.display())))?;
    let arch: Architecture = serde_path_to_error::deserialize(
        &mut serde_json::Deserializer::from_str(&text),
    )
    .map_err(|e| {
        CliError::data(format!(
            "{}: field `{}`: {}",
            arch_path.display(),
            e.path(),
            e.inner()
        ))
    })?;
    if t_steps == 0 {
        return Err(CliError::usage("--T must be positive"));
    }
    let reports = memory_reports(&arch, t_steps)?;
    let mut s = String::new();
    match format {
        Format::Csv => {
            s.push_str(MemoryReport::CSV_HEADER);
            s.push('\n');
            for r in &reports {
                for row in r.csv_rows() {
                    s.push_str(&row);
                    s.push('\n');
                }
            }
        }
        Format::Text => {
            for r in &reports {
                s.push_str(&r.render_text());
            }
        }
    }
    emit(out, &s)?;
    Ok(0)
}

pub const STATS_HEADER: &str = "bits,step,mean_history,mean_current,history_fraction";

fn fraction(h: f64, c: f64) -> f64 {
    if h + c == 0.0 {
        0.0
    } else {
        h / (h + c)
    }
}

/// Re-runs the checkpoint as quantized LIF on `samples` synthetic inputs and
/// reports per-step and overall history/current magnitudes per bit width.
pub fn stats(ckpt: &Path, bits: &[u32], samples: usize, seed: u64, out: Option<&Path>) -> Outcome {
    if let Some(b) = bits.iter().find(|&&b| !(2..=32).contains(&b)) {
        return Err(CliError::usage(format!("--bits: {b} is outside 2..=32")));
    }
    if samples < 4 {
        return Err(CliError::usage("--samples must be at least 4"));
    }
    let net = load_checkpoint(ckpt)?.network;
    let data = gen_synthetic(
        net.input_width(),
        samples,
        seed,
        SYNTHETIC_SIGMA,
        net.t_steps(),
    )?;
    let model = QlifModel::from_network(&net)?;
    let scales = model.calibrate(data.inputs())?;
    let mut s = format!("{STATS_HEADER}\n");
    for &b in bits {
        let (_, st) = model.run(data.inputs(), b, &scales)?;
        for (t, (h, c)) in st
            .per_step_history
            .iter()
            .zip(&st.per_step_current)
            .enumerate()
        {
            let _ = writeln!(s, "{b},{t},{h},{c},{}", fraction(*h, *c));
        }
        let steps = st.per_step_history.len() as f64;
        let h = st.per_step_history.iter().sum::<f64>() / steps;
        let c = st.per_step_current.iter().sum::<f64>() / steps;
        let _ = writeln!(s, "{b},all,{h},{c},{}", st.history_fraction);
    }
    emit(out, &s)?;
    Ok(0)
}
