//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use mfpq::analysis::{
    account_memory, bench_parallel_vs_serial, contribution_stats, random_spikes, QlifModel, Scheme,
};
use mfpq::io::{gen_synthetic, Checkpoint, SYNTHETIC_SIGMA};
use mfpq::neurons::{
    compare_modes, network_forward, qlif_step, MfpLayer, Mode, Network, NeuronConfig, QLifState,
    SpikeTrain, TemporalMixMatrix, Weights,
};
use mfpq::quant::{quantize_level, QuantSpec};
use mfpq::training::{train, TrainConfig};
use mfpq::{LowerTriangular, Real, Tensor};
use rand::Rng;

use common::{arch, finite_difference_check, random_latent, random_mix, random_network, rng};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "parallel/streaming exactness",
            limit: Some(Duration::from_secs(60)),
            run: parallel_streaming_exact,
        },
        Criterion {
            id: 2,
            name: "folded-threshold characterization",
            limit: Some(Duration::from_secs(10)),
            run: folded_thresholds,
        },
        Criterion {
            id: 3,
            name: "quantizer oracle equivalence",
            limit: Some(Duration::from_secs(5)),
            run: quantizer_oracle,
        },
        Criterion {
            id: 4,
            name: "2-bit membrane decay bound",
            limit: None,
            run: decay_bound,
        },
        Criterion {
            id: 5,
            name: "history fraction falls with membrane bits",
            limit: None,
            run: history_fraction_direction,
        },
        Criterion {
            id: 6,
            name: "gradient correctness",
            limit: Some(Duration::from_secs(30)),
            run: gradient_check,
        },
        Criterion {
            id: 7,
            name: "memory ratio",
            limit: None,
            run: memory_ratio,
        },
        Criterion {
            id: 8,
            name: "parallel forward speedup",
            limit: None,
            run: speedup,
        },
        Criterion {
            id: 9,
            name: "desk-scale learning",
            limit: Some(Duration::from_secs(60)),
            run: desk_learning,
        },
        Criterion {
            id: 10,
            name: "checkpoint round trip",
            limit: None,
            run: checkpoint_round_trip,
        },
    ];

    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(d), Some(limit)) if elapsed > limit => {
                Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}"))
            }
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {}: {detail} [{elapsed:.2?}]", c.id, c.name),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {}: {detail} [{elapsed:.2?}]", c.id, c.name);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

fn spikes_equal(a: &[SpikeTrain], b: &[SpikeTrain]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

fn random_cfg(r: &mut rand_chacha::ChaCha8Rng) -> NeuronConfig {
    NeuronConfig {
        v_th: r.random_range(0.1..1.2),
        ..NeuronConfig::default()
    }
}

fn parallel_streaming_exact() -> Outcome {
    let mut r = rng(1);
    let mut spikes = 0usize;
    let mut compared = 0usize;
    let mut check =
        |net_spikes: (Vec<SpikeTrain>, Vec<SpikeTrain>), i: usize| -> Result<(), String> {
            let (p, s) = net_spikes;
            if !spikes_equal(&p, &s) {
                return Err(format!(
                    "network {i}: streaming spikes differ from parallel"
                ));
            }
            spikes += p.iter().map(SpikeTrain::count_ones).sum::<usize>();
            compared += p.iter().map(SpikeTrain::len).sum::<usize>();
            Ok(())
        };
    for i in 0..1000 {
        let layers = r.random_range(1..=3);
        let t = [1, 2, 4, 8, 10][r.random_range(0..5)];
        let widths: Vec<usize> = (0..=layers).map(|_| r.random_range(1..=32)).collect();
        let batch = r.random_range(1..=4);
        let cfg = random_cfg(&mut r);
        let rate = r.random_range(0.1..0.9);
        let input = common::random_spikes(&mut r, t, batch, widths[0], rate);
        // even networks on the f32 training path, odd ones in f64
        let pair = if i % 2 == 0 {
            let net: Network<f32> = random_network(&mut r, &widths, t, cfg, false);
            (
                network_forward(&net, &input, Mode::Parallel)
                    .map_err(|e| e.to_string())?
                    .spikes,
                network_forward(&net, &input, Mode::Streaming)
                    .map_err(|e| e.to_string())?
                    .spikes,
            )
        } else {
            let net: Network<f64> = random_network(&mut r, &widths, t, cfg, false);
            (
                network_forward(&net, &input, Mode::Parallel)
                    .map_err(|e| e.to_string())?
                    .spikes,
                network_forward(&net, &input, Mode::Streaming)
                    .map_err(|e| e.to_string())?
                    .spikes,
            )
        };
        check(pair, i)?;
    }
    Ok(format!(
        "1000 networks, {compared} spike slots compared ({spikes} spikes), 0 mismatches"
    ))
}

fn diagonal_net(r: &mut rand_chacha::ChaCha8Rng, widths: &[usize], t: usize) -> Network<f64> {
    let layers = widths
        .windows(2)
        .map(|w| {
            let diag: Vec<f64> = (0..t).map(|_| r.random_range(0.2..1.5)).collect();
            MfpLayer {
                weights: Weights::from_latent(random_latent(r, w[1], w[0]), 1).unwrap(),
                mix: TemporalMixMatrix::new(LowerTriangular::diagonal(&diag)),
            }
        })
        .collect();
    Network::new(
        layers,
        NeuronConfig {
            v_th: r.random_range(0.1..0.8),
            ..NeuronConfig::default()
        },
        t,
    )
    .unwrap()
}

fn folded_thresholds() -> Outcome {
    // Exhaustive: every 0/1 pattern of a (T=3, B=2, N=2) input block.
    let (t, b, n) = (3, 2, 2);
    let cases = 1usize << (t * b * n);
    let mut r = rng(2);
    let models = 4;
    let mut mismatches = 0usize;
    let mut spikes = 0usize;
    for _ in 0..models {
        let net = diagonal_net(&mut r, &[n, 3, 2], t);
        for code in 0..cases {
            let input = SpikeTrain::from_fn(t, b, n, |ti, bi, ni| {
                code >> ((ti * b + bi) * n + ni) & 1 == 1
            });
            let exact =
                network_forward(&net, &input, Mode::Streaming).map_err(|e| e.to_string())?;
            let folded =
                network_forward(&net, &input, Mode::FoldedDiagonal).map_err(|e| e.to_string())?;
            spikes += exact
                .spikes
                .iter()
                .map(SpikeTrain::count_ones)
                .sum::<usize>();
            if !spikes_equal(&exact.spikes, &folded.spikes) {
                mismatches += 1;
            }
        }
    }
    if mismatches > 0 {
        return Err(format!(
            "{mismatches} of {} diagonal cases diverged",
            models * cases
        ));
    }

    // Non-diagonal M at T=2: search all inputs of a 1 -> 1 layer for a
    // divergence between the folded rule and the exact dynamics.
    let layer = MfpLayer {
        weights: Weights::from_latent(Tensor::new(&[1, 2], vec![1.0f64, 1.0]).unwrap(), 1).unwrap(),
        mix: TemporalMixMatrix::new(LowerTriangular::from_packed(2, vec![1.0, 1.0, 1.0]).unwrap()),
    };
    let net = Network::new(
        vec![layer],
        NeuronConfig {
            v_th: 1.5,
            ..NeuronConfig::default()
        },
        2,
    )
    .unwrap();
    let mut example = None;
    let mut diverged = 0;
    for code in 0..16usize {
        let input = SpikeTrain::from_fn(2, 1, 2, |ti, _, ni| code >> (ti * 2 + ni) & 1 == 1);
        let cmp = compare_modes(&net, &input, Mode::FoldedDiagonal).map_err(|e| e.to_string())?;
        let streaming = compare_modes(&net, &input, Mode::Streaming).map_err(|e| e.to_string())?;
        if streaming.mismatched != 0 {
            return Err("streaming diverged from parallel on the T=2 model".into());
        }
        if cmp.mismatched > 0 {
            diverged += 1;
            example.get_or_insert((input.clone(), cmp.first.unwrap()));
        }
    }
    let Some((input, m)) = example else {
        return Err("no divergence found for the non-diagonal T=2 matrix".into());
    };
    let pattern: Vec<String> = (0..2)
        .map(|ti| {
            (0..2)
                .map(|ni| if input.get(ti, 0, ni) { '1' } else { '0' })
                .collect()
        })
        .collect();
    Ok(format!(
        "{} diagonal cases over {models} models agree ({spikes} spikes); M=[[1,0],[1,1]] diverges on {diverged}/16 inputs, e.g. input {} at t={} neuron {}",
        models * cases,
        pattern.join("|"),
        m.t,
        m.neuron
    ))
}

/// Nearest level by exhaustive search, ties to the larger magnitude.
fn oracle_level(x: f64, spec: &QuantSpec) -> i64 {
    let l = spec.max_level();
    let mut best = 0i64;
    let mut best_d = f64::INFINITY;
    for k in -l..=l {
        let d = (x - spec.level_value(k)).abs();
        if d < best_d || (d == best_d && k.abs() > best.abs()) {
            best = k;
            best_d = d;
        }
    }
    best
}

fn quantizer_oracle() -> Outcome {
    let mut r = rng(3);
    let mut checked = 0usize;
    let mut ties = 0usize;
    for bits in [2u32, 3, 4, 8] {
        let l = (1i64 << (bits - 1)) - 1;
        // α = L puts levels on the integers, so the midpoints k + 1/2 are
        // exact ties in binary floating point
        let integer_grid = QuantSpec::new(bits, l as f64).unwrap();
        for k in -l..l {
            let x = k as f64 + 0.5;
            let got = quantize_level(x, &integer_grid).unwrap();
            let want = if x > 0.0 { k + 1 } else { k };
            if got != want || got != oracle_level(x, &integer_grid) {
                return Err(format!("tie {x} at b={bits}: got {got}, want {want}"));
            }
            ties += 1;
        }
        for i in 0..100_000 {
            let scale = if i % 4 == 0 {
                l as f64
            } else {
                r.random_range(0.05..20.0)
            };
            let spec = QuantSpec::new(bits, scale).unwrap();
            let x = match i % 5 {
                0 => spec.level_value(r.random_range(-l..=l)),
                _ => r.random_range(-1.5 * scale..1.5 * scale),
            };
            let got = quantize_level(x, &spec).unwrap();
            let want = oracle_level(x, &spec);
            if got != want {
                return Err(format!(
                    "b={bits} alpha={scale} x={x}: got {got}, oracle {want}"
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} random values and {ties} exact ties match the brute-force oracle"
    ))
}

fn decay_bound() -> Outcome {
    let cfg = NeuronConfig {
        tau: 0.5,
        v_th: 1e9,
        membrane_bits: Some(2),
        ..NeuronConfig::default()
    };
    let mut worst = 0;
    for scale in [0.25, 1.0, 3.0] {
        let l = QuantSpec::new(2, scale).unwrap().max_level();
        for start in (-l..=l).filter(|&q| q != 0) {
            let mut st = QLifState {
                levels: vec![start],
                scale,
            };
            let mut steps = 0;
            while st.levels[0] != 0 {
                st = qlif_step(&st, &Tensor::new(&[1], vec![0.0]).unwrap(), &cfg)
                    .map_err(|e| e.to_string())?
                    .1;
                steps += 1;
                if steps > 2 {
                    return Err(format!(
                        "level {start} (alpha {scale}) still nonzero after 2 steps"
                    ));
                }
            }
            worst = worst.max(steps);
        }
    }
    Ok(format!(
        "every nonzero 2-bit level reaches 0; worst case {worst} step(s)"
    ))
}

fn history_fraction_direction() -> Outcome {
    let t = 8;
    let train_set = gen_synthetic(16, 256, 10, SYNTHETIC_SIGMA, t).map_err(|e| e.to_string())?;
    let net = Network::<f32>::init(&arch(&[16, 32, 2]), t, NeuronConfig::default(), 10)
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 0.05,
        momentum: 0.9,
        epochs: 5,
        batch: 32,
        seed: 10,
        ..TrainConfig::default()
    };
    let (net, metrics) = train(net, &train_set, &cfg).map_err(|e| e.to_string())?;
    let model = QlifModel::from_network(&net).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for seed in [101u64, 202, 303] {
        let sample = gen_synthetic(16, 256, seed, SYNTHETIC_SIGMA, t).map_err(|e| e.to_string())?;
        let f: Vec<f64> = [8u32, 4, 2]
            .iter()
            .map(|&b| contribution_stats(&model, sample.inputs(), b).map(|s| s.history_fraction))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let line = format!("seed {seed}: 8b {:.4} 4b {:.4} 2b {:.4}", f[0], f[1], f[2]);
        if !(f[0] >= f[1] && f[1] >= f[2]) {
            return Err(format!("not monotone, {line}"));
        }
        lines.push(line);
    }
    Ok(format!(
        "model at train accuracy {:.3}, 256 samples per seed; {}",
        metrics.last().map_or(0.0, |m| m.accuracy),
        lines.join("; ")
    ))
}

fn gradient_check() -> Outcome {
    let mut r = rng(6);
    let net: Network<f64> = random_network(&mut r, &[8, 8, 2], 4, NeuronConfig::default(), false);
    let input = common::random_spikes(&mut r, 4, 3, 8, 0.5);
    let labels = [0usize, 1, 1];
    let check = finite_difference_check(&net, &input, &labels, 1e-5, 1e-9);
    if check.worst_rel < 1e-4 {
        Ok(format!(
            "{} parameters, worst relative error {:.2e} ({})",
            check.parameters, check.worst_rel, check.worst_name
        ))
    } else {
        Err(format!(
            "worst relative error {:.2e} at {}",
            check.worst_rel, check.worst_name
        ))
    }
}

fn memory_ratio() -> Outcome {
    let a = arch(&[1024, 1024, 1024]);
    let base = account_memory(&a, Scheme::Fp32Lif, 10).map_err(|e| e.to_string())?;
    let mfp = account_memory(&a, Scheme::MfpBinary, 10).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} weights: fp32-lif {:.3} MB, mfp-binary {:.3} MB, ratio {:.2}x",
        a.total_weights(),
        base.megabytes(),
        mfp.megabytes(),
        mfp.ratio
    );
    if a.total_weights() >= 1_000_000 && (28.0..=34.0).contains(&mfp.ratio) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn speedup() -> Outcome {
    let net = Network::<f32>::init(&arch(&[256, 256, 256]), 10, NeuronConfig::default(), 8)
        .map_err(|e| e.to_string())?;
    let input = random_spikes(10, 128, 256, 0.2, 8);
    let r = bench_parallel_vs_serial(&net, &input, 7).map_err(|e| e.to_string())?;
    let detail = format!(
        "T=10 B=128 256-256-256: parallel {:.2} ms, serial {:.2} ms, speedup {:.2}x, outputs match {}",
        r.parallel_ms, r.serial_ms, r.speedup, r.outputs_match
    );
    if r.speedup > 1.0 && r.outputs_match {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_learning() -> Outcome {
    let data = gen_synthetic(16, 400, 7, SYNTHETIC_SIGMA, 4).map_err(|e| e.to_string())?;
    let init = Network::<f32>::init(&arch(&[16, 32, 2]), 4, NeuronConfig::default(), 7)
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 0.05,
        momentum: 0.9,
        epochs: 30,
        batch: 32,
        seed: 7,
        ..TrainConfig::default()
    };
    let (a, metrics) = train(init.clone(), &data, &cfg).map_err(|e| e.to_string())?;
    let (b, _) = train(init, &data, &cfg).map_err(|e| e.to_string())?;
    let bytes_a = Checkpoint::new(a, cfg.seed)
        .to_bytes()
        .map_err(|e| e.to_string())?;
    let bytes_b = Checkpoint::new(b, cfg.seed)
        .to_bytes()
        .map_err(|e| e.to_string())?;
    let first = metrics.iter().find(|m| m.accuracy >= 0.95);
    let final_acc = metrics.last().map_or(0.0, |m| m.accuracy);
    let detail = format!(
        "final train accuracy {final_acc:.3}, first >= 0.95 at epoch {}, reruns byte-identical {}",
        first.map_or("none".to_string(), |m| (m.epoch + 1).to_string()),
        bytes_a == bytes_b
    );
    if final_acc >= 0.95 && bytes_a == bytes_b {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_checkpoint<T: Real>(r: &mut rand_chacha::ChaCha8Rng) -> Network<T> {
    let layers = r.random_range(1..=3);
    let t = r.random_range(1..=12);
    let widths: Vec<usize> = (0..=layers).map(|_| r.random_range(1..=40)).collect();
    let cfg = NeuronConfig {
        tau: r.random_range(0.05..1.0),
        v_th: r.random_range(0.1..3.0),
        v_reset: r.random_range(-0.5..0.05),
        ..NeuronConfig::default()
    };
    let layers = widths
        .windows(2)
        .map(|w| MfpLayer {
            weights: Weights::from_latent(
                random_latent(r, w[1], w[0]),
                if r.random_bool(0.3) { 32 } else { 1 },
            )
            .unwrap(),
            mix: random_mix(r, t, true),
        })
        .collect();
    Network::new(layers, cfg, t).unwrap()
}

fn checkpoint_round_trip() -> Outcome {
    let mut r = rng(10);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut total = 0usize;
    for i in 0..100 {
        let ck = Checkpoint::new(random_checkpoint(&mut r), r.random());
        let bytes = ck.to_bytes().map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("m{i}.ckpt"));
        ck.save(&path).map_err(|e| e.to_string())?;
        let loaded = Checkpoint::load(&path).map_err(|e| format!("model {i}: {e}"))?;
        if loaded != ck {
            return Err(format!("model {i}: loaded model differs"));
        }
        if std::fs::read(&path).map_err(|e| e.to_string())? != bytes
            || loaded.to_bytes().map_err(|e| e.to_string())? != bytes
        {
            return Err(format!("model {i}: bytes differ after save/load/save"));
        }
        total += bytes.len();
    }
    Ok(format!(
        "100 random models byte-identical after save/load ({total} bytes total)"
    ))
}
