//! `gmixer`: data preparation, training, evaluation, gradient verification,
//! and the mixer-vs-attention scaling benchmark.
//!
//! Exit codes are stable across subcommands: 0 success, 1 property-check
//! failure, 2 input or contract error, 3 numerical abort.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gmixer_core::config::{apply_kv, parse_config_file};
use gmixer_core::data::{
    self, compute_degree_stats, load_jsonl, load_prepared_dir, prepare_dataset, synth,
    DatasetSplit, DeltaMode, PrepOptions, StatsSidecar,
};
use gmixer_core::error::Error;
use gmixer_core::gradcheck::{grad_check, GradCheckOptions};
use gmixer_core::model::GmnModel;
use gmixer_core::scalar::Scalar;
use gmixer_core::tape::Tape;
use gmixer_core::training::{evaluate, train, TrainConfig};

const EXIT_PROPERTY_FAILURE: u8 = 1;
const EXIT_INPUT_ERROR: u8 = 2;
const EXIT_NUMERIC_ABORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gmixer",
    about = "Graph regression with multi-aggregator message passing and mixer updates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)] // TrainArgs carries every config flag
enum Command {
    /// Validate a JSONL graph file, split it, and write splits plus the
    /// stats sidecar required by training.
    Prep(PrepArgs),
    /// Train on a prepared data directory.
    Train(TrainArgs),
    /// Print the MAE of a checkpoint on a split file.
    Eval(EvalArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Time token mixing against dot-product attention over a size ladder.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PrepArgs {
    /// Input graphs, one JSON object per line.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for train/val/test splits and the sidecar.
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated train,val,test fractions (must sum to 1).
    #[arg(long, default_value = "0.8,0.1,0.1")]
    fractions: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Degree-normalizer formulation: log_mean or raw_mean_degree.
    #[arg(long, default_value = "log_mean")]
    delta_mode: DeltaMode,
    /// Maximum admissible node count; larger molecules are rejected.
    #[arg(long, default_value_t = 37)]
    n_max: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared data directory (output of `prep`).
    #[arg(long)]
    data_dir: PathBuf,
    /// Run directory for metrics, checkpoints, and the summary.
    #[arg(long)]
    run_dir: PathBuf,
    /// Optional `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 32 or 64.
    #[arg(long)]
    precision: Option<u32>,
    #[arg(long)]
    delta_mode: Option<DeltaMode>,
    #[arg(long)]
    k_layers: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    d_e: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    token_hidden: Option<usize>,
    #[arg(long)]
    channel_hidden: Option<usize>,
    #[arg(long)]
    readout_hidden: Option<usize>,
    /// gelu or relu.
    #[arg(long)]
    activation: Option<String>,
    /// Global gradient-norm cap; 0 disables.
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Step-decay interval in epochs; 0 keeps the learning rate flat.
    #[arg(long)]
    lr_step_every: Option<usize>,
    #[arg(long)]
    lr_step_gamma: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// JSONL split file written by `prep`.
    #[arg(long)]
    split_file: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Node count of the probe graph.
    #[arg(long, default_value_t = 5)]
    nodes: usize,
    /// Target number of sampled parameter coordinates.
    #[arg(long, default_value_t = 200)]
    probes: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 2)]
    k_layers: usize,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    d_e: usize,
    /// Fault-injection hook: skew the analytic gradients and expect the
    /// check to fail (used to validate detector sensitivity).
    #[arg(long, hide = true)]
    corrupt_backward: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated sequence lengths (at least 5, each at least 16).
    #[arg(long, default_value = "64,128,256,512,1024,2048")]
    sizes: String,
    /// Timing samples per size; the median is reported.
    #[arg(long, default_value_t = 7)]
    repeats: usize,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Where to write the JSON report.
    #[arg(long, default_value = "bench_report.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Prep(args) => run_or_exit(cmd_prep(args)),
        Command::Train(args) => run_or_exit(cmd_train(args)),
        Command::Eval(args) => run_or_exit(cmd_eval(args)),
        Command::Gradcheck(args) => run_or_exit(cmd_gradcheck(args)),
        Command::Bench(args) => run_or_exit(cmd_bench(args)),
    }
}

fn run_or_exit(result: Result<u8, Error>) -> ExitCode {
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::TrainAbort { .. } => EXIT_NUMERIC_ABORT,
                _ => EXIT_INPUT_ERROR,
            };
            ExitCode::from(code)
        }
    }
}

fn parse_fractions(s: &str) -> Result<[f64; 3], Error> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid fractions {s:?}")))?;
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected three fractions (train,val,test), got {}",
            parts.len()
        )));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn cmd_prep(args: PrepArgs) -> Result<u8, Error> {
    let opts = PrepOptions {
        fractions: parse_fractions(&args.fractions)?,
        seed: args.seed,
        delta_mode: args.delta_mode,
        n_max: args.n_max,
    };
    let sidecar = prepare_dataset(&args.input, &args.out_dir, &opts)?;
    println!(
        "prepared {} graphs -> {:?} (train/val/test = {}/{}/{}, delta = {:.6}, n_max observed = {})",
        sidecar.counts.iter().sum::<usize>(),
        args.out_dir,
        sidecar.counts[0],
        sidecar.counts[1],
        sidecar.counts[2],
        sidecar.delta,
        sidecar.n_max_observed,
    );
    Ok(0)
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => TrainConfig::default(),
    };
    macro_rules! over {
        ($field:ident) => {
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        };
    }
    over!(lr);
    over!(beta1);
    over!(beta2);
    over!(eps);
    over!(batch_size);
    over!(max_epochs);
    over!(patience);
    over!(seed);
    over!(precision);
    over!(delta_mode);
    over!(k_layers);
    over!(d);
    over!(d_e);
    over!(n_max);
    over!(token_hidden);
    over!(channel_hidden);
    over!(readout_hidden);
    over!(grad_clip);
    over!(lr_step_every);
    over!(lr_step_gamma);
    if let Some(act) = &args.activation {
        apply_kv(&mut cfg, "activation", act)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn git_describe() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    Some(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

fn cmd_train(args: TrainArgs) -> Result<u8, Error> {
    let cfg = resolve_train_config(&args)?;
    let (split, sidecar) = load_prepared_dir(&args.data_dir)?;
    if sidecar.delta_mode != cfg.delta_mode {
        return Err(Error::Config(format!(
            "config delta_mode {} does not match the sidecar's {}; re-run prep with --delta-mode {}",
            cfg.delta_mode, sidecar.delta_mode, cfg.delta_mode
        )));
    }

    match cfg.precision {
        64 => train_at::<f64>(&cfg, &split, &sidecar, &args.run_dir),
        32 => train_at::<f32>(&cfg, &split, &sidecar, &args.run_dir),
        _ => unreachable!("validated"),
    }
}

fn train_at<F: Scalar>(
    cfg: &TrainConfig,
    split: &DatasetSplit,
    sidecar: &StatsSidecar,
    run_dir: &Path,
) -> Result<u8, Error> {
    let outcome = train::<F>(cfg, split, sidecar.delta, Some(run_dir))?;
    let train_mae = evaluate(&outcome.model, &split.train)?;

    let summary = serde_json::json!({
        "best_epoch": outcome.best_epoch,
        "best_val_mae": outcome.best_val_mae,
        "best_test_mae": outcome.best_test_mae,
        "train_mae": train_mae,
        "epochs_run": outcome.history.len(),
        "config": cfg,
        "delta": sidecar.delta,
        "git_describe": git_describe(),
    });
    let body = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::contract(e.to_string()))?;
    std::fs::write(run_dir.join("summary.json"), body + "\n")?;

    println!(
        "trained {} epochs; train mae {:.6}, best val mae {}, best test mae {}",
        outcome.history.len(),
        train_mae,
        outcome
            .best_val_mae
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "n/a".into()),
        outcome
            .best_test_mae
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<u8, Error> {
    let model = GmnModel::<f64>::load(&args.checkpoint)?;
    let graphs = load_jsonl(&args.split_file)?;
    if graphs.is_empty() {
        return Err(Error::contract("empty split file"));
    }
    let max_atom = graphs
        .iter()
        .flat_map(|g| g.atom_types.iter().copied())
        .max()
        .unwrap_or(0);
    if max_atom >= model.hyper.vocab_atoms {
        return Err(Error::contract(format!(
            "vocab mismatch: checkpoint vocab_atoms = {}, split needs at least {}",
            model.hyper.vocab_atoms,
            max_atom + 1
        )));
    }
    let max_bond = graphs
        .iter()
        .flat_map(|g| g.bonds.iter().map(|&(_, _, t)| t))
        .max();
    if let Some(mb) = max_bond {
        if mb >= model.hyper.vocab_bonds {
            return Err(Error::contract(format!(
                "vocab mismatch: checkpoint vocab_bonds = {}, split needs at least {}",
                model.hyper.vocab_bonds,
                mb + 1
            )));
        }
    }
    let mae = evaluate(&model, &graphs)?;
    println!("mae={mae}");
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<u8, Error> {
    if args.nodes == 0 {
        return Err(Error::contract("gradcheck: nodes must be at least 1"));
    }
    let graph = synth::probe_graph(args.nodes, args.seed);
    let n_max = args.nodes + 1; // keep one padded slot in play
    let delta = if graph.bonds.is_empty() {
        1.0 // isolated probe graph: any positive normalizer exercises the math
    } else {
        compute_degree_stats(std::slice::from_ref(&graph), DeltaMode::LogMean)?.delta
    };

    let cfg = TrainConfig {
        k_layers: args.k_layers,
        d: args.d,
        d_e: args.d_e,
        n_max,
        token_hidden: args.d.div_ceil(2),
        channel_hidden: args.d,
        readout_hidden: args.d,
        ..TrainConfig::default()
    };
    let hyper = cfg.hyper(6, 4, delta);
    let model = GmnModel::<f64>::new(hyper, args.seed)?;
    let batch = data::pad_batch(std::slice::from_ref(&graph), n_max)?;

    let started = std::time::Instant::now();
    let options = GradCheckOptions {
        probes: args.probes,
        step: args.h,
        seed: args.seed,
        corrupt_backward: args.corrupt_backward,
    };
    let mut registry = model.registry.clone();
    let report = grad_check(
        |reg| {
            let mut tape = Tape::new();
            let (_, loss) = model.forward_with_loss_on(reg, &mut tape, &batch)?;
            Ok((tape, loss))
        },
        &mut registry,
        &options,
    )?;

    for group in &report.groups {
        println!(
            "group {:<28} probes {:>3}  max relative error {:.3e}",
            group.group, group.probes, group.max_relative_error
        );
    }
    println!(
        "overall: {} probes, max relative error {:.3e} ({:.2}s)",
        report.probes,
        report.max_relative_error,
        started.elapsed().as_secs_f64()
    );
    if report.passes(1e-4) {
        Ok(0)
    } else {
        eprintln!("gradient check FAILED: max relative error >= 1e-4");
        Ok(EXIT_PROPERTY_FAILURE)
    }
}

fn cmd_bench(args: BenchArgs) -> Result<u8, Error> {
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid sizes {:?}", args.sizes)))?;
    let cfg = gmixer_core::bench::BenchConfig {
        sizes,
        repeats: args.repeats,
        d: args.d,
        seed: args.seed,
    };
    let report = gmixer_core::bench::run_bench(&cfg)?;
    let body =
        serde_json::to_string_pretty(&report).map_err(|e| Error::contract(e.to_string()))?;
    std::fs::write(&args.out, body + "\n")?;

    for (i, &n) in report.sizes.iter().enumerate() {
        println!(
            "n = {:>5}: mixer {:>12.0} ns   attention {:>12.0} ns",
            n, report.mixer_ns[i], report.attention_ns[i]
        );
    }
    println!(
        "mixer exponent {:.3} (r2 {:.4}), attention exponent {:.3} (r2 {:.4})",
        report.mixer_exponent,
        report.mixer_r_squared,
        report.attention_exponent,
        report.attention_r_squared
    );
    if report.exponent_gap() >= 0.5 {
        Ok(0)
    } else {
        eprintln!(
            "scaling separation FAILED: exponent gap {:.3} < 0.5",
            report.exponent_gap()
        );
        Ok(EXIT_PROPERTY_FAILURE)
    }
}
