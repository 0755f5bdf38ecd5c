//! Acceptance suite: the checks this artifact must pass before it ships.
//!
//! Everything runs inside one sequential test so benchmark timings are not
//! polluted by sibling test threads; each criterion prints its own PASS/FAIL
//! line. Run with `cargo test -p gmixer-core --test acceptance -- --nocapture`.

mod common;

use std::panic::AssertUnwindSafe;
use std::time::Instant;

use gmixer_core::bench::{run_bench, BenchConfig};
use gmixer_core::data::synth::generate_zinc_like;
use gmixer_core::data::{
    load_jsonl, pad_batch, prepare_dataset, write_jsonl, DeltaMode, MolecularGraph, PrepOptions,
};
use gmixer_core::gradcheck::{grad_check, GradCheckOptions};
use gmixer_core::layers::{aggregate_multi, degree_scaler, mixer_block, MixerVars, ScalerKind};
use gmixer_core::model::GmnModel;
use gmixer_core::params::ParamRegistry;
use gmixer_core::rng::SplitMix64;
use gmixer_core::tape::{Activation, Tape};
use gmixer_core::tensor::Tensor;
use gmixer_core::training::{evaluate, train, TrainConfig};

use common::{brute_force_aggregate, random_graph, random_permutation};

type Check = Result<String, String>;
type Criterion = (&'static str, Box<dyn FnOnce() -> Check>);

fn fail(msg: impl Into<String>) -> Check {
    Err(msg.into())
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------------------
// criterion 1: gradient fidelity of the full differentiable program
// ---------------------------------------------------------------------------
fn criterion_1_gradient_fidelity() -> Check {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for seed in [11u64, 23, 37] {
        let graph = gmixer_core::data::synth::probe_graph(5, seed);
        let n_max = 6;
        let delta = gmixer_core::data::compute_degree_stats(
            std::slice::from_ref(&graph),
            DeltaMode::LogMean,
        )
        .map_err(|e| e.to_string())?
        .delta;
        let cfg = TrainConfig {
            k_layers: 2,
            d: 16,
            d_e: 8,
            n_max,
            token_hidden: 8,
            channel_hidden: 16,
            readout_hidden: 16,
            ..TrainConfig::default()
        };
        let model = GmnModel::<f64>::new(cfg.hyper(6, 4, delta), seed).map_err(|e| e.to_string())?;
        let batch = pad_batch(std::slice::from_ref(&graph), n_max).map_err(|e| e.to_string())?;
        let mut registry = model.registry.clone();
        let report = grad_check(
            |reg| {
                let mut tape = Tape::new();
                let (_, loss) = model.forward_with_loss_on(reg, &mut tape, &batch)?;
                Ok((tape, loss))
            },
            &mut registry,
            &GradCheckOptions {
                probes: 200,
                step: 1e-5,
                seed,
                corrupt_backward: false,
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(
            report.probes >= 200,
            format!("only {} coordinates sampled", report.probes),
        )?;
        ensure(
            report.max_relative_error < 1e-4,
            format!(
                "seed {seed}: max relative error {:.3e} >= 1e-4",
                report.max_relative_error
            ),
        )?;
        worst = worst.max(report.max_relative_error);
    }
    let elapsed = started.elapsed().as_secs_f64();
    ensure(elapsed < 60.0, format!("took {elapsed:.1}s, budget 60s"))?;
    Ok(format!(
        "3 random 5-node graphs, K=2 d=16, worst relative error {worst:.3e} in {elapsed:.1}s"
    ))
}

// ---------------------------------------------------------------------------
// criterion 2: zero-weight mixer is the identity on unmasked input
// ---------------------------------------------------------------------------
fn criterion_2_mixer_identity() -> Check {
    let (n_max, d) = (6, 5);
    let mut reg = ParamRegistry::<f64>::new(0);
    reg.add("ln1g", Tensor::filled(&[d], 1.0)).unwrap();
    reg.add("ln1b", Tensor::zeros(&[d])).unwrap();
    reg.add("tw1", Tensor::zeros(&[n_max, 4])).unwrap();
    reg.add("tb1", Tensor::zeros(&[4])).unwrap();
    reg.add("tw2", Tensor::zeros(&[4, n_max])).unwrap();
    reg.add("tb2", Tensor::zeros(&[n_max])).unwrap();
    reg.add("ln2g", Tensor::filled(&[d], 1.0)).unwrap();
    reg.add("ln2b", Tensor::zeros(&[d])).unwrap();
    reg.add("cw1", Tensor::zeros(&[d, 7])).unwrap();
    reg.add("cb1", Tensor::zeros(&[7])).unwrap();
    reg.add("cw2", Tensor::zeros(&[7, d])).unwrap();
    reg.add("cb2", Tensor::zeros(&[d])).unwrap();

    let mut rng = SplitMix64::new(99);
    let x0 = Tensor::from_vec(
        &[n_max, d],
        (0..n_max * d).map(|_| rng.uniform(-3.0, 3.0)).collect(),
    )
    .unwrap();
    let mut tape = Tape::new();
    let var = |tape: &mut Tape<f64>, name: &str| tape.param(&reg, reg.id_by_name(name).unwrap());
    let vars = MixerVars {
        ln1_gamma: var(&mut tape, "ln1g"),
        ln1_beta: var(&mut tape, "ln1b"),
        tok_w1: var(&mut tape, "tw1"),
        tok_b1: var(&mut tape, "tb1"),
        tok_w2: var(&mut tape, "tw2"),
        tok_b2: var(&mut tape, "tb2"),
        ln2_gamma: var(&mut tape, "ln2g"),
        ln2_beta: var(&mut tape, "ln2b"),
        ch_w1: var(&mut tape, "cw1"),
        ch_b1: var(&mut tape, "cb1"),
        ch_w2: var(&mut tape, "cw2"),
        ch_b2: var(&mut tape, "cb2"),
    };
    let x = tape.constant(x0.clone());
    let out = mixer_block(&mut tape, x, &[true; 6], n_max, &vars, 1e-5, Activation::Gelu)
        .map_err(|e| e.to_string())?;
    let max_diff = tape
        .value(out)
        .data()
        .iter()
        .zip(x0.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    ensure(
        max_diff < 1e-12,
        format!("max abs diff {max_diff:.3e} >= 1e-12"),
    )?;
    Ok(format!(
        "both residual paths pass input through exactly (max abs diff {max_diff:.1e})"
    ))
}

// ---------------------------------------------------------------------------
// criterion 3: combined aggregation matches a brute-force oracle and is
// exactly invariant to neighbor order
// ---------------------------------------------------------------------------
fn criterion_3_aggregation_oracle() -> Check {
    let mut rng = SplitMix64::new(3000);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let n = 1 + rng.below(8);
        let graph = random_graph(&mut rng, n, true);
        let batch = pad_batch(std::slice::from_ref(&graph), n).map_err(|e| e.to_string())?;
        let wiring = batch.edges();
        let d_msg = 1 + rng.below(6);
        let delta = rng.uniform(0.3, 2.0);
        let rows: Vec<f64> = (0..wiring.dst_rows.len() * d_msg)
            .map(|_| rng.uniform(-2.0, 2.0))
            .collect();
        let messages = Tensor::from_vec(&[wiring.dst_rows.len(), d_msg], rows).unwrap();

        // library path
        let run = |msgs: Tensor<f64>, seg: Vec<usize>| -> Vec<f64> {
            let mut tape = Tape::new();
            let mv = tape.constant(msgs);
            let out =
                aggregate_multi(&mut tape, mv, &seg, &batch.degrees, delta, n).expect("aggregate");
            tape.value(out).data().to_vec()
        };
        let got = run(messages.clone(), wiring.dst_rows.clone());

        // independent loop-by-loop oracle
        let mut per_node: Vec<common::Messages> = vec![Vec::new(); n];
        for (e, &dst) in wiring.dst_rows.iter().enumerate() {
            per_node[dst].push(messages.data()[e * d_msg..(e + 1) * d_msg].to_vec());
        }
        let expect = brute_force_aggregate(&per_node, delta, d_msg);
        for (i, row) in expect.iter().enumerate() {
            for (c, &want) in row.iter().enumerate() {
                let actual = got[i * 9 * d_msg + c];
                let diff = (actual - want).abs();
                ensure(
                    diff < 1e-12,
                    format!("case {case}: node {i} channel {c} differs by {diff:.3e}"),
                )?;
                worst = worst.max(diff);
            }
        }

        // exact invariance under a permutation of message arrival order
        let e_count = wiring.dst_rows.len();
        if e_count > 1 {
            let perm = random_permutation(&mut rng, e_count);
            let mut p_rows = vec![0.0; e_count * d_msg];
            let mut p_seg = vec![0usize; e_count];
            for (old, &new) in perm.iter().enumerate() {
                p_rows[new * d_msg..(new + 1) * d_msg]
                    .copy_from_slice(&messages.data()[old * d_msg..(old + 1) * d_msg]);
                p_seg[new] = wiring.dst_rows[old];
            }
            let shuffled = run(Tensor::from_vec(&[e_count, d_msg], p_rows).unwrap(), p_seg);
            for (a, b) in got.iter().zip(&shuffled) {
                ensure(
                    a.to_bits() == b.to_bits(),
                    format!("case {case}: neighbor order changed the output"),
                )?;
            }
        }
    }
    Ok(format!(
        "500 random graphs vs brute force (worst diff {worst:.1e}), order-invariance bit-exact"
    ))
}

// ---------------------------------------------------------------------------
// criterion 4: scaler reciprocity at a real dataset's delta
// ---------------------------------------------------------------------------
fn criterion_4_scaler_reciprocity() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = tmp.path().join("raw.jsonl");
    write_jsonl(&raw, &generate_zinc_like(200, 4)).map_err(|e| e.to_string())?;
    let sidecar = prepare_dataset(&raw, &tmp.path().join("data"), &PrepOptions::default())
        .map_err(|e| e.to_string())?;
    let delta = sidecar.delta;
    ensure(delta > 0.0, "prepared delta must be positive")?;

    let mut worst = 0.0f64;
    for d in 1..=64usize {
        let up = degree_scaler(d, ScalerKind::Amplify, delta).map_err(|e| e.to_string())?;
        let down = degree_scaler(d, ScalerKind::Attenuate, delta).map_err(|e| e.to_string())?;
        let diff = (up * down - 1.0).abs();
        ensure(
            diff < 1e-12,
            format!("d = {d}: |S+ * S-  - 1| = {diff:.3e}"),
        )?;
        worst = worst.max(diff);
        let identity = degree_scaler(d, ScalerKind::Identity, delta).map_err(|e| e.to_string())?;
        ensure(identity == 1.0, format!("identity scaler not exactly 1 at d = {d}"))?;
    }
    Ok(format!(
        "S+.S- = 1 within {worst:.1e} for d in [1,64] at dataset delta {delta:.4}"
    ))
}

// ---------------------------------------------------------------------------
// criterion 5: overfit capacity on a 128-molecule subset
// ---------------------------------------------------------------------------
fn criterion_5_overfit_capacity() -> Check {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = tmp.path().join("raw.jsonl");
    write_jsonl(&raw, &generate_zinc_like(160, 42)).map_err(|e| e.to_string())?;
    let data_dir = tmp.path().join("data");
    prepare_dataset(&raw, &data_dir, &PrepOptions::default()).map_err(|e| e.to_string())?;
    let (split, sidecar) =
        gmixer_core::data::load_prepared_dir(&data_dir).map_err(|e| e.to_string())?;
    ensure(
        split.train.len() == 128,
        format!("expected a 128-molecule training subset, got {}", split.train.len()),
    )?;

    // defaults (K=4, d=64, lr 1e-3, batch 32); 60 epochs is well inside the
    // 500-epoch allowance
    let cfg = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };
    let outcome = train::<f64>(&cfg, &split, sidecar.delta, Some(&tmp.path().join("run")))
        .map_err(|e| e.to_string())?;
    let train_mae = evaluate(&outcome.model, &split.train).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();
    ensure(
        train_mae < 0.15,
        format!("train MAE {train_mae:.4} >= 0.15 after {} epochs", outcome.history.len()),
    )?;
    ensure(elapsed < 600.0, format!("took {elapsed:.0}s, budget 600s"))?;
    Ok(format!(
        "train MAE {train_mae:.4} after {} epochs in {elapsed:.0}s (budget: <0.15, 600s)",
        outcome.history.len()
    ))
}

// ---------------------------------------------------------------------------
// criterion 6: full-benchmark fidelity is explicitly out of reach at desk
// scale; informational only
// ---------------------------------------------------------------------------
fn criterion_6_desk_scale_note() -> Check {
    Ok(
        "not gated: published-scale MAE depends on unstated hyperparameters and full-budget \
         training; desk-scale runs are validated by criteria 5 and 8 instead"
            .to_string(),
    )
}

// ---------------------------------------------------------------------------
// criterion 7: token mixing scales linearly, attention quadratically
// ---------------------------------------------------------------------------
fn criterion_7_complexity_claim() -> Check {
    let started = Instant::now();
    let report = run_bench(&BenchConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();
    ensure(
        report.mixer_exponent <= 1.3,
        format!("mixer exponent {:.3} > 1.3", report.mixer_exponent),
    )?;
    ensure(
        report.attention_exponent >= 1.7,
        format!("attention exponent {:.3} < 1.7", report.attention_exponent),
    )?;
    ensure(
        report.mixer_r_squared >= 0.98,
        format!("mixer fit r^2 {:.4} < 0.98", report.mixer_r_squared),
    )?;
    ensure(
        report.attention_r_squared >= 0.98,
        format!("attention fit r^2 {:.4} < 0.98", report.attention_r_squared),
    )?;
    ensure(elapsed < 300.0, format!("took {elapsed:.0}s, budget 300s"))?;
    Ok(format!(
        "n in {{64..2048}}, d=64: mixer {:.2} (r^2 {:.3}), attention {:.2} (r^2 {:.3}) in {elapsed:.0}s",
        report.mixer_exponent,
        report.mixer_r_squared,
        report.attention_exponent,
        report.attention_r_squared
    ))
}

// ---------------------------------------------------------------------------
// criterion 8: end-to-end determinism of prep + train
// ---------------------------------------------------------------------------
fn criterion_8_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = tmp.path().join("raw.jsonl");
    write_jsonl(&raw, &generate_zinc_like(48, 77)).map_err(|e| e.to_string())?;

    let cfg = TrainConfig {
        k_layers: 2,
        d: 16,
        d_e: 8,
        token_hidden: 8,
        channel_hidden: 16,
        readout_hidden: 16,
        batch_size: 16,
        max_epochs: 3,
        ..TrainConfig::default()
    };

    let run_once = |tag: &str| -> Result<(Vec<String>, Vec<u8>), String> {
        let data_dir = tmp.path().join(format!("data_{tag}"));
        prepare_dataset(&raw, &data_dir, &PrepOptions::default()).map_err(|e| e.to_string())?;
        let (split, sidecar) =
            gmixer_core::data::load_prepared_dir(&data_dir).map_err(|e| e.to_string())?;
        let run_dir = tmp.path().join(format!("run_{tag}"));
        train::<f64>(&cfg, &split, sidecar.delta, Some(&run_dir)).map_err(|e| e.to_string())?;
        let metrics = std::fs::read_to_string(run_dir.join("metrics.csv"))
            .map_err(|e| e.to_string())?
            .lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect();
        let ckpt = std::fs::read(run_dir.join("best.ckpt")).map_err(|e| e.to_string())?;
        Ok((metrics, ckpt))
    };

    let (metrics_a, ckpt_a) = run_once("a")?;
    let (metrics_b, ckpt_b) = run_once("b")?;
    ensure(
        metrics_a == metrics_b,
        "metric histories differ between identical seeded runs",
    )?;
    ensure(ckpt_a == ckpt_b, "best checkpoints are not bit-identical")?;
    Ok(format!(
        "two prep+train runs: {} metric rows identical (wall clock excluded), {}-byte checkpoints bit-equal",
        metrics_a.len().saturating_sub(1),
        ckpt_a.len()
    ))
}

// ---------------------------------------------------------------------------
// criterion 9: the prepared 12k subset honors the dataset protocol
// ---------------------------------------------------------------------------
fn criterion_9_data_protocol() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = tmp.path().join("zinc12k.jsonl");
    let graphs = generate_zinc_like(12_000, 7);
    for g in &graphs {
        ensure(
            (9..=37).contains(&g.node_count()),
            format!("generated molecule with {} nodes", g.node_count()),
        )?;
    }
    write_jsonl(&raw, &graphs).map_err(|e| e.to_string())?;

    let opts = PrepOptions {
        fractions: [10.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0],
        ..PrepOptions::default()
    };
    let data_dir = tmp.path().join("data");
    let sidecar = prepare_dataset(&raw, &data_dir, &opts).map_err(|e| e.to_string())?;
    ensure(
        sidecar.counts.iter().sum::<usize>() == 12_000,
        format!("prepared {} molecules, expected 12000", sidecar.counts.iter().sum::<usize>()),
    )?;
    ensure(
        sidecar.counts == [10_000, 1_000, 1_000],
        format!("split sizes {:?}", sidecar.counts),
    )?;
    ensure(
        sidecar.n_max_observed <= 37,
        format!("observed n_max {}", sidecar.n_max_observed),
    )?;
    for name in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        let split = load_jsonl(&data_dir.join(name)).map_err(|e| e.to_string())?;
        for g in &split {
            ensure(
                (9..=37).contains(&g.node_count()),
                format!("{name}: molecule with {} nodes escaped", g.node_count()),
            )?;
        }
    }

    // violations must be rejected outright
    let mut poisoned = generate_zinc_like(10, 8);
    poisoned.push(MolecularGraph {
        atom_types: vec![0; 38],
        bonds: vec![],
        target: 0.0,
    });
    let bad = tmp.path().join("bad.jsonl");
    write_jsonl(&bad, &poisoned).map_err(|e| e.to_string())?;
    let rejected = prepare_dataset(&bad, &tmp.path().join("bad_out"), &opts);
    ensure(
        rejected.is_err(),
        "prep accepted a 38-node molecule at n_max 37",
    )?;
    Ok("12000 molecules, node counts within [9,37], split 10000/1000/1000; oversize rejected".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<Criterion> = vec![
        ("1 gradient fidelity", Box::new(criterion_1_gradient_fidelity)),
        ("2 zero-weight mixer identity", Box::new(criterion_2_mixer_identity)),
        ("3 aggregation oracle equivalence", Box::new(criterion_3_aggregation_oracle)),
        ("4 scaler reciprocity", Box::new(criterion_4_scaler_reciprocity)),
        ("5 overfit capacity", Box::new(criterion_5_overfit_capacity)),
        ("6 desk-scale fidelity note", Box::new(criterion_6_desk_scale_note)),
        ("7 complexity claim", Box::new(criterion_7_complexity_claim)),
        ("8 determinism", Box::new(criterion_8_determinism)),
        ("9 data protocol", Box::new(criterion_9_data_protocol)),
    ];

    let mut failures = Vec::new();
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| fail(panic_message(&p)));
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS - {detail}"),
            Err(reason) => {
                println!("criterion {name}: FAIL - {reason}");
                failures.push(format!("{name}: {reason}"));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

fn panic_message(payload: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".to_string()
    }
}
