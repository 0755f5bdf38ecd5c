//! Mini-batch training and evaluation for graph regression.
//!
//! L1 loss matches the MAE evaluation metric. Everything is seeded: the same
//! config and data produce bit-identical parameter trajectories, metric
//! histories, and checkpoints.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::data::{pad_batch, DatasetSplit, DeltaMode, MolecularGraph};
use crate::error::{Error, Result};
use crate::model::{GmnModel, ModelHyper};
use crate::optim::{adam_step, clip_global_norm, AdamConfig};
use crate::rng::SplitMix64;
use crate::runtime;
use crate::scalar::Scalar;
use crate::tape::{Activation, Tape};

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// 32 or 64; training at 32 bits trades precision for throughput.
    pub precision: u32,
    pub delta_mode: DeltaMode,
    pub k_layers: usize,
    pub d: usize,
    pub d_e: usize,
    pub n_max: usize,
    pub token_hidden: usize,
    pub channel_hidden: usize,
    pub readout_hidden: usize,
    pub activation: Activation,
    /// Global gradient-norm cap; 0 disables. Min/max aggregators route whole
    /// gradients through single edges, so clipping is on by default.
    pub grad_clip: f64,
    /// Step-decay interval in epochs; 0 keeps the learning rate flat.
    pub lr_step_every: usize,
    pub lr_step_gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            max_epochs: 500,
            patience: 50,
            seed: 1,
            precision: 64,
            delta_mode: DeltaMode::LogMean,
            k_layers: 4,
            d: 64,
            d_e: 16,
            n_max: 37,
            token_hidden: 64,
            channel_hidden: 128,
            readout_hidden: 64,
            activation: Activation::Gelu,
            grad_clip: 5.0,
            lr_step_every: 0,
            lr_step_gamma: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.lr <= 0.0 || self.lr.is_nan() {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.precision != 32 && self.precision != 64 {
            return Err(Error::Config(format!(
                "precision must be 32 or 64, got {}",
                self.precision
            )));
        }
        for (name, v) in [
            ("d", self.d),
            ("d_e", self.d_e),
            ("n_max", self.n_max),
            ("token_hidden", self.token_hidden),
            ("channel_hidden", self.channel_hidden),
            ("readout_hidden", self.readout_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn hyper(&self, vocab_atoms: usize, vocab_bonds: usize, delta: f64) -> ModelHyper {
        ModelHyper {
            k_layers: self.k_layers,
            d: self.d,
            d_e: self.d_e,
            n_max: self.n_max,
            vocab_atoms,
            vocab_bonds,
            token_hidden: self.token_hidden,
            channel_hidden: self.channel_hidden,
            readout_hidden: self.readout_hidden,
            delta,
            delta_mode: self.delta_mode,
            activation: self.activation,
            layer_norm_eps: 1e-5,
        }
    }

    fn adam(&self, epoch: usize) -> AdamConfig {
        let lr = match self.lr_step_every {
            0 => self.lr,
            every => self.lr * self.lr_step_gamma.powi((epoch / every) as i32),
        };
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: Option<f64>,
    /// Evaluated only at epochs that improved the best validation MAE.
    pub test_mae: Option<f64>,
    pub wall_seconds: f64,
}

impl EpochMetrics {
    pub fn csv_header() -> &'static str {
        "epoch,train_loss,val_mae,test_mae,wall_seconds"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            opt(self.val_mae),
            opt(self.test_mae),
            self.wall_seconds
        )
    }
}

#[derive(Debug)]
pub struct TrainOutcome<F> {
    /// Model carrying the best-validation parameters (last-epoch parameters
    /// when there is no validation split).
    pub model: GmnModel<F>,
    pub best_epoch: Option<usize>,
    pub best_val_mae: Option<f64>,
    pub best_test_mae: Option<f64>,
    pub history: Vec<EpochMetrics>,
}

/// Forward-only MAE over a split, sharded across worker threads. Per-graph
/// errors are collected in input order and reduced sequentially, so the
/// result is identical at any thread count.
pub fn evaluate<F: Scalar>(model: &GmnModel<F>, graphs: &[MolecularGraph]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::contract("evaluate: empty split"));
    }
    const EVAL_BATCH: usize = 64;
    let batches: Vec<&[MolecularGraph]> = graphs.chunks(EVAL_BATCH).collect();

    let mut errors = vec![0.0f64; graphs.len()];
    let mut slices: Vec<&mut [f64]> = Vec::with_capacity(batches.len());
    let mut rest = errors.as_mut_slice();
    for b in &batches {
        let (head, tail) = rest.split_at_mut(b.len());
        slices.push(head);
        rest = tail;
    }
    let work: Vec<(&[MolecularGraph], &mut [f64])> =
        batches.into_iter().zip(slices).collect();

    let threads = runtime::thread_cap().min(work.len()).max(1);
    let eval_one = |batch: &[MolecularGraph], out: &mut [f64]| -> Result<()> {
        let padded = pad_batch(batch, model.hyper.n_max)?;
        let preds = model.predict(&padded)?;
        for (o, (p, g)) in out.iter_mut().zip(preds.iter().zip(batch.iter())) {
            *o = (p - g.target).abs();
        }
        Ok(())
    };

    if threads <= 1 {
        for (batch, out) in work {
            eval_one(batch, out)?;
        }
    } else {
        let per_thread = work.len().div_ceil(threads);
        let mut chunks: Vec<Vec<(&[MolecularGraph], &mut [f64])>> = Vec::new();
        let mut iter = work.into_iter();
        loop {
            let chunk: Vec<_> = iter.by_ref().take(per_thread).collect();
            if chunk.is_empty() {
                break;
            }
            chunks.push(chunk);
        }
        std::thread::scope(|scope| -> Result<()> {
            let mut handles = Vec::new();
            for chunk in chunks {
                handles.push(scope.spawn(move || -> Result<()> {
                    for (batch, out) in chunk {
                        eval_one(batch, out)?;
                    }
                    Ok(())
                }));
            }
            for h in handles {
                h.join().expect("evaluation worker panicked")?;
            }
            Ok(())
        })?;
    }
    Ok(errors.iter().sum::<f64>() / graphs.len() as f64)
}

/// Run the training loop. When `run_dir` is given, `metrics.csv`,
/// `best.ckpt`, and `last.ckpt` are written as the run progresses.
pub fn train<F: Scalar>(
    config: &TrainConfig,
    split: &DatasetSplit,
    delta: f64,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::contract("train: empty training split"));
    }
    let widest = split.max_nodes();
    if widest > config.n_max {
        return Err(Error::contract(format!(
            "train: dataset contains a {widest}-node graph but n_max is {}",
            config.n_max
        )));
    }

    let hyper = config.hyper(split.vocab_atoms, split.vocab_bonds.max(1), delta);
    let mut model = GmnModel::<F>::new(hyper, config.seed)?;

    let mut csv = match run_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
            writeln!(w, "{}", EpochMetrics::csv_header())?;
            Some(w)
        }
        None => None,
    };

    let shuffle_root = SplitMix64::new(config.seed);
    let mut history: Vec<EpochMetrics> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch: Option<usize> = None;
    let mut best_test: Option<f64> = None;
    let mut best_snapshot = model.registry.clone();
    let mut epochs_since_best = 0usize;
    let mut global_batch = 0usize;

    for epoch in 0..config.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..split.train.len()).collect();
        shuffle_root.fork(epoch as u64).shuffle(&mut order);

        let adam = config.adam(epoch);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<MolecularGraph> =
                chunk.iter().map(|&i| split.train[i].clone()).collect();
            let batch = pad_batch(&graphs, config.n_max)?;
            let mut tape = Tape::new();
            let (_, loss) = model.forward_with_loss(&mut tape, &batch)?;
            let loss_val = tape.value(loss).item()?.to_f64();
            if !loss_val.is_finite() {
                return Err(Error::TrainAbort {
                    batch: global_batch,
                    reason: format!(
                        "loss is not finite; parameter norm {:.6e}, gradient norm {:.6e}",
                        model.registry.value_norm(),
                        model.registry.grad_norm()
                    ),
                });
            }
            tape.backward(loss, &mut model.registry)?;
            if !model.registry.all_grads_finite() {
                return Err(Error::TrainAbort {
                    batch: global_batch,
                    reason: format!(
                        "gradients are not finite; parameter norm {:.6e}",
                        model.registry.value_norm()
                    ),
                });
            }
            if config.grad_clip > 0.0 {
                clip_global_norm(&mut model.registry, config.grad_clip);
            }
            adam_step(&mut model.registry, &adam)?;
            loss_sum += loss_val * graphs.len() as f64;
            global_batch += 1;
        }
        let train_loss = loss_sum / split.train.len() as f64;

        let val_mae = if split.validation.is_empty() {
            None
        } else {
            Some(evaluate(&model, &split.validation)?)
        };

        let mut test_mae = None;
        let improved = match val_mae {
            Some(v) => v < best_val,
            None => true, // no validation split: latest parameters are "best"
        };
        if improved {
            if let Some(v) = val_mae {
                best_val = v;
            }
            best_epoch = Some(epoch);
            best_snapshot = model.registry.clone();
            epochs_since_best = 0;
            if !split.test.is_empty() {
                let t = evaluate(&model, &split.test)?;
                test_mae = Some(t);
                best_test = Some(t);
            }
            if let Some(dir) = run_dir {
                model.save(&dir.join("best.ckpt"))?;
            }
        } else {
            epochs_since_best += 1;
        }

        let metrics = EpochMetrics {
            epoch,
            train_loss,
            val_mae,
            test_mae,
            wall_seconds: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
        };
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", metrics.csv_row())?;
            w.flush()?;
        }
        if let Some(dir) = run_dir {
            model.save(&dir.join("last.ckpt"))?;
        }
        history.push(metrics);

        if val_mae.is_some() && epochs_since_best >= config.patience {
            break;
        }
    }

    // hand back the best-validation parameters
    model.registry = best_snapshot;
    if let Some(dir) = run_dir {
        let best_path = dir.join("best.ckpt");
        if !best_path.exists() {
            model.save(&best_path)?;
        }
        if !dir.join("last.ckpt").exists() {
            model.save(&dir.join("last.ckpt"))?;
        }
    }

    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_mae: best_epoch.and(if best_val.is_finite() { Some(best_val) } else { None }),
        best_test_mae: best_test,
        history,
    })
}
