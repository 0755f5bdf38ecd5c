//! Full model: embeddings, stacked layers, readout, checkpointing.

use std::path::Path;

use crate::checkpoint;
use crate::data::{DeltaMode, PaddedBatch};
use crate::error::{Error, Result};
use crate::layers::{gmn_layer, readout, LayerVars, MixerVars};
use crate::params::{glorot_uniform, ParamId, ParamRegistry};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tape::{Activation, Tape, VarId};
use crate::tensor::Tensor;

/// Architecture hyperparameters. These travel inside the checkpoint header
/// so evaluation never needs the original config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHyper {
    pub k_layers: usize,
    pub d: usize,
    pub d_e: usize,
    pub n_max: usize,
    pub vocab_atoms: usize,
    pub vocab_bonds: usize,
    pub token_hidden: usize,
    pub channel_hidden: usize,
    pub readout_hidden: usize,
    pub delta: f64,
    pub delta_mode: DeltaMode,
    pub activation: Activation,
    pub layer_norm_eps: f64,
}

const META_TAG: &[u8; 4] = b"GMNH";

impl ModelHyper {
    pub fn encode_meta(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(META_TAG);
        for v in [
            self.k_layers,
            self.d,
            self.d_e,
            self.n_max,
            self.vocab_atoms,
            self.vocab_bonds,
            self.token_hidden,
            self.channel_hidden,
            self.readout_hidden,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.delta.to_le_bytes());
        out.push(match self.delta_mode {
            DeltaMode::LogMean => 0,
            DeltaMode::RawMeanDegree => 1,
        });
        out.push(match self.activation {
            Activation::Gelu => 0,
            Activation::Relu => 1,
        });
        out.extend_from_slice(&self.layer_norm_eps.to_le_bytes());
        out
    }

    pub fn decode_meta(meta: &[u8]) -> Result<Self> {
        let expect = 4 + 9 * 4 + 8 + 2 + 8;
        if meta.len() != expect || &meta[..4] != META_TAG {
            return Err(Error::Checkpoint("bad checkpoint header".into()));
        }
        let mut ints = [0usize; 9];
        for (i, slot) in ints.iter_mut().enumerate() {
            let at = 4 + i * 4;
            *slot = u32::from_le_bytes(meta[at..at + 4].try_into().expect("sized")) as usize;
        }
        let delta = f64::from_le_bytes(meta[40..48].try_into().expect("sized"));
        let delta_mode = match meta[48] {
            0 => DeltaMode::LogMean,
            1 => DeltaMode::RawMeanDegree,
            other => {
                return Err(Error::Checkpoint(format!("unknown delta_mode tag {other}")));
            }
        };
        let activation = match meta[49] {
            0 => Activation::Gelu,
            1 => Activation::Relu,
            other => {
                return Err(Error::Checkpoint(format!("unknown activation tag {other}")));
            }
        };
        let layer_norm_eps = f64::from_le_bytes(meta[50..58].try_into().expect("sized"));
        Ok(ModelHyper {
            k_layers: ints[0],
            d: ints[1],
            d_e: ints[2],
            n_max: ints[3],
            vocab_atoms: ints[4],
            vocab_bonds: ints[5],
            token_hidden: ints[6],
            channel_hidden: ints[7],
            readout_hidden: ints[8],
            delta,
            delta_mode,
            activation,
            layer_norm_eps,
        })
    }
}

#[derive(Debug, Clone)]
struct LayerParamIds {
    pre_w: ParamId,
    pre_b: ParamId,
    post_w: ParamId,
    post_b: ParamId,
    ln1_gamma: ParamId,
    ln1_beta: ParamId,
    tok_w1: ParamId,
    tok_b1: ParamId,
    tok_w2: ParamId,
    tok_b2: ParamId,
    ln2_gamma: ParamId,
    ln2_beta: ParamId,
    ch_w1: ParamId,
    ch_b1: ParamId,
    ch_w2: ParamId,
    ch_b2: ParamId,
}

#[derive(Debug, Clone)]
struct ParamIdBundle {
    atom_emb: ParamId,
    bond_emb: ParamId,
    layers: Vec<LayerParamIds>,
    head_w1: ParamId,
    head_b1: ParamId,
    head_w2: ParamId,
    head_b2: ParamId,
}

#[derive(Debug, Clone)]
pub struct GmnModel<F> {
    pub hyper: ModelHyper,
    pub registry: ParamRegistry<F>,
    ids: ParamIdBundle,
}

impl<F: Scalar> GmnModel<F> {
    /// Fresh model with Glorot-uniform weights, zero biases, and unit/zero
    /// layer-norm affine terms, all drawn from `seed`.
    pub fn new(hyper: ModelHyper, seed: u64) -> Result<Self> {
        if hyper.delta <= 0.0 {
            return Err(Error::contract("model: delta must be positive"));
        }
        if hyper.vocab_atoms == 0 {
            return Err(Error::contract("model: empty atom vocabulary"));
        }
        let mut registry = ParamRegistry::new(seed);
        let root = SplitMix64::new(seed);
        let mut stream = 0u64;
        let mut next = move || {
            stream += 1;
            root.fork(stream)
        };

        let h = &hyper;
        let atom_emb = registry.add(
            "atom_embedding",
            glorot_uniform(&mut next(), h.vocab_atoms, h.d),
        )?;
        let bond_emb = registry.add(
            "bond_embedding",
            glorot_uniform(&mut next(), h.vocab_bonds.max(1), h.d_e),
        )?;

        let mut layers = Vec::with_capacity(h.k_layers);
        for k in 0..h.k_layers {
            let p = |suffix: &str| format!("layers.{k}.{suffix}");
            let ids = LayerParamIds {
                pre_w: registry.add(
                    p("pretransform.weight"),
                    glorot_uniform(&mut next(), 2 * h.d + h.d_e, h.d),
                )?,
                pre_b: registry.add(p("pretransform.bias"), Tensor::zeros(&[h.d]))?,
                post_w: registry.add(
                    p("posttransform.weight"),
                    glorot_uniform(&mut next(), 9 * h.d, h.d),
                )?,
                post_b: registry.add(p("posttransform.bias"), Tensor::zeros(&[h.d]))?,
                ln1_gamma: registry.add(p("mixer.ln1.gamma"), Tensor::filled(&[h.d], F::ONE))?,
                ln1_beta: registry.add(p("mixer.ln1.beta"), Tensor::zeros(&[h.d]))?,
                tok_w1: registry.add(
                    p("mixer.token.w1"),
                    glorot_uniform(&mut next(), h.n_max, h.token_hidden),
                )?,
                tok_b1: registry.add(p("mixer.token.b1"), Tensor::zeros(&[h.token_hidden]))?,
                tok_w2: registry.add(
                    p("mixer.token.w2"),
                    glorot_uniform(&mut next(), h.token_hidden, h.n_max),
                )?,
                tok_b2: registry.add(p("mixer.token.b2"), Tensor::zeros(&[h.n_max]))?,
                ln2_gamma: registry.add(p("mixer.ln2.gamma"), Tensor::filled(&[h.d], F::ONE))?,
                ln2_beta: registry.add(p("mixer.ln2.beta"), Tensor::zeros(&[h.d]))?,
                ch_w1: registry.add(
                    p("mixer.channel.w1"),
                    glorot_uniform(&mut next(), h.d, h.channel_hidden),
                )?,
                ch_b1: registry.add(p("mixer.channel.b1"), Tensor::zeros(&[h.channel_hidden]))?,
                ch_w2: registry.add(
                    p("mixer.channel.w2"),
                    glorot_uniform(&mut next(), h.channel_hidden, h.d),
                )?,
                ch_b2: registry.add(p("mixer.channel.b2"), Tensor::zeros(&[h.d]))?,
            };
            layers.push(ids);
        }

        let head_w1 = registry.add(
            "readout.w1",
            glorot_uniform(&mut next(), h.d, h.readout_hidden),
        )?;
        let head_b1 = registry.add("readout.b1", Tensor::zeros(&[h.readout_hidden]))?;
        let head_w2 = registry.add(
            "readout.w2",
            glorot_uniform(&mut next(), h.readout_hidden, 1),
        )?;
        let head_b2 = registry.add("readout.b2", Tensor::zeros(&[1]))?;

        Ok(GmnModel {
            hyper,
            registry,
            ids: ParamIdBundle {
                atom_emb,
                bond_emb,
                layers,
                head_w1,
                head_b1,
                head_w2,
                head_b2,
            },
        })
    }

    /// Record the full forward pass for a batch; returns the `[B, 1]`
    /// predictions variable.
    pub fn forward(&self, tape: &mut Tape<F>, batch: &PaddedBatch) -> Result<VarId> {
        self.forward_on(&self.registry, tape, batch)
    }

    /// Forward against an external registry holding the same parameter set
    /// (a perturbed clone, during gradient checking).
    pub fn forward_on(
        &self,
        registry: &ParamRegistry<F>,
        tape: &mut Tape<F>,
        batch: &PaddedBatch,
    ) -> Result<VarId> {
        if batch.n_max != self.hyper.n_max {
            return Err(Error::contract(format!(
                "batch n_max {} does not match model n_max {}",
                batch.n_max, self.hyper.n_max
            )));
        }
        let wiring = batch.edges();
        let atom_table = tape.param(registry, self.ids.atom_emb);
        let bond_table = tape.param(registry, self.ids.bond_emb);

        let mut h = tape.gather_rows(atom_table, batch.atom_ids.clone())?;
        for layer_ids in &self.ids.layers {
            let vars = LayerVars {
                pre_w: tape.param(registry, layer_ids.pre_w),
                pre_b: tape.param(registry, layer_ids.pre_b),
                post_w: tape.param(registry, layer_ids.post_w),
                post_b: tape.param(registry, layer_ids.post_b),
                mixer: MixerVars {
                    ln1_gamma: tape.param(registry, layer_ids.ln1_gamma),
                    ln1_beta: tape.param(registry, layer_ids.ln1_beta),
                    tok_w1: tape.param(registry, layer_ids.tok_w1),
                    tok_b1: tape.param(registry, layer_ids.tok_b1),
                    tok_w2: tape.param(registry, layer_ids.tok_w2),
                    tok_b2: tape.param(registry, layer_ids.tok_b2),
                    ln2_gamma: tape.param(registry, layer_ids.ln2_gamma),
                    ln2_beta: tape.param(registry, layer_ids.ln2_beta),
                    ch_w1: tape.param(registry, layer_ids.ch_w1),
                    ch_b1: tape.param(registry, layer_ids.ch_b1),
                    ch_w2: tape.param(registry, layer_ids.ch_w2),
                    ch_b2: tape.param(registry, layer_ids.ch_b2),
                },
            };
            h = gmn_layer(
                tape,
                h,
                &wiring.dst_rows,
                &wiring.src_rows,
                &wiring.bond_ids,
                &batch.degrees,
                &batch.node_mask,
                self.hyper.n_max,
                self.hyper.delta,
                bond_table,
                &vars,
                self.hyper.layer_norm_eps,
                self.hyper.activation,
            )?;
        }
        let w1 = tape.param(registry, self.ids.head_w1);
        let b1 = tape.param(registry, self.ids.head_b1);
        let w2 = tape.param(registry, self.ids.head_w2);
        let b2 = tape.param(registry, self.ids.head_b2);
        readout(
            tape,
            h,
            &batch.node_mask,
            self.hyper.n_max,
            w1,
            b1,
            w2,
            b2,
            self.hyper.activation,
        )
    }

    /// Forward plus L1 loss against the batch targets.
    pub fn forward_with_loss(&self, tape: &mut Tape<F>, batch: &PaddedBatch) -> Result<(VarId, VarId)> {
        self.forward_with_loss_on(&self.registry, tape, batch)
    }

    pub fn forward_with_loss_on(
        &self,
        registry: &ParamRegistry<F>,
        tape: &mut Tape<F>,
        batch: &PaddedBatch,
    ) -> Result<(VarId, VarId)> {
        let preds = self.forward_on(registry, tape, batch)?;
        let targets: Vec<F> = batch.targets.iter().map(|&t| F::from_f64(t)).collect();
        let loss = tape.l1_loss(preds, targets)?;
        Ok((preds, loss))
    }

    /// Forward-only prediction; the tape is discarded.
    pub fn predict(&self, batch: &PaddedBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let preds = self.forward(&mut tape, batch)?;
        Ok(tape.value(preds).data().iter().map(|v| v.to_f64()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.hyper.encode_meta(), &self.registry)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let loaded = checkpoint::load::<F>(path)?;
        let hyper = ModelHyper::decode_meta(&loaded.meta)?;
        let mut model = GmnModel::new(hyper, 0)?;
        checkpoint::restore_into(&loaded, &mut model.registry)?;
        Ok(model)
    }
}
