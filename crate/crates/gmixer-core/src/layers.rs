//! The model's building blocks: degree scalers, the 3x3 scaler/aggregator
//! combination, the mixer block, the full layer update, and readout.
//!
//! Every function here records onto a caller-owned [`Tape`] and takes its
//! weights as tape variables, so each block can be exercised and
//! gradient-checked in isolation with arbitrary parameters.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Activation, Tape, VarId};
use crate::tensor::ReduceKind;

/// Degree-scaler exponent: attenuate (-1), leave unchanged (0), amplify (+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerKind {
    Identity,
    Amplify,
    Attenuate,
}

impl ScalerKind {
    /// Channel order of the combined aggregation: identity first, then
    /// amplification, then attenuation. Fixed so checkpoints stay portable.
    pub const ALL: [ScalerKind; 3] = [ScalerKind::Identity, ScalerKind::Amplify, ScalerKind::Attenuate];

    pub fn alpha(self) -> i8 {
        match self {
            ScalerKind::Identity => 0,
            ScalerKind::Amplify => 1,
            ScalerKind::Attenuate => -1,
        }
    }
}

/// Permutation-invariant reduction over a node's incoming messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregatorKind {
    Max,
    Min,
    Mean,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 3] = [AggregatorKind::Max, AggregatorKind::Min, AggregatorKind::Mean];

    pub fn reduce_kind(self) -> ReduceKind {
        match self {
            AggregatorKind::Max => ReduceKind::Max,
            AggregatorKind::Min => ReduceKind::Min,
            AggregatorKind::Mean => ReduceKind::Mean,
        }
    }
}

/// Multiplicative factor `(log(d+1)/delta)^alpha` modulating aggregated
/// signals by node degree. The identity scaler is exactly 1; isolated nodes
/// (`d = 0`) scale to 0 so the attenuating exponent never divides by
/// `log(1) = 0`; their whole aggregation output is zero by definition.
pub fn degree_scaler(d: usize, kind: ScalerKind, delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::contract(format!(
            "degree_scaler: delta must be positive, got {delta}"
        )));
    }
    Ok(match kind {
        ScalerKind::Identity => 1.0,
        ScalerKind::Amplify => {
            if d == 0 {
                0.0
            } else {
                ((d + 1) as f64).ln() / delta
            }
        }
        ScalerKind::Attenuate => {
            if d == 0 {
                0.0
            } else {
                delta / ((d + 1) as f64).ln()
            }
        }
    })
}

/// Per-row scaler factors for a batch of node degrees.
pub fn scaler_factors<F: Scalar>(degrees: &[usize], kind: ScalerKind, delta: f64) -> Result<Vec<F>> {
    degrees
        .iter()
        .map(|&d| degree_scaler(d, kind, delta).map(F::from_f64))
        .collect()
}

/// Tape variables for one mixer block.
#[derive(Debug, Clone, Copy)]
pub struct MixerVars {
    pub ln1_gamma: VarId,
    pub ln1_beta: VarId,
    pub tok_w1: VarId,
    pub tok_b1: VarId,
    pub tok_w2: VarId,
    pub tok_b2: VarId,
    pub ln2_gamma: VarId,
    pub ln2_beta: VarId,
    pub ch_w1: VarId,
    pub ch_b1: VarId,
    pub ch_w2: VarId,
    pub ch_b2: VarId,
}

/// Tape variables for one full layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub pre_w: VarId,
    pub pre_b: VarId,
    pub post_w: VarId,
    pub post_b: VarId,
    pub mixer: MixerVars,
}

/// Build one message per directed edge: `concat(h_receiver, h_sender,
/// bond_embedding) . W + b`.
#[allow(clippy::too_many_arguments)]
pub fn pretransform_messages<F: Scalar>(
    tape: &mut Tape<F>,
    h: VarId,
    dst_rows: &[usize],
    src_rows: &[usize],
    bond_ids: &[usize],
    bond_table: VarId,
    pre_w: VarId,
    pre_b: VarId,
) -> Result<VarId> {
    let h_recv = tape.gather_rows(h, dst_rows.to_vec())?;
    let h_send = tape.gather_rows(h, src_rows.to_vec())?;
    let bond = tape.gather_rows(bond_table, bond_ids.to_vec())?;
    let cat = tape.concat_cols(vec![h_recv, h_send, bond])?;
    let lin = tape.matmul(cat, pre_w)?;
    tape.add_bias(lin, pre_b)
}

/// Combine three aggregators under three degree scalers into one
/// `[rows, 9*d]` tensor, scaler-major / aggregator-minor:
/// `[I.max, I.min, I.mean, S+.max, S+.min, S+.mean, S-.max, S-.min, S-.mean]`.
/// Nodes with no incoming messages (and padded slots) come out all-zero.
pub fn aggregate_multi<F: Scalar>(
    tape: &mut Tape<F>,
    messages: VarId,
    dst_rows: &[usize],
    degrees: &[usize],
    delta: f64,
    rows: usize,
) -> Result<VarId> {
    let mut reduced = Vec::with_capacity(3);
    for agg in AggregatorKind::ALL {
        reduced.push(tape.segment_reduce(
            messages,
            dst_rows.to_vec(),
            rows,
            agg.reduce_kind(),
        )?);
    }
    let mut parts = Vec::with_capacity(9);
    for scaler in ScalerKind::ALL {
        match scaler {
            ScalerKind::Identity => parts.extend_from_slice(&reduced),
            _ => {
                let factors: Vec<F> = scaler_factors(degrees, scaler, delta)?;
                for &seg in &reduced {
                    parts.push(tape.scale_rows(seg, factors.clone())?);
                }
            }
        }
    }
    tape.concat_cols(parts)
}

/// The mixer update. Row layout is `[B * n_max, d]`; `mask` marks real node
/// slots. Masked rows are zeroed before token mixing (so padding contributes
/// exactly nothing), re-zeroed after, and zeroed on the final output.
pub fn mixer_block<F: Scalar>(
    tape: &mut Tape<F>,
    x: VarId,
    mask: &[bool],
    n_max: usize,
    vars: &MixerVars,
    eps: f64,
    act: Activation,
) -> Result<VarId> {
    let d = tape.value(x).shape()[1];
    let eps = F::from_f64(eps);

    // token half: normalize, flip slots into columns, mix, flip back
    let u = tape.layer_norm(x, vars.ln1_gamma, vars.ln1_beta, eps)?;
    let u = tape.mask_rows(u, mask.to_vec())?;
    let t = tape.batch_transpose(u, n_max)?;
    let t = tape.mlp2(t, vars.tok_w1, vars.tok_b1, vars.tok_w2, vars.tok_b2, act)?;
    let t = tape.batch_transpose(t, d)?;
    let t = tape.mask_rows(t, mask.to_vec())?;
    let y = tape.add(t, x)?;

    // channel half: per-node feature mixing
    let v = tape.layer_norm(y, vars.ln2_gamma, vars.ln2_beta, eps)?;
    let c = tape.mlp2(v, vars.ch_w1, vars.ch_b1, vars.ch_w2, vars.ch_b2, act)?;
    let z = tape.add(c, y)?;
    tape.mask_rows(z, mask.to_vec())
}

/// One full layer: messages, combined aggregation, the 9d -> d merge, then
/// the mixer. The previous node state enters through the message concat.
#[allow(clippy::too_many_arguments)]
pub fn gmn_layer<F: Scalar>(
    tape: &mut Tape<F>,
    h: VarId,
    dst_rows: &[usize],
    src_rows: &[usize],
    bond_ids: &[usize],
    degrees: &[usize],
    mask: &[bool],
    n_max: usize,
    delta: f64,
    bond_table: VarId,
    vars: &LayerVars,
    eps: f64,
    act: Activation,
) -> Result<VarId> {
    let rows = tape.value(h).shape()[0];
    let messages = pretransform_messages(
        tape, h, dst_rows, src_rows, bond_ids, bond_table, vars.pre_w, vars.pre_b,
    )?;
    let agg = aggregate_multi(tape, messages, dst_rows, degrees, delta, rows)?;
    let merged = tape.matmul(agg, vars.post_w)?;
    let x = tape.add_bias(merged, vars.post_b)?;
    mixer_block(tape, x, mask, n_max, &vars.mixer, eps, act)
}

/// Masked mean-pool over real node slots, then a two-layer head down to one
/// scalar per graph.
#[allow(clippy::too_many_arguments)]
pub fn readout<F: Scalar>(
    tape: &mut Tape<F>,
    h: VarId,
    mask: &[bool],
    n_max: usize,
    w1: VarId,
    b1: VarId,
    w2: VarId,
    b2: VarId,
    act: Activation,
) -> Result<VarId> {
    let pooled = tape.mean_rows_per_block(h, mask.to_vec(), n_max)?;
    tape.mlp2(pooled, w1, b1, w2, b2, act)
}
