//! Reverse-mode differentiation over a tape of coarse tensor primitives.
//!
//! A [`Tape`] records every primitive executed in a forward pass. Operands
//! always precede their results, so one reverse sweep visits each node once
//! and pushes adjoints toward the leaves. Parameter leaves accumulate their
//! adjoint into the owning [`ParamRegistry`]; everything else is transient.

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamRegistry};
use crate::scalar::Scalar;
use crate::tensor::{gelu_derivative, ReduceKind, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

/// Nonlinearity used inside the two-layer MLPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Relu,
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Gelu => write!(f, "gelu"),
            Activation::Relu => write!(f, "relu"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!(
                "unknown activation {other:?} (expected gelu or relu)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum Op<F> {
    Const,
    Param(ParamId),
    Matmul { a: VarId, b: VarId },
    Transpose { x: VarId },
    BatchTranspose { x: VarId },
    Add { a: VarId, b: VarId },
    AddBias { x: VarId, bias: VarId },
    Gelu { x: VarId },
    Relu { x: VarId },
    LayerNorm { x: VarId, gamma: VarId, beta: VarId, eps: F },
    GatherRows { x: VarId, rows: Vec<usize> },
    ConcatCols { parts: Vec<VarId> },
    SegmentReduce { x: VarId, seg: Vec<usize>, kind: ReduceKind },
    ScaleRows { x: VarId, factors: Vec<F> },
    MaskRows { x: VarId, keep: Vec<bool> },
    MeanRowsPerBlock { x: VarId, keep: Vec<bool>, block_rows: usize },
    L1Loss { pred: VarId, targets: Vec<F> },
    Sum { x: VarId },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Record a non-learnable input.
    pub fn constant(&mut self, value: Tensor<F>) -> VarId {
        self.push(value, Op::Const)
    }

    /// Bind a registry parameter into this tape. Its adjoint will be added
    /// to the registry's stored gradient during [`Tape::backward`].
    pub fn param(&mut self, registry: &ParamRegistry<F>, id: ParamId) -> VarId {
        self.push(registry.get(id).value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::Matmul { a, b }))
    }

    pub fn transpose(&mut self, x: VarId) -> Result<VarId> {
        let value = self.value(x).transpose()?;
        Ok(self.push(value, Op::Transpose { x }))
    }

    pub fn batch_transpose(&mut self, x: VarId, block_rows: usize) -> Result<VarId> {
        let value = self.value(x).batch_transpose(block_rows)?;
        Ok(self.push(value, Op::BatchTranspose { x }))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn add_bias(&mut self, x: VarId, bias: VarId) -> Result<VarId> {
        let value = self.value(x).add_bias(self.value(bias))?;
        Ok(self.push(value, Op::AddBias { x, bias }))
    }

    pub fn activation(&mut self, x: VarId, kind: Activation) -> VarId {
        match kind {
            Activation::Gelu => self.gelu(x),
            Activation::Relu => self.relu(x),
        }
    }

    pub fn gelu(&mut self, x: VarId) -> VarId {
        let value = self.value(x).gelu();
        self.push(value, Op::Gelu { x })
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let value = self.value(x).relu();
        self.push(value, Op::Relu { x })
    }

    pub fn layer_norm(&mut self, x: VarId, gamma: VarId, beta: VarId, eps: F) -> Result<VarId> {
        let value = self
            .value(x)
            .layer_norm_rows(self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta, eps }))
    }

    pub fn gather_rows(&mut self, x: VarId, rows: Vec<usize>) -> Result<VarId> {
        let value = self.value(x).gather_rows(&rows)?;
        Ok(self.push(value, Op::GatherRows { x, rows }))
    }

    pub fn concat_cols(&mut self, parts: Vec<VarId>) -> Result<VarId> {
        let tensors: Vec<&Tensor<F>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_cols(&tensors)?;
        Ok(self.push(value, Op::ConcatCols { parts }))
    }

    pub fn segment_reduce(
        &mut self,
        x: VarId,
        seg: Vec<usize>,
        segments: usize,
        kind: ReduceKind,
    ) -> Result<VarId> {
        let value = self.value(x).segment_reduce(&seg, segments, kind)?;
        Ok(self.push(value, Op::SegmentReduce { x, seg, kind }))
    }

    pub fn scale_rows(&mut self, x: VarId, factors: Vec<F>) -> Result<VarId> {
        let value = self.value(x).scale_rows(&factors)?;
        Ok(self.push(value, Op::ScaleRows { x, factors }))
    }

    pub fn mask_rows(&mut self, x: VarId, keep: Vec<bool>) -> Result<VarId> {
        let value = self.value(x).mask_rows(&keep)?;
        Ok(self.push(value, Op::MaskRows { x, keep }))
    }

    pub fn mean_rows_per_block(
        &mut self,
        x: VarId,
        keep: Vec<bool>,
        block_rows: usize,
    ) -> Result<VarId> {
        let value = self.value(x).mean_rows_per_block(&keep, block_rows)?;
        Ok(self.push(value, Op::MeanRowsPerBlock { x, keep, block_rows }))
    }

    /// Mean absolute error against fixed targets; ties get subgradient 0.
    pub fn l1_loss(&mut self, pred: VarId, targets: Vec<F>) -> Result<VarId> {
        let p = self.value(pred);
        let n = p.len();
        if n == 0 {
            return Err(Error::contract("l1_loss: empty batch"));
        }
        if n != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "l1_loss",
                lhs: p.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let mut acc = F::ZERO;
        for (&pv, &tv) in p.data().iter().zip(targets.iter()) {
            acc += (pv - tv).abs();
        }
        let value = Tensor::scalar(acc / F::from_f64(n as f64));
        Ok(self.push(value, Op::L1Loss { pred, targets }))
    }

    pub fn sum(&mut self, x: VarId) -> VarId {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum { x })
    }

    /// Two-layer MLP: `act(x.W1 + b1).W2 + b2`.
    pub fn mlp2(
        &mut self,
        x: VarId,
        w1: VarId,
        b1: VarId,
        w2: VarId,
        b2: VarId,
        act: Activation,
    ) -> Result<VarId> {
        let h = self.matmul(x, w1)?;
        let h = self.add_bias(h, b1)?;
        let h = self.activation(h, act);
        let out = self.matmul(h, w2)?;
        self.add_bias(out, b2)
    }

    /// Reverse sweep from a scalar loss. Every parameter reachable from the
    /// loss gets `d(loss)/d(param)` added to its stored gradient; parameters
    /// the loss never touched keep their gradient untouched.
    pub fn backward(&self, loss: VarId, registry: &mut ParamRegistry<F>) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<F>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(F::ONE));

        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Const => {}
                Op::Param(pid) => registry.accumulate_grad(*pid, &grad)?,
                Op::Matmul { a, b } => {
                    let da = grad.matmul(&self.value(*b).transpose()?)?;
                    let db = self.value(*a).transpose()?.matmul(&grad)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose { x } => {
                    accumulate(&mut grads, *x, grad.transpose()?);
                }
                Op::BatchTranspose { x } => {
                    let cols = self.value(*x).shape()[1];
                    accumulate(&mut grads, *x, grad.batch_transpose(cols)?);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, grad.clone());
                    accumulate(&mut grads, *b, grad);
                }
                Op::AddBias { x, bias } => {
                    let cols = self.value(*bias).len();
                    let mut db = vec![F::ZERO; cols];
                    for row in grad.data().chunks(cols) {
                        for (d, &g) in db.iter_mut().zip(row.iter()) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads, *bias, Tensor::from_vec(&[cols], db)?);
                    accumulate(&mut grads, *x, grad);
                }
                Op::Gelu { x } => {
                    let xin = self.value(*x);
                    let dx = elementwise(&grad, xin, |g, v| g * gelu_derivative(v));
                    accumulate(&mut grads, *x, dx);
                }
                Op::Relu { x } => {
                    let xin = self.value(*x);
                    let dx = elementwise(&grad, xin, |g, v| if v > F::ZERO { g } else { F::ZERO });
                    accumulate(&mut grads, *x, dx);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let (dx, dgamma, dbeta) =
                        layer_norm_backward(self.value(*x), self.value(*gamma), *eps, &grad)?;
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                }
                Op::GatherRows { x, rows } => {
                    let src = self.value(*x);
                    let cols = src.shape()[1];
                    let mut dx = vec![F::ZERO; src.len()];
                    for (i, &r) in rows.iter().enumerate() {
                        let g = &grad.data()[i * cols..(i + 1) * cols];
                        let dst = &mut dx[r * cols..(r + 1) * cols];
                        for (d, &gv) in dst.iter_mut().zip(g.iter()) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(src.shape(), dx)?);
                }
                Op::ConcatCols { parts } => {
                    let rows = grad.shape()[0];
                    let total = grad.shape()[1];
                    let mut offset = 0;
                    for &part in parts {
                        let w = self.value(part).shape()[1];
                        let mut dp = vec![F::ZERO; rows * w];
                        for r in 0..rows {
                            dp[r * w..(r + 1) * w].copy_from_slice(
                                &grad.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        accumulate(&mut grads, part, Tensor::from_vec(&[rows, w], dp)?);
                        offset += w;
                    }
                }
                Op::SegmentReduce { x, seg, kind } => {
                    let dx = segment_reduce_backward(self.value(*x), &node.value, seg, *kind, &grad);
                    accumulate(&mut grads, *x, dx);
                }
                Op::ScaleRows { x, factors } => {
                    accumulate(&mut grads, *x, grad.scale_rows(factors)?);
                }
                Op::MaskRows { x, keep } => {
                    accumulate(&mut grads, *x, grad.mask_rows(keep)?);
                }
                Op::MeanRowsPerBlock { x, keep, block_rows } => {
                    let src = self.value(*x);
                    let cols = src.shape()[1];
                    let mut dx = vec![F::ZERO; src.len()];
                    let blocks = src.shape()[0] / block_rows;
                    for b in 0..blocks {
                        let count = (0..*block_rows)
                            .filter(|i| keep[b * block_rows + i])
                            .count();
                        if count == 0 {
                            continue;
                        }
                        let inv = F::ONE / F::from_f64(count as f64);
                        let g = &grad.data()[b * cols..(b + 1) * cols];
                        for i in 0..*block_rows {
                            let r = b * block_rows + i;
                            if keep[r] {
                                let dst = &mut dx[r * cols..(r + 1) * cols];
                                for (d, &gv) in dst.iter_mut().zip(g.iter()) {
                                    *d += gv * inv;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(src.shape(), dx)?);
                }
                Op::L1Loss { pred, targets } => {
                    let p = self.value(*pred);
                    let g = grad.item()?;
                    let inv_n = F::ONE / F::from_f64(p.len() as f64);
                    let dp: Vec<F> = p
                        .data()
                        .iter()
                        .zip(targets.iter())
                        .map(|(&pv, &tv)| {
                            let d = pv - tv;
                            if d > F::ZERO {
                                g * inv_n
                            } else if d < F::ZERO {
                                -(g * inv_n)
                            } else {
                                F::ZERO
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *pred, Tensor::from_vec(p.shape(), dp)?);
                }
                Op::Sum { x } => {
                    let g = grad.item()?;
                    let src = self.value(*x);
                    accumulate(&mut grads, *x, Tensor::filled(src.shape(), g));
                }
            }
        }
        Ok(())
    }
}

fn accumulate<F: Scalar>(grads: &mut [Option<Tensor<F>>], id: VarId, delta: Tensor<F>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, &d) in existing.data_mut().iter_mut().zip(delta.data().iter()) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn elementwise<F: Scalar>(grad: &Tensor<F>, x: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let data = grad
        .data()
        .iter()
        .zip(x.data().iter())
        .map(|(&g, &v)| f(g, v))
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

fn layer_norm_backward<F: Scalar>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    eps: F,
    grad: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let cols = x.shape()[1];
    let inv_d = F::ONE / F::from_f64(cols as f64);
    let mut dx = vec![F::ZERO; x.len()];
    let mut dgamma = vec![F::ZERO; cols];
    let mut dbeta = vec![F::ZERO; cols];
    let mut xhat = vec![F::ZERO; cols];
    let mut dxhat = vec![F::ZERO; cols];

    for (r, row) in x.data().chunks(cols).enumerate() {
        let g = &grad.data()[r * cols..(r + 1) * cols];
        let mut mean = F::ZERO;
        for &v in row {
            mean += v;
        }
        mean *= inv_d;
        let mut var = F::ZERO;
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_d;
        let inv_std = F::ONE / (var + eps).sqrt();

        for j in 0..cols {
            xhat[j] = (row[j] - mean) * inv_std;
            dxhat[j] = g[j] * gamma.data()[j];
            dgamma[j] += g[j] * xhat[j];
            dbeta[j] += g[j];
        }
        let mut sum_dxhat = F::ZERO;
        let mut sum_dxhat_xhat = F::ZERO;
        for j in 0..cols {
            sum_dxhat += dxhat[j];
            sum_dxhat_xhat += dxhat[j] * xhat[j];
        }
        let d_f = F::from_f64(cols as f64);
        let dst = &mut dx[r * cols..(r + 1) * cols];
        for j in 0..cols {
            dst[j] = inv_std * inv_d * (d_f * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        Tensor::from_vec(&[cols], dgamma)?,
        Tensor::from_vec(&[cols], dbeta)?,
    ))
}

/// Mean spreads the adjoint uniformly; max/min route it to the first row (in
/// arrival order) that attained the extremum, a standard subgradient choice.
fn segment_reduce_backward<F: Scalar>(
    x: &Tensor<F>,
    out: &Tensor<F>,
    seg: &[usize],
    kind: ReduceKind,
    grad: &Tensor<F>,
) -> Tensor<F> {
    let cols = x.shape()[1];
    let segments = out.shape()[0];
    let mut dx = vec![F::ZERO; x.len()];
    match kind {
        ReduceKind::Mean => {
            let mut counts = vec![0usize; segments];
            for &s in seg {
                counts[s] += 1;
            }
            for (r, &s) in seg.iter().enumerate() {
                let inv = F::ONE / F::from_f64(counts[s] as f64);
                let g = &grad.data()[s * cols..(s + 1) * cols];
                let dst = &mut dx[r * cols..(r + 1) * cols];
                for (d, &gv) in dst.iter_mut().zip(g.iter()) {
                    *d += gv * inv;
                }
            }
        }
        ReduceKind::Max | ReduceKind::Min => {
            let mut claimed = vec![false; segments * cols];
            for (r, &s) in seg.iter().enumerate() {
                let row = &x.data()[r * cols..(r + 1) * cols];
                let o = &out.data()[s * cols..(s + 1) * cols];
                let g = &grad.data()[s * cols..(s + 1) * cols];
                let dst = &mut dx[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    if !claimed[s * cols + c] && row[c] == o[c] {
                        claimed[s * cols + c] = true;
                        dst[c] += g[c];
                    }
                }
            }
        }
    }
    Tensor::from_vec(x.shape(), dx).expect("same shape")
}
