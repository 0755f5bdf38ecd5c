//! Dense row-major tensors and the forward kernels every layer is built from.
//!
//! Tensors are immutable values: every operation allocates its output, so a
//! tensor handed to another thread can be read freely. Gradient bookkeeping
//! lives in [`crate::tape`], not here.

use crate::error::{Error, Result};
use crate::runtime;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

/// Reduction used when collapsing per-edge messages into per-node rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Max,
    Min,
    Mean,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::ZERO; len],
        }
    }

    pub fn filled(shape: &[usize], value: F) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::contract(format!(
                "from_vec: shape {:?} wants {} values, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Rank-2 constructor from nested rows; rows must be equal length.
    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::contract("from_rows: ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Tensor::from_vec(&[r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Sole element of a scalar tensor.
    pub fn item(&self) -> Result<F> {
        if self.data.len() != 1 {
            return Err(Error::contract(format!(
                "item: expected a scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    // ── linear algebra ───────────────────────────────────────────────

    pub fn matmul(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![F::ZERO; m * n];
        matmul_into(&self.data, &rhs.data, &mut out, m, k, n);
        Tensor::from_vec(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor<F>> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![F::ZERO; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::from_vec(&[c, r], out)
    }

    /// Transpose each `block_rows`-row block independently.
    ///
    /// A `[B*R, C]` tensor holding `B` stacked matrices becomes `[B*C, R]`.
    /// This is how token mixing flips node slots into the feature axis for a
    /// whole batch with one reshape.
    pub fn batch_transpose(&self, block_rows: usize) -> Result<Tensor<F>> {
        let (rows, cols) = self.dims2("batch_transpose")?;
        if block_rows == 0 || rows % block_rows != 0 {
            return Err(Error::contract(format!(
                "batch_transpose: {} rows not divisible into blocks of {}",
                rows, block_rows
            )));
        }
        let blocks = rows / block_rows;
        let mut out = vec![F::ZERO; rows * cols];
        for b in 0..blocks {
            let src = b * block_rows * cols;
            let dst = b * cols * block_rows;
            for i in 0..block_rows {
                for j in 0..cols {
                    out[dst + j * block_rows + i] = self.data[src + i * cols + j];
                }
            }
        }
        Tensor::from_vec(&[blocks * cols, block_rows], out)
    }

    // ── elementwise ──────────────────────────────────────────────────

    pub fn add(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        self.zip_same_shape(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        self.zip_same_shape(rhs, "sub", |a, b| a - b)
    }

    pub fn scale(&self, factor: F) -> Tensor<F> {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_same_shape(
        &self,
        rhs: &Tensor<F>,
        op: &'static str,
        f: impl Fn(F, F) -> F,
    ) -> Result<Tensor<F>> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Broadcast a `[cols]` bias over every row of a `[rows, cols]` tensor.
    pub fn add_bias(&self, bias: &Tensor<F>) -> Result<Tensor<F>> {
        let (_, cols) = self.dims2("add_bias")?;
        if bias.shape != [cols] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let mut out = self.data.clone();
        for row in out.chunks_mut(cols) {
            for (v, &b) in row.iter_mut().zip(bias.data.iter()) {
                *v += b;
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    pub fn gelu(&self) -> Tensor<F> {
        self.map(gelu_value)
    }

    pub fn relu(&self) -> Tensor<F> {
        self.map(|v| if v > F::ZERO { v } else { F::ZERO })
    }

    pub fn sum(&self) -> F {
        let mut acc = F::ZERO;
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    // ── row-structured ops ───────────────────────────────────────────

    /// Normalize each row to zero mean / unit (population) variance, then
    /// apply the learnable affine `gamma`, `beta`.
    pub fn layer_norm_rows(&self, gamma: &Tensor<F>, beta: &Tensor<F>, eps: F) -> Result<Tensor<F>> {
        let (_, cols) = self.dims2("layer_norm")?;
        if cols == 0 {
            return Err(Error::EmptyDim {
                op: "layer_norm",
                shape: self.shape.clone(),
            });
        }
        if gamma.shape != [cols] || beta.shape != [cols] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape.clone(),
                rhs: gamma.shape.clone(),
            });
        }
        if eps <= F::ZERO {
            return Err(Error::contract("layer_norm: eps must be positive"));
        }
        let inv_d = F::ONE / F::from_f64(cols as f64);
        let mut out = vec![F::ZERO; self.data.len()];
        for (r, row) in self.data.chunks(cols).enumerate() {
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
            let dst = &mut out[r * cols..(r + 1) * cols];
            for j in 0..cols {
                dst[j] = (row[j] - mean) * inv_std * gamma.data[j] + beta.data[j];
            }
        }
        Tensor::from_vec(&self.shape, out)
    }

    /// Rowwise softmax (used by the attention baseline).
    pub fn softmax_rows(&self) -> Result<Tensor<F>> {
        let (_, cols) = self.dims2("softmax")?;
        if cols == 0 {
            return Err(Error::EmptyDim {
                op: "softmax",
                shape: self.shape.clone(),
            });
        }
        let mut out = vec![F::ZERO; self.data.len()];
        for (r, row) in self.data.chunks(cols).enumerate() {
            let mut max = row[0];
            for &v in row {
                max = max.maximum(v);
            }
            let dst = &mut out[r * cols..(r + 1) * cols];
            let mut total = F::ZERO;
            for j in 0..cols {
                let e = (row[j] - max).exp();
                dst[j] = e;
                total += e;
            }
            let inv = F::ONE / total;
            for v in dst {
                *v *= inv;
            }
        }
        Tensor::from_vec(&self.shape, out)
    }

    /// Copy out the listed rows (repeats allowed).
    pub fn gather_rows(&self, rows: &[usize]) -> Result<Tensor<F>> {
        let (r, cols) = self.dims2("gather_rows")?;
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &idx in rows {
            if idx >= r {
                return Err(Error::contract(format!(
                    "gather_rows: row {} out of range for {} rows",
                    idx, r
                )));
            }
            out.extend_from_slice(&self.data[idx * cols..(idx + 1) * cols]);
        }
        Tensor::from_vec(&[rows.len(), cols], out)
    }

    /// Concatenate rank-2 tensors along the feature axis.
    pub fn concat_cols(parts: &[&Tensor<F>]) -> Result<Tensor<F>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols: no inputs"))?;
        let (rows, _) = first.dims2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for p in parts {
            let (r, c) = p.dims2("concat_cols")?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            widths.push(c);
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(widths.iter()) {
                out.extend_from_slice(&p.data[r * w..(r + 1) * w]);
            }
        }
        Tensor::from_vec(&[rows, total], out)
    }

    /// Reduce rows into `segments` buckets according to `seg_of_row`.
    ///
    /// Empty segments come out all-zero. Mean accumulates each bucket in
    /// value-sorted order, so the result is exactly independent of the order
    /// rows arrive in (max and min are order-free by construction).
    pub fn segment_reduce(
        &self,
        seg_of_row: &[usize],
        segments: usize,
        kind: ReduceKind,
    ) -> Result<Tensor<F>> {
        let (rows, cols) = self.dims2("segment_reduce")?;
        if seg_of_row.len() != rows {
            return Err(Error::contract(format!(
                "segment_reduce: {} segment ids for {} rows",
                seg_of_row.len(),
                rows
            )));
        }
        for &s in seg_of_row {
            if s >= segments {
                return Err(Error::contract(format!(
                    "segment_reduce: segment {} out of range {}",
                    s, segments
                )));
            }
        }
        let mut out = vec![F::ZERO; segments * cols];
        match kind {
            ReduceKind::Max | ReduceKind::Min => {
                let mut seen = vec![false; segments];
                for (r, &s) in seg_of_row.iter().enumerate() {
                    let row = &self.data[r * cols..(r + 1) * cols];
                    let dst = &mut out[s * cols..(s + 1) * cols];
                    if !seen[s] {
                        dst.copy_from_slice(row);
                        seen[s] = true;
                    } else {
                        for (d, &v) in dst.iter_mut().zip(row.iter()) {
                            *d = if kind == ReduceKind::Max {
                                d.maximum(v)
                            } else {
                                d.minimum(v)
                            };
                        }
                    }
                }
            }
            ReduceKind::Mean => {
                let mut members: Vec<Vec<usize>> = vec![Vec::new(); segments];
                for (r, &s) in seg_of_row.iter().enumerate() {
                    members[s].push(r);
                }
                let mut bucket: Vec<F> = Vec::new();
                for (s, rows_in) in members.iter().enumerate() {
                    if rows_in.is_empty() {
                        continue;
                    }
                    let inv = F::ONE / F::from_f64(rows_in.len() as f64);
                    for c in 0..cols {
                        bucket.clear();
                        bucket.extend(rows_in.iter().map(|&r| self.data[r * cols + c]));
                        bucket.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
                        let mut acc = F::ZERO;
                        for &v in &bucket {
                            acc += v;
                        }
                        out[s * cols + c] = acc * inv;
                    }
                }
            }
        }
        Tensor::from_vec(&[segments, cols], out)
    }

    /// Multiply each row by a per-row constant.
    pub fn scale_rows(&self, factors: &[F]) -> Result<Tensor<F>> {
        let (rows, cols) = self.dims2("scale_rows")?;
        if factors.len() != rows {
            return Err(Error::contract(format!(
                "scale_rows: {} factors for {} rows",
                factors.len(),
                rows
            )));
        }
        let mut out = self.data.clone();
        for (r, chunk) in out.chunks_mut(cols).enumerate() {
            for v in chunk {
                *v *= factors[r];
            }
        }
        Tensor::from_vec(&self.shape, out)
    }

    /// Zero every row whose mask entry is false.
    pub fn mask_rows(&self, keep: &[bool]) -> Result<Tensor<F>> {
        let (rows, cols) = self.dims2("mask_rows")?;
        if keep.len() != rows {
            return Err(Error::contract(format!(
                "mask_rows: {} mask entries for {} rows",
                keep.len(),
                rows
            )));
        }
        let mut out = self.data.clone();
        for (r, chunk) in out.chunks_mut(cols).enumerate() {
            if !keep[r] {
                chunk.fill(F::ZERO);
            }
        }
        Tensor::from_vec(&self.shape, out)
    }

    /// Mean over the kept rows of each `block_rows`-row block: `[B*R, C]`
    /// with a `[B*R]` mask pools to `[B, C]`. Every block needs at least one
    /// kept row.
    pub fn mean_rows_per_block(&self, keep: &[bool], block_rows: usize) -> Result<Tensor<F>> {
        let (rows, cols) = self.dims2("mean_rows_per_block")?;
        if keep.len() != rows {
            return Err(Error::contract(format!(
                "mean_rows_per_block: {} mask entries for {} rows",
                keep.len(),
                rows
            )));
        }
        if block_rows == 0 || rows % block_rows != 0 {
            return Err(Error::contract(
                "mean_rows_per_block: rows not divisible into blocks",
            ));
        }
        let blocks = rows / block_rows;
        let mut out = vec![F::ZERO; blocks * cols];
        for b in 0..blocks {
            let mut count = 0usize;
            let dst = &mut out[b * cols..(b + 1) * cols];
            for i in 0..block_rows {
                let r = b * block_rows + i;
                if keep[r] {
                    count += 1;
                    for (d, &v) in dst.iter_mut().zip(&self.data[r * cols..(r + 1) * cols]) {
                        *d += v;
                    }
                }
            }
            if count == 0 {
                return Err(Error::contract(format!(
                    "mean_rows_per_block: block {} has no unmasked rows",
                    b
                )));
            }
            let inv = F::ONE / F::from_f64(count as f64);
            for d in dst {
                *d *= inv;
            }
        }
        Tensor::from_vec(&[blocks, cols], out)
    }
}

/// GELU via the tanh approximation; smooth everywhere, which keeps central
/// finite differences honest during gradient checks.
pub fn gelu_value<F: Scalar>(x: F) -> F {
    let c = F::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = F::from_f64(0.044_715);
    let half = F::from_f64(0.5);
    let inner = c * (x + k * x * x * x);
    half * x * (F::ONE + inner.tanh())
}

pub fn gelu_derivative<F: Scalar>(x: F) -> F {
    let c = F::from_f64(0.797_884_560_802_865_4);
    let k = F::from_f64(0.044_715);
    let half = F::from_f64(0.5);
    let three = F::from_f64(3.0);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let sech2 = F::ONE - t * t;
    let d_inner = c * (F::ONE + three * k * x * x);
    half * (F::ONE + t) + half * x * sech2 * d_inner
}

/// Row-major `C += A.B` kernel. Rows split across threads for large
/// problems; each output element is produced by exactly one thread with the
/// same sequential inner loop, so results are identical at any thread count.
pub(crate) fn matmul_into<F: Scalar>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let threads = runtime::thread_cap();
    let work = m * k * n;
    if threads <= 1 || work < (1 << 20) || m < 2 * threads {
        matmul_rows(a, b, out, k, n);
        return;
    }
    let rows_per = m.div_ceil(threads);
    std::thread::scope(|scope| {
        for (chunk_idx, out_chunk) in out.chunks_mut(rows_per * n).enumerate() {
            let a_part = &a[chunk_idx * rows_per * k..];
            scope.spawn(move || {
                matmul_rows(&a_part[..(out_chunk.len() / n) * k], b, out_chunk, k, n);
            });
        }
    });
}

fn matmul_rows<F: Scalar>(a: &[F], b: &[F], out: &mut [F], k: usize, n: usize) {
    if k == 0 || n == 0 {
        return; // empty inner product: the zeroed output is already correct
    }
    for (arow, orow) in a.chunks(k).zip(out.chunks_mut(n)) {
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}
