//! Scaled dot-product attention, forward only.
//!
//! This is the benchmark baseline, not a trainable layer: projections are
//! frozen at seeded random values and nothing is recorded on a tape. Its
//! score matrix is what makes the cost quadratic in the number of rows.

use crate::error::Result;
use crate::params::glorot_uniform;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AttentionReference<F> {
    wq: Tensor<F>,
    wk: Tensor<F>,
    wv: Tensor<F>,
    inv_sqrt_d: F,
}

impl<F: Scalar> AttentionReference<F> {
    pub fn new(d: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        AttentionReference {
            wq: glorot_uniform(&mut rng, d, d),
            wk: glorot_uniform(&mut rng, d, d),
            wv: glorot_uniform(&mut rng, d, d),
            inv_sqrt_d: F::from_f64(1.0 / (d as f64).sqrt()),
        }
    }

    /// `softmax(Q.K^T / sqrt(d)) . V` with fixed projections.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let q = x.matmul(&self.wq)?;
        let k = x.matmul(&self.wk)?;
        let v = x.matmul(&self.wv)?;
        let scores = q.matmul(&k.transpose()?)?.scale(self.inv_sqrt_d);
        let attn = scores.softmax_rows()?;
        attn.matmul(&v)
    }

    pub fn v_projection(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        x.matmul(&self.wv)
    }
}

/// Analytic FLOP counts for one attention forward at sequence length `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionFlops {
    /// The Q.K^T score matrix: `2 n^2 d`.
    pub scores: u64,
    /// Softmax normalization, ~5 ops per score entry.
    pub softmax: u64,
    /// Attention-weighted sum over V: `2 n^2 d`.
    pub weighted_sum: u64,
    /// The three input projections: `6 n d^2`.
    pub projections: u64,
}

impl AttentionFlops {
    pub fn count(n: usize, d: usize) -> Self {
        let (n, d) = (n as u64, d as u64);
        AttentionFlops {
            scores: 2 * n * n * d,
            softmax: 5 * n * n,
            weighted_sum: 2 * n * n * d,
            projections: 6 * n * d * d,
        }
    }

    pub fn total(&self) -> u64 {
        self.scores + self.softmax + self.weighted_sum + self.projections
    }
}
