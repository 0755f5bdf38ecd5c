//! Scaling benchmark: token mixing versus dot-product attention.
//!
//! Both kernels run forward-only at matched width `d` over a ladder of
//! sequence lengths. Token mixing routes everything through a fixed-width
//! hidden projection, so its cost grows linearly with the number of rows;
//! the attention score matrix grows quadratically. The report carries the
//! fitted log-log exponents so the separation is machine-checkable.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionReference;
use crate::error::{Error, Result};
use crate::params::glorot_uniform;
use crate::rng::SplitMix64;
use crate::runtime;
use crate::tensor::Tensor;

/// Hidden width of the token-mixing projection; fixed across sizes, which is
/// exactly why the kernel stays linear in the sequence length.
pub const TOKEN_HIDDEN: usize = 64;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub d: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![64, 128, 256, 512, 1024, 2048],
            repeats: 7,
            d: 64,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub sizes: Vec<usize>,
    pub d: usize,
    pub repeats: usize,
    /// Median wall-clock nanoseconds per forward at each size.
    pub mixer_ns: Vec<f64>,
    pub attention_ns: Vec<f64>,
    /// Fitted log-log slopes.
    pub mixer_exponent: f64,
    pub attention_exponent: f64,
    pub mixer_r_squared: f64,
    pub attention_r_squared: f64,
}

impl BenchReport {
    /// The headline separation between quadratic and linear scaling.
    pub fn exponent_gap(&self) -> f64 {
        self.attention_exponent - self.mixer_exponent
    }
}

/// Forward-only token-mixing kernel at one sequence length.
struct TokenMixKernel {
    gamma: Tensor<f64>,
    beta: Tensor<f64>,
    w1: Tensor<f64>,
    b1: Tensor<f64>,
    w2: Tensor<f64>,
    b2: Tensor<f64>,
}

impl TokenMixKernel {
    fn new(n: usize, d: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        TokenMixKernel {
            gamma: Tensor::filled(&[d], 1.0),
            beta: Tensor::zeros(&[d]),
            w1: glorot_uniform(&mut rng, n, TOKEN_HIDDEN),
            b1: Tensor::zeros(&[TOKEN_HIDDEN]),
            w2: glorot_uniform(&mut rng, TOKEN_HIDDEN, n),
            b2: Tensor::zeros(&[n]),
        }
    }

    fn forward(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let u = x.layer_norm_rows(&self.gamma, &self.beta, 1e-5)?;
        let t = u.transpose()?; // [d, n]
        let h = t.matmul(&self.w1)?.add_bias(&self.b1)?.gelu();
        let m = h.matmul(&self.w2)?.add_bias(&self.b2)?;
        m.transpose()?.add(x)
    }
}

/// Median nanoseconds per call. When a single call is too fast for the
/// timer, calls are batched inside each sample; `warned` reports that the
/// harness had to do so.
fn time_median_ns(mut call: impl FnMut(), repeats: usize) -> (f64, bool) {
    const MIN_SAMPLE_NS: u128 = 2_000_000; // 2 ms per timed sample

    let t0 = Instant::now();
    call();
    let once = t0.elapsed().as_nanos().max(1);
    let iters = (MIN_SAMPLE_NS / once).clamp(1, 1_000_000) as usize;
    let warned = iters > 1;

    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for _ in 0..iters {
            call();
        }
        samples.push(start.elapsed().as_nanos() as f64 / iters as f64);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let median = if samples.len() % 2 == 1 {
        samples[samples.len() / 2]
    } else {
        0.5 * (samples[samples.len() / 2 - 1] + samples[samples.len() / 2])
    };
    (median, warned)
}

/// Least-squares fit of `ln(t)` against `ln(n)`: returns (slope, r^2).
pub fn log_log_fit(sizes: &[usize], times_ns: &[f64]) -> (f64, f64) {
    let n = sizes.len() as f64;
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = times_ns.iter().map(|&t| t.ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.sizes.len() < 5 {
        return Err(Error::contract(format!(
            "bench: need at least 5 sizes, got {}",
            cfg.sizes.len()
        )));
    }
    if cfg.sizes.iter().any(|&s| s < 16) {
        return Err(Error::contract("bench: every size must be at least 16"));
    }
    if !cfg.sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::contract("bench: sizes must be strictly increasing"));
    }
    if cfg.repeats < 1 {
        return Err(Error::contract("bench: repeats must be at least 1"));
    }

    // single-threaded timing: sibling workers would skew the medians
    runtime::set_thread_cap(1);

    let mut mixer_ns = Vec::with_capacity(cfg.sizes.len());
    let mut attention_ns = Vec::with_capacity(cfg.sizes.len());
    let mut rng = SplitMix64::new(cfg.seed);

    for &n in &cfg.sizes {
        let x = Tensor::from_vec(
            &[n, cfg.d],
            (0..n * cfg.d).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )?;

        let mixer = TokenMixKernel::new(n, cfg.d, cfg.seed ^ n as u64);
        mixer.forward(&x)?; // warm up and validate
        let (m_ns, m_warn) = time_median_ns(
            || {
                let out = mixer.forward(&x).expect("validated shapes");
                std::hint::black_box(&out);
            },
            cfg.repeats,
        );

        let attention = AttentionReference::<f64>::new(cfg.d, cfg.seed ^ (n as u64) << 1);
        attention.forward(&x)?;
        let (a_ns, a_warn) = time_median_ns(
            || {
                let out = attention.forward(&x).expect("validated shapes");
                std::hint::black_box(&out);
            },
            cfg.repeats,
        );

        if m_warn || a_warn {
            eprintln!(
                "bench: n={n} is faster than the timer floor; batching calls within samples"
            );
        }
        mixer_ns.push(m_ns);
        attention_ns.push(a_ns);
    }

    let (mixer_exponent, mixer_r_squared) = log_log_fit(&cfg.sizes, &mixer_ns);
    let (attention_exponent, attention_r_squared) = log_log_fit(&cfg.sizes, &attention_ns);

    Ok(BenchReport {
        sizes: cfg.sizes.clone(),
        d: cfg.d,
        repeats: cfg.repeats,
        mixer_ns,
        attention_ns,
        mixer_exponent,
        attention_exponent,
        mixer_r_squared,
        attention_r_squared,
    })
}
