//! Graph regression with multi-aggregator message passing and MLP-mixer
//! node updates, on a self-contained f32/f64 tensor-and-tape substrate.
//!
//! The crate splits into four layers:
//!
//! - numeric core: [`tensor`], [`tape`], [`params`], [`optim`],
//!   [`checkpoint`], [`gradcheck`]: dense math, reverse-mode
//!   differentiation, Adam, and finite-difference verification;
//! - graph data: [`data`]: JSONL ingestion, degree statistics, seeded
//!   splits, and fixed-width padded batches;
//! - model: [`layers`], [`model`], [`attention`]: degree scalers, the
//!   combined 3x3 scaler/aggregator reduction, the mixer block, and the
//!   attention baseline used only for benchmarking;
//! - driver: [`training`], [`bench`], [`config`]: the training loop, the
//!   scaling benchmark, and config-file handling behind the `gmixer` binary.

pub mod attention;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod runtime;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
