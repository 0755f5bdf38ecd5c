//! Molecular-graph ingestion, degree statistics, batching, and splits.

mod batch;
mod graph;
mod prep;
mod sidecar;
mod split;
mod stats;
pub mod synth;

pub use batch::{pad_batch, EdgeWiring, PaddedBatch};
pub use graph::{load_jsonl, write_jsonl, MolecularGraph};
pub use prep::{load_prepared_dir, prepare_dataset, PrepOptions};
pub use sidecar::{checksum_of_files, find_sidecar, StatsSidecar};
pub use split::{split_dataset, DatasetSplit};
pub use stats::{compute_degree_stats, DegreeStats, DeltaMode};
