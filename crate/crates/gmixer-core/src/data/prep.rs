//! Dataset preparation: validate, shift vocabularies, split, write splits
//! plus the stats sidecar. This is the library behind `gmixer prep`.

use std::path::{Path, PathBuf};

use crate::data::{
    checksum_of_files, compute_degree_stats, find_sidecar, load_jsonl, split_dataset, write_jsonl,
    DatasetSplit, DeltaMode, MolecularGraph, StatsSidecar,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PrepOptions {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub delta_mode: DeltaMode,
    /// Molecules with more nodes than this are rejected outright.
    pub n_max: usize,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions {
            fractions: [0.8, 0.1, 0.1],
            seed: 7,
            delta_mode: DeltaMode::LogMean,
            n_max: 37,
        }
    }
}

/// Validate `input`, split it, and write `train/val/test.jsonl` plus
/// `<stem>.stats.json` into `out_dir`. Nothing is written unless every
/// record validates.
///
/// Atom and bond type ids are shifted up by one on the way through, so id 0
/// is reserved for padding and never collides with a chemical type.
pub fn prepare_dataset(input: &Path, out_dir: &Path, opts: &PrepOptions) -> Result<StatsSidecar> {
    let graphs = load_jsonl(input)?;
    if graphs.is_empty() {
        return Err(Error::contract("empty dataset"));
    }
    for (idx, g) in graphs.iter().enumerate() {
        if g.node_count() > opts.n_max {
            return Err(Error::data(
                idx + 1,
                format!(
                    "molecule has {} nodes, exceeding the n_max limit of {}",
                    g.node_count(),
                    opts.n_max
                ),
            ));
        }
    }

    let shifted: Vec<MolecularGraph> = graphs
        .into_iter()
        .map(|g| MolecularGraph {
            atom_types: g.atom_types.iter().map(|&a| a + 1).collect(),
            bonds: g.bonds.iter().map(|&(u, v, t)| (u, v, t + 1)).collect(),
            target: g.target,
        })
        .collect();

    let split = split_dataset(shifted, opts.fractions, opts.seed)?;
    let stats = compute_degree_stats(&split.train, opts.delta_mode)?;
    let n_max_observed = split.max_nodes();

    std::fs::create_dir_all(out_dir)?;
    let files = [
        ("train.jsonl", &split.train),
        ("val.jsonl", &split.validation),
        ("test.jsonl", &split.test),
    ];
    for (name, graphs) in files {
        write_jsonl(&out_dir.join(name), graphs)?;
    }
    let paths: Vec<PathBuf> = files.iter().map(|(name, _)| out_dir.join(name)).collect();
    let checksum = checksum_of_files(&paths)?;

    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let sidecar = StatsSidecar {
        delta: stats.delta,
        delta_mode: opts.delta_mode,
        max_degree: stats.max_degree,
        computed_over: stats.computed_over,
        vocab_atoms: split.vocab_atoms,
        vocab_bonds: split.vocab_bonds,
        n_max_observed,
        counts: split.sizes(),
        seed: opts.seed,
        fractions: opts.fractions,
        checksum,
    };
    sidecar.write(&out_dir.join(format!("{stem}.stats.json")))?;
    Ok(sidecar)
}

/// Load a prepared data directory, verifying the sidecar is present and the
/// split files have not changed since `prep` wrote them.
pub fn load_prepared_dir(data_dir: &Path) -> Result<(DatasetSplit, StatsSidecar)> {
    let sidecar_path = find_sidecar(data_dir)?;
    let sidecar = StatsSidecar::read(&sidecar_path)?;
    sidecar.verify_fresh(data_dir)?;
    let train = load_jsonl(&data_dir.join("train.jsonl"))?;
    let validation = load_jsonl(&data_dir.join("val.jsonl"))?;
    let test = load_jsonl(&data_dir.join("test.jsonl"))?;
    let split = DatasetSplit {
        train,
        validation,
        test,
        vocab_atoms: sidecar.vocab_atoms,
        vocab_bonds: sidecar.vocab_bonds,
    };
    Ok((split, sidecar))
}
