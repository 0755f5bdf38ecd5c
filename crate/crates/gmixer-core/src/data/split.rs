//! Seeded dataset splitting.

use crate::data::MolecularGraph;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<MolecularGraph>,
    pub validation: Vec<MolecularGraph>,
    pub test: Vec<MolecularGraph>,
    /// Max observed atom type over all splits, plus one.
    pub vocab_atoms: usize,
    /// Max observed bond type over all splits, plus one.
    pub vocab_bonds: usize,
}

impl DatasetSplit {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }

    pub fn max_nodes(&self) -> usize {
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .map(|g| g.node_count())
            .max()
            .unwrap_or(0)
    }
}

/// Shuffle deterministically by seed, then slice contiguously.
pub fn split_dataset(
    graphs: Vec<MolecularGraph>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit> {
    if graphs.is_empty() {
        return Err(Error::contract("split: empty dataset"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "fractions must sum to 1, got {fractions:?} (sum {total})"
        )));
    }
    if fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::contract("fractions must be non-negative"));
    }

    let mut shuffled = graphs;
    SplitMix64::new(seed).shuffle(&mut shuffled);

    let n = shuffled.len();
    let n_train = (fractions[0] * n as f64).floor() as usize;
    let n_val = (fractions[1] * n as f64).floor() as usize;

    let vocab_atoms = shuffled
        .iter()
        .flat_map(|g| g.atom_types.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let vocab_bonds = shuffled
        .iter()
        .flat_map(|g| g.bonds.iter().map(|&(_, _, t)| t))
        .max()
        .map_or(0, |m| m + 1);

    let test = shuffled.split_off(n_train + n_val.min(n - n_train));
    let validation = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        validation,
        test,
        vocab_atoms,
        vocab_bonds,
    })
}
