//! Fixed-width padded batches.
//!
//! Token mixing has one weight column per node slot, so every graph must be
//! embedded into the same `n_max`-slot frame. Padded slots carry atom id 0,
//! degree 0, and a false mask bit; undirected bonds expand into directed
//! neighbor lists (one entry per direction).

use crate::data::MolecularGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PaddedBatch {
    pub batch_size: usize,
    pub n_max: usize,
    /// `[B * n_max]`; id 0 in padded slots.
    pub atom_ids: Vec<usize>,
    /// `[B * n_max]`; true exactly for slots holding a real atom.
    pub node_mask: Vec<bool>,
    /// `[B * n_max]`; undirected degree, 0 in padded slots.
    pub degrees: Vec<usize>,
    /// `[B]`
    pub targets: Vec<f64>,
    /// Width of the per-node neighbor lists (max degree in this batch).
    pub max_neighbors: usize,
    /// `[B * n_max * max_neighbors]`; graph-local slot of each neighbor,
    /// valid for the first `degrees[row]` entries of a row's list.
    pub neighbor_slot: Vec<usize>,
    /// Bond type aligned with `neighbor_slot`.
    pub neighbor_bond: Vec<usize>,
}

/// Flat directed-edge view of a batch, in (graph, receiver slot, list
/// position) order. Rows index into the `[B * n_max]` node layout.
#[derive(Debug, Clone)]
pub struct EdgeWiring {
    /// Receiving node of each directed edge.
    pub dst_rows: Vec<usize>,
    /// Sending node of each directed edge.
    pub src_rows: Vec<usize>,
    pub bond_ids: Vec<usize>,
}

impl PaddedBatch {
    pub fn rows(&self) -> usize {
        self.batch_size * self.n_max
    }

    /// Neighbor list of one slot: `(neighbor_slot, bond_type)` pairs.
    pub fn neighbors(&self, graph: usize, slot: usize) -> &[usize] {
        let row = graph * self.n_max + slot;
        let deg = self.degrees[row];
        let base = row * self.max_neighbors;
        &self.neighbor_slot[base..base + deg]
    }

    pub fn neighbor_bonds(&self, graph: usize, slot: usize) -> &[usize] {
        let row = graph * self.n_max + slot;
        let deg = self.degrees[row];
        let base = row * self.max_neighbors;
        &self.neighbor_bond[base..base + deg]
    }

    pub fn edges(&self) -> EdgeWiring {
        let mut dst_rows = Vec::new();
        let mut src_rows = Vec::new();
        let mut bond_ids = Vec::new();
        for b in 0..self.batch_size {
            for slot in 0..self.n_max {
                let row = b * self.n_max + slot;
                let deg = self.degrees[row];
                let base = row * self.max_neighbors;
                for k in 0..deg {
                    dst_rows.push(row);
                    src_rows.push(b * self.n_max + self.neighbor_slot[base + k]);
                    bond_ids.push(self.neighbor_bond[base + k]);
                }
            }
        }
        EdgeWiring {
            dst_rows,
            src_rows,
            bond_ids,
        }
    }
}

/// Lay out `graphs` into a fixed `n_max`-slot frame.
pub fn pad_batch(graphs: &[MolecularGraph], n_max: usize) -> Result<PaddedBatch> {
    for (i, g) in graphs.iter().enumerate() {
        if g.node_count() > n_max {
            return Err(Error::contract(format!(
                "graph {} has {} nodes, exceeding n_max = {}",
                i,
                g.node_count(),
                n_max
            )));
        }
    }
    let b = graphs.len();
    let rows = b * n_max;
    let mut atom_ids = vec![0usize; rows];
    let mut node_mask = vec![false; rows];
    let mut degrees = vec![0usize; rows];
    let mut targets = Vec::with_capacity(b);

    let max_neighbors = graphs
        .iter()
        .flat_map(|g| g.degrees())
        .max()
        .unwrap_or(0);
    let mut neighbor_slot = vec![0usize; rows * max_neighbors];
    let mut neighbor_bond = vec![0usize; rows * max_neighbors];

    for (gi, g) in graphs.iter().enumerate() {
        let base_row = gi * n_max;
        for (slot, &atom) in g.atom_types.iter().enumerate() {
            atom_ids[base_row + slot] = atom;
            node_mask[base_row + slot] = true;
        }
        for &(u, v, t) in &g.bonds {
            for (recv, send) in [(u, v), (v, u)] {
                let row = base_row + recv;
                let k = degrees[row];
                neighbor_slot[row * max_neighbors + k] = send;
                neighbor_bond[row * max_neighbors + k] = t;
                degrees[row] = k + 1;
            }
        }
        targets.push(g.target);
    }

    Ok(PaddedBatch {
        batch_size: b,
        n_max,
        atom_ids,
        node_mask,
        degrees,
        targets,
        max_neighbors,
        neighbor_slot,
        neighbor_bond,
    })
}
