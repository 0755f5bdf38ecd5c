//! Deterministic ZINC-style synthetic molecules.
//!
//! The real ZINC subset is not redistributable alongside this crate, so
//! tests, the smoke script, and quick-start runs use generated graphs that
//! match its shape: 9-37 heavy atoms, sparse ring-bearing connectivity, a
//! handful of atom and bond types, and a solubility-like regression target
//! that is a smooth function of the structure (plus a little noise), so a
//! model with capacity can actually fit it.

use std::collections::HashSet;

use crate::data::MolecularGraph;
use crate::rng::SplitMix64;

pub const ATOM_VOCAB: usize = 28;
pub const BOND_VOCAB: usize = 4;
pub const MIN_NODES: usize = 9;
pub const MAX_NODES: usize = 37;

/// Generate `count` graphs, reproducible from `seed`.
pub fn generate_zinc_like(count: usize, seed: u64) -> Vec<MolecularGraph> {
    let root = SplitMix64::new(seed);
    (0..count)
        .map(|i| generate_one(&mut root.fork(i as u64)))
        .collect()
}

fn generate_one(rng: &mut SplitMix64) -> MolecularGraph {
    let n = MIN_NODES + rng.below(MAX_NODES - MIN_NODES + 1);

    // carbon-heavy atom distribution over a 28-type vocabulary
    let atom_types: Vec<usize> = (0..n)
        .map(|_| {
            let r = rng.next_f64();
            if r < 0.55 {
                0
            } else if r < 0.75 {
                1 + rng.below(3)
            } else {
                4 + rng.below(ATOM_VOCAB - 4)
            }
        })
        .collect();

    // random spanning tree keeps every molecule connected; parents re-roll
    // away from saturated atoms so degrees stay molecule-ish
    let mut bonds: Vec<(usize, usize, usize)> = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut degrees = vec![0usize; n];
    for v in 1..n {
        let mut u = rng.below(v);
        for _ in 0..8 {
            if degrees[u] < 3 {
                break;
            }
            u = rng.below(v);
        }
        bonds.push((u, v, rng.below(BOND_VOCAB)));
        seen.insert((u, v));
        degrees[u] += 1;
        degrees[v] += 1;
    }
    // sprinkle ring-closing bonds
    let extras = (n as f64 * 0.18).round() as usize;
    for _ in 0..extras {
        let u = rng.below(n);
        let v = rng.below(n);
        let key = (u.min(v), u.max(v));
        if u == v || seen.contains(&key) || degrees[u] >= 4 || degrees[v] >= 4 {
            continue;
        }
        seen.insert(key);
        degrees[u] += 1;
        degrees[v] += 1;
        bonds.push((key.0, key.1, rng.below(BOND_VOCAB)));
    }

    let graph = MolecularGraph {
        atom_types,
        bonds,
        target: 0.0,
    };
    let target = structural_target(&graph) + 0.05 * rng.uniform(-1.0, 1.0);
    let graph = MolecularGraph { target, ..graph };
    debug_assert!(graph.validate().is_ok());
    graph
}

/// Small random connected graph with a scalar target, used as the fixture
/// for gradient checking. Atom types stay below 5 and bond types below 4 so
/// a tiny vocabulary covers it.
pub fn probe_graph(nodes: usize, seed: u64) -> MolecularGraph {
    let mut rng = SplitMix64::new(seed);
    let atom_types = (0..nodes).map(|_| 1 + rng.below(4)).collect();
    let mut bonds = Vec::new();
    for v in 1..nodes {
        bonds.push((rng.below(v), v, 1 + rng.below(2)));
    }
    if nodes >= 3 {
        // one ring closure so some node has degree > 2
        let u = rng.below(nodes - 2);
        bonds.push((u, nodes - 1, 1));
    }
    let mut g = MolecularGraph {
        atom_types,
        bonds,
        target: rng.uniform(-2.0, 2.0),
    };
    if g.validate().is_err() {
        // ring closure duplicated a tree edge; drop it
        g.bonds.pop();
    }
    g
}

/// Smooth solubility-style target in roughly [-3, 3].
fn structural_target(g: &MolecularGraph) -> f64 {
    let n = g.node_count() as f64;
    let degrees = g.degrees();
    let mean_log_deg =
        degrees.iter().map(|&d| ((d + 1) as f64).ln()).sum::<f64>() / n;
    let carbon_frac = g.atom_types.iter().filter(|&&a| a == 0).count() as f64 / n;
    let hetero_frac = g.atom_types.iter().filter(|&&a| a >= 4).count() as f64 / n;
    let heavy_bonds = g
        .bonds
        .iter()
        .filter(|&&(_, _, t)| t >= 2)
        .count() as f64
        / g.bonds.len().max(1) as f64;
    2.2 * (mean_log_deg - 1.0) - 1.6 * hetero_frac + 0.8 * carbon_frac + 0.7 * heavy_bonds
        + 0.45 * (n / 23.0 - 1.0)
}
