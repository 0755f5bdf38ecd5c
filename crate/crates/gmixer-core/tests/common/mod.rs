//! Shared helpers for the integration suites: independent oracles and
//! random-graph utilities. Everything here recomputes results from first
//! principles, never through the library's aggregation or tape paths.

// each test target compiles this module separately and uses a subset of it
#![allow(dead_code)]

use gmixer_core::data::MolecularGraph;
use gmixer_core::rng::SplitMix64;

/// One node's incoming messages as plain rows.
pub type Messages = Vec<Vec<f64>>;

/// Brute-force reimplementation of the combined scaler/aggregator reduction:
/// independent loops over scalers (outer) and aggregators (inner), with the
/// scaler computed through `powf` rather than division. Nodes without
/// messages yield all-zero rows.
pub fn brute_force_aggregate(per_node: &[Messages], delta: f64, d: usize) -> Vec<Vec<f64>> {
    let alphas = [0.0f64, 1.0, -1.0];
    per_node
        .iter()
        .map(|msgs| {
            let degree = msgs.len();
            let mut row = Vec::with_capacity(9 * d);
            for &alpha in &alphas {
                let scale = if degree == 0 {
                    0.0
                } else {
                    (((degree + 1) as f64).ln() / delta).powf(alpha)
                };
                for agg in 0..3 {
                    for c in 0..d {
                        let value = if degree == 0 {
                            0.0
                        } else {
                            let column = msgs.iter().map(|m| m[c]);
                            match agg {
                                0 => column.fold(f64::NEG_INFINITY, f64::max),
                                1 => column.fold(f64::INFINITY, f64::min),
                                _ => column.sum::<f64>() / degree as f64,
                            }
                        };
                        row.push(if degree == 0 { 0.0 } else { scale * value });
                    }
                }
            }
            row
        })
        .collect()
}

/// Random graph with `n` nodes: a spanning tree plus a few extra edges,
/// random atom/bond types, all seeded.
pub fn random_graph(rng: &mut SplitMix64, n: usize, allow_isolated: bool) -> MolecularGraph {
    let atom_types = (0..n).map(|_| 1 + rng.below(6)).collect();
    let mut bonds = Vec::new();
    if n > 1 {
        let start = if allow_isolated && rng.next_f64() < 0.3 { 2 } else { 1 };
        for v in start..n {
            bonds.push((rng.below(v), v, 1 + rng.below(3)));
        }
    }
    MolecularGraph {
        atom_types,
        bonds,
        target: rng.uniform(-2.0, 2.0),
    }
}

/// Relabel nodes by `perm` (new index of old node `i` is `perm[i]`),
/// rewiring bonds to match.
pub fn permute_graph(g: &MolecularGraph, perm: &[usize]) -> MolecularGraph {
    let n = g.node_count();
    assert_eq!(perm.len(), n);
    let mut atom_types = vec![0; n];
    for (old, &new) in perm.iter().enumerate() {
        atom_types[new] = g.atom_types[old];
    }
    let bonds = g
        .bonds
        .iter()
        .map(|&(u, v, t)| (perm[u], perm[v], t))
        .collect();
    MolecularGraph {
        atom_types,
        bonds,
        target: g.target,
    }
}

pub fn random_permutation(rng: &mut SplitMix64, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    perm
}
