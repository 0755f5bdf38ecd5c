//! Training-set degree statistics: the normalizer behind the degree scalers.

use serde::{Deserialize, Serialize};

use crate::data::MolecularGraph;
use crate::error::{Error, Result};

/// How the degree normalizer is computed over the training split.
///
/// `LogMean` (the default) averages `log(d+1)`, which makes the scaler equal
/// to one for a node of typical degree. `RawMeanDegree` averages the plain
/// degree instead; both readings are kept behind this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    LogMean,
    RawMeanDegree,
}

impl std::fmt::Display for DeltaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeltaMode::LogMean => write!(f, "log_mean"),
            DeltaMode::RawMeanDegree => write!(f, "raw_mean_degree"),
        }
    }
}

impl std::str::FromStr for DeltaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_mean" => Ok(DeltaMode::LogMean),
            "raw_mean_degree" => Ok(DeltaMode::RawMeanDegree),
            other => Err(Error::Config(format!(
                "unknown delta_mode {other:?} (expected log_mean or raw_mean_degree)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    /// Positive degree normalizer.
    pub delta: f64,
    pub max_degree: usize,
    /// Number of nodes the statistics were computed over.
    pub computed_over: usize,
}

/// Aggregate degree statistics over a training split. Errors if the split is
/// empty or degenerate (delta must be positive to divide by).
pub fn compute_degree_stats(train: &[MolecularGraph], mode: DeltaMode) -> Result<DegreeStats> {
    let mut acc = 0.0f64;
    let mut nodes = 0usize;
    let mut max_degree = 0usize;
    for g in train {
        for d in g.degrees() {
            acc += match mode {
                DeltaMode::LogMean => ((d + 1) as f64).ln(),
                DeltaMode::RawMeanDegree => d as f64,
            };
            max_degree = max_degree.max(d);
            nodes += 1;
        }
    }
    if nodes == 0 {
        return Err(Error::contract("degree stats: empty training split"));
    }
    let delta = acc / nodes as f64;
    if delta <= 0.0 {
        return Err(Error::contract(format!(
            "delta must be positive, got {delta} over {nodes} nodes"
        )));
    }
    Ok(DegreeStats {
        delta,
        max_degree,
        computed_over: nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> MolecularGraph {
        MolecularGraph {
            atom_types: vec![0, 0, 0],
            bonds: vec![(0, 1, 0), (1, 2, 0)],
            target: 0.0,
        }
    }

    #[test]
    fn three_node_path_matches_hand_computation() {
        // degrees (1, 2, 1): delta = (ln2 + ln3 + ln2) / 3
        let stats = compute_degree_stats(&[path3()], DeltaMode::LogMean).unwrap();
        let expected = (2.0f64.ln() + 3.0f64.ln() + 2.0f64.ln()) / 3.0;
        assert!((stats.delta - expected).abs() < 1e-15);
        assert!((stats.delta - 0.8283).abs() < 1e-4);
        assert_eq!(stats.max_degree, 2);
        assert_eq!(stats.computed_over, 3);
    }

    #[test]
    fn isolated_only_split_is_rejected() {
        let iso = MolecularGraph {
            atom_types: vec![0],
            bonds: vec![],
            target: 0.0,
        };
        let err = compute_degree_stats(&[iso.clone(), iso], DeltaMode::LogMean)
            .unwrap_err()
            .to_string();
        assert!(err.contains("delta must be positive"), "{err}");
    }

    #[test]
    fn empty_split_is_rejected() {
        assert!(compute_degree_stats(&[], DeltaMode::LogMean).is_err());
    }

    #[test]
    fn raw_mean_degree_mode() {
        let stats = compute_degree_stats(&[path3()], DeltaMode::RawMeanDegree).unwrap();
        assert!((stats.delta - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn permutation_invariant_over_graph_and_node_order() {
        let a = path3();
        // same path graph with nodes relabeled (2,1,0)
        let b = MolecularGraph {
            atom_types: vec![0, 0, 0],
            bonds: vec![(2, 1, 0), (1, 0, 0)],
            target: 0.0,
        };
        let extra = MolecularGraph {
            atom_types: vec![0, 0],
            bonds: vec![(0, 1, 1)],
            target: 1.0,
        };
        let s1 = compute_degree_stats(&[a.clone(), extra.clone()], DeltaMode::LogMean).unwrap();
        let s2 = compute_degree_stats(&[extra, b], DeltaMode::LogMean).unwrap();
        assert_eq!(s1.delta.to_bits(), s2.delta.to_bits());
    }

    #[test]
    fn recomputation_reproduces_delta_exactly() {
        let graphs = vec![path3(), path3()];
        let s1 = compute_degree_stats(&graphs, DeltaMode::LogMean).unwrap();
        let s2 = compute_degree_stats(&graphs, DeltaMode::LogMean).unwrap();
        assert_eq!(s1.delta.to_bits(), s2.delta.to_bits());
    }
}
