//! Molecular graphs and their line-delimited JSON representation.
//!
//! One graph per line: `{"atoms":[..],"bonds":[[u,v,type],..],"y":..}`.
//! Bonds are undirected and stored once; message passing later expands each
//! into both directions.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularGraph {
    #[serde(rename = "atoms")]
    pub atom_types: Vec<usize>,
    /// `(u, v, bond_type)` with `u != v`, no duplicate undirected pairs.
    pub bonds: Vec<(usize, usize, usize)>,
    #[serde(rename = "y")]
    pub target: f64,
}

impl MolecularGraph {
    pub fn node_count(&self) -> usize {
        self.atom_types.len()
    }

    /// Undirected degree of every node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.atom_types.len()];
        for &(u, v, _) in &self.bonds {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.atom_types.len();
        if n == 0 {
            return Err("graph has no atoms".into());
        }
        if !self.target.is_finite() {
            return Err("target is not finite".into());
        }
        let mut seen = HashSet::new();
        for &(u, v, _) in &self.bonds {
            if u >= n || v >= n {
                return Err(format!("bond endpoint out of range ({u},{v}) for {n} atoms"));
            }
            if u == v {
                return Err(format!("self-loop on atom {u}"));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(format!("duplicate bond between {} and {}", key.0, key.1));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawGraph {
    atoms: Vec<i64>,
    bonds: Vec<(i64, i64, i64)>,
    y: f64,
}

fn graph_from_raw(raw: RawGraph) -> std::result::Result<MolecularGraph, String> {
    let mut atom_types = Vec::with_capacity(raw.atoms.len());
    for a in raw.atoms {
        if a < 0 {
            return Err(format!("negative atom type {a}"));
        }
        atom_types.push(a as usize);
    }
    let mut bonds = Vec::with_capacity(raw.bonds.len());
    for (u, v, t) in raw.bonds {
        if u < 0 || v < 0 {
            return Err(format!("negative bond endpoint ({u},{v})"));
        }
        if t < 0 {
            return Err(format!("negative bond type {t}"));
        }
        bonds.push((u as usize, v as usize, t as usize));
    }
    let graph = MolecularGraph {
        atom_types,
        bonds,
        target: raw.y,
    };
    graph.validate()?;
    Ok(graph)
}

/// Parse one graph per line; any malformed line fails the whole load with
/// its 1-based line number.
pub fn load_jsonl(path: &Path) -> Result<Vec<MolecularGraph>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut graphs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawGraph = serde_json::from_str(&line)
            .map_err(|e| Error::data(line_no, e.to_string()))?;
        let graph = graph_from_raw(raw).map_err(|reason| Error::data(line_no, reason))?;
        graphs.push(graph);
    }
    Ok(graphs)
}

/// Canonical serialization: `load_jsonl(write_jsonl(g)) == g`, byte-stable
/// across runs.
pub fn write_jsonl(path: &Path, graphs: &[MolecularGraph]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for g in graphs {
        let line = serde_json::to_string(g).map_err(|e| Error::contract(e.to_string()))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_a_simple_graph() {
        let f = write_lines(&[r#"{"atoms":[0,1],"bonds":[[0,1,0]],"y":-1.5}"#]);
        let graphs = load_jsonl(f.path()).unwrap();
        assert_eq!(graphs.len(), 1);
        assert_eq!(graphs[0].atom_types, vec![0, 1]);
        assert_eq!(graphs[0].bonds, vec![(0, 1, 0)]);
        assert_eq!(graphs[0].target, -1.5);
    }

    #[test]
    fn rejects_out_of_range_endpoint_with_line_number() {
        let f = write_lines(&[
            r#"{"atoms":[0,1],"bonds":[[0,1,0]],"y":0.0}"#,
            r#"{"atoms":[0,1],"bonds":[[0,5,0]],"y":0.0}"#,
        ]);
        let err = load_jsonl(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("out of range"), "{err}");
    }

    #[test]
    fn rejects_missing_key_self_loop_and_duplicate_bond() {
        let missing = write_lines(&[r#"{"bonds":[],"y":0.0}"#]);
        let err = load_jsonl(missing.path()).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("atoms"), "{err}");

        let self_loop = write_lines(&[r#"{"atoms":[0,1],"bonds":[[1,1,0]],"y":0.0}"#]);
        let err = load_jsonl(self_loop.path()).unwrap_err().to_string();
        assert!(err.contains("self-loop"), "{err}");

        let dup = write_lines(&[r#"{"atoms":[0,1],"bonds":[[0,1,0],[1,0,2]],"y":0.0}"#]);
        let err = load_jsonl(dup.path()).unwrap_err().to_string();
        assert!(err.contains("duplicate bond"), "{err}");
    }

    #[test]
    fn round_trip_preserves_graphs_exactly() {
        let graphs = vec![
            MolecularGraph {
                atom_types: vec![3, 1, 4],
                bonds: vec![(0, 1, 2), (1, 2, 0)],
                target: -0.12345678901234567,
            },
            MolecularGraph {
                atom_types: vec![9],
                bonds: vec![],
                target: 2.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        write_jsonl(&path, &graphs).unwrap();
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back, graphs);
    }
}
