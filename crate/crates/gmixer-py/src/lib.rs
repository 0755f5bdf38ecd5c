//! Python bindings: `import gmixer`.
//!
//! Exposes the graph type, dataset preparation, training, evaluation, the
//! degree scaler, and the gradient checker. Heavy lifting stays in
//! `gmixer-core`; this layer only converts types and maps errors.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use gmixer_core::data::{
    self, compute_degree_stats, load_prepared_dir, pad_batch, prepare_dataset, synth, DeltaMode,
    MolecularGraph, PrepOptions,
};
use gmixer_core::gradcheck::{grad_check, GradCheckOptions};
use gmixer_core::layers::ScalerKind;
use gmixer_core::model::GmnModel;
use gmixer_core::tape::Tape;
use gmixer_core::training::{self, TrainConfig};

fn err_py(e: gmixer_core::Error) -> PyErr {
    match e {
        gmixer_core::Error::Io(io) => PyRuntimeError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_delta_mode(s: &str) -> PyResult<DeltaMode> {
    s.parse().map_err(err_py)
}

/// A molecular graph: integer-typed atoms, undirected typed bonds, one
/// regression target.
#[pyclass(module = "gmixer", from_py_object)]
#[derive(Clone)]
struct Graph {
    inner: MolecularGraph,
}

#[pymethods]
impl Graph {
    #[new]
    fn new(atoms: Vec<usize>, bonds: Vec<(usize, usize, usize)>, y: f64) -> PyResult<Self> {
        let inner = MolecularGraph {
            atom_types: atoms,
            bonds,
            target: y,
        };
        inner.validate().map_err(PyValueError::new_err)?;
        Ok(Graph { inner })
    }

    #[getter]
    fn atoms(&self) -> Vec<usize> {
        self.inner.atom_types.clone()
    }

    #[getter]
    fn bonds(&self) -> Vec<(usize, usize, usize)> {
        self.inner.bonds.clone()
    }

    #[getter]
    fn y(&self) -> f64 {
        self.inner.target
    }

    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(atoms={}, bonds={}, y={:.4})",
            self.inner.node_count(),
            self.inner.bonds.len(),
            self.inner.target
        )
    }
}

/// A trained model loaded from a checkpoint (or produced by `train`).
#[pyclass(module = "gmixer")]
struct Model {
    inner: GmnModel<f64>,
}

#[pymethods]
impl Model {
    /// Load a checkpoint written by training.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: GmnModel::load(&path).map_err(err_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err_py)
    }

    /// One prediction per graph.
    fn predict(&self, graphs: Vec<Graph>) -> PyResult<Vec<f64>> {
        let raw: Vec<MolecularGraph> = graphs.into_iter().map(|g| g.inner).collect();
        let mut out = Vec::with_capacity(raw.len());
        for chunk in raw.chunks(64) {
            let batch = pad_batch(chunk, self.inner.hyper.n_max).map_err(err_py)?;
            out.extend(self.inner.predict(&batch).map_err(err_py)?);
        }
        Ok(out)
    }

    /// Mean absolute error over the graphs' targets.
    fn evaluate(&self, graphs: Vec<Graph>) -> PyResult<f64> {
        let raw: Vec<MolecularGraph> = graphs.into_iter().map(|g| g.inner).collect();
        training::evaluate(&self.inner, &raw).map_err(err_py)
    }

    /// Architecture hyperparameters as a dict.
    fn hyper<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let h = &self.inner.hyper;
        let d = PyDict::new(py);
        d.set_item("k_layers", h.k_layers)?;
        d.set_item("d", h.d)?;
        d.set_item("d_e", h.d_e)?;
        d.set_item("n_max", h.n_max)?;
        d.set_item("vocab_atoms", h.vocab_atoms)?;
        d.set_item("vocab_bonds", h.vocab_bonds)?;
        d.set_item("token_hidden", h.token_hidden)?;
        d.set_item("channel_hidden", h.channel_hidden)?;
        d.set_item("readout_hidden", h.readout_hidden)?;
        d.set_item("delta", h.delta)?;
        d.set_item("delta_mode", h.delta_mode.to_string())?;
        d.set_item("activation", h.activation.to_string())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let h = &self.inner.hyper;
        format!(
            "Model(k_layers={}, d={}, n_max={}, params={})",
            h.k_layers,
            h.d,
            h.n_max,
            self.inner.registry.total_values()
        )
    }
}

/// Deterministic ZINC-style synthetic molecules (9-37 atoms each).
#[pyfunction]
#[pyo3(signature = (count, seed = 7))]
fn generate_dataset(count: usize, seed: u64) -> Vec<Graph> {
    synth::generate_zinc_like(count, seed)
        .into_iter()
        .map(|inner| Graph { inner })
        .collect()
}

#[pyfunction]
fn load_jsonl(path: PathBuf) -> PyResult<Vec<Graph>> {
    Ok(data::load_jsonl(&path)
        .map_err(err_py)?
        .into_iter()
        .map(|inner| Graph { inner })
        .collect())
}

#[pyfunction]
fn write_jsonl(path: PathBuf, graphs: Vec<Graph>) -> PyResult<()> {
    let raw: Vec<MolecularGraph> = graphs.into_iter().map(|g| g.inner).collect();
    data::write_jsonl(&path, &raw).map_err(err_py)
}

/// Training-set degree statistics: `{"delta", "max_degree", "computed_over"}`.
#[pyfunction]
#[pyo3(signature = (graphs, mode = "log_mean"))]
fn degree_stats<'py>(
    py: Python<'py>,
    graphs: Vec<Graph>,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let raw: Vec<MolecularGraph> = graphs.into_iter().map(|g| g.inner).collect();
    let stats = compute_degree_stats(&raw, parse_delta_mode(mode)?).map_err(err_py)?;
    let d = PyDict::new(py);
    d.set_item("delta", stats.delta)?;
    d.set_item("max_degree", stats.max_degree)?;
    d.set_item("computed_over", stats.computed_over)?;
    Ok(d)
}

/// The degree scaler `(log(d+1)/delta)^alpha` with `alpha` in {-1, 0, +1}.
#[pyfunction]
fn degree_scaler(d: usize, alpha: i8, delta: f64) -> PyResult<f64> {
    let kind = match alpha {
        0 => ScalerKind::Identity,
        1 => ScalerKind::Amplify,
        -1 => ScalerKind::Attenuate,
        other => {
            return Err(PyValueError::new_err(format!(
                "alpha must be -1, 0, or +1, got {other}"
            )));
        }
    };
    gmixer_core::layers::degree_scaler(d, kind, delta).map_err(err_py)
}

/// Validate, split, and write a dataset directory plus its stats sidecar.
#[pyfunction]
#[pyo3(signature = (input, out_dir, fractions = (0.8, 0.1, 0.1), seed = 7, delta_mode = "log_mean", n_max = 37))]
fn prep<'py>(
    py: Python<'py>,
    input: PathBuf,
    out_dir: PathBuf,
    fractions: (f64, f64, f64),
    seed: u64,
    delta_mode: &str,
    n_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = PrepOptions {
        fractions: [fractions.0, fractions.1, fractions.2],
        seed,
        delta_mode: parse_delta_mode(delta_mode)?,
        n_max,
    };
    let sidecar = prepare_dataset(&input, &out_dir, &opts).map_err(err_py)?;
    let d = PyDict::new(py);
    d.set_item("delta", sidecar.delta)?;
    d.set_item("counts", sidecar.counts.to_vec())?;
    d.set_item("vocab_atoms", sidecar.vocab_atoms)?;
    d.set_item("vocab_bonds", sidecar.vocab_bonds)?;
    d.set_item("n_max_observed", sidecar.n_max_observed)?;
    d.set_item("checksum", sidecar.checksum)?;
    Ok(d)
}

fn apply_overrides(cfg: &mut TrainConfig, options: Option<&Bound<'_, PyDict>>) -> PyResult<()> {
    if let Some(dict) = options {
        for (key, value) in dict.iter() {
            let key: String = key.extract()?;
            gmixer_core::config::apply_kv(cfg, &key, &value.to_string()).map_err(err_py)?;
        }
    }
    Ok(())
}

/// Train on a prepared data directory; returns the summary dict. `options`
/// accepts any training-config key (`lr`, `max_epochs`, `d`, ...).
#[pyfunction]
#[pyo3(signature = (data_dir, run_dir, options = None))]
fn train<'py>(
    py: Python<'py>,
    data_dir: PathBuf,
    run_dir: PathBuf,
    options: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = TrainConfig::default();
    apply_overrides(&mut cfg, options)?;
    cfg.validate().map_err(err_py)?;
    let (split, sidecar) = load_prepared_dir(&data_dir).map_err(err_py)?;
    if sidecar.delta_mode != cfg.delta_mode {
        return Err(PyValueError::new_err(format!(
            "config delta_mode {} does not match the sidecar's {}",
            cfg.delta_mode, sidecar.delta_mode
        )));
    }
    // Python always trains at 64-bit; use the CLI for 32-bit runs.
    let outcome =
        training::train::<f64>(&cfg, &split, sidecar.delta, Some(run_dir.as_path()))
            .map_err(err_py)?;
    let train_mae = training::evaluate(&outcome.model, &split.train).map_err(err_py)?;

    let d = PyDict::new(py);
    d.set_item("best_epoch", outcome.best_epoch)?;
    d.set_item("best_val_mae", outcome.best_val_mae)?;
    d.set_item("best_test_mae", outcome.best_test_mae)?;
    d.set_item("train_mae", train_mae)?;
    d.set_item("epochs_run", outcome.history.len())?;
    let losses: Vec<f64> = outcome.history.iter().map(|m| m.train_loss).collect();
    d.set_item("train_loss_history", PyList::new(py, losses)?)?;
    Ok(d)
}

/// Evaluate a checkpoint on a JSONL split file; returns the MAE.
#[pyfunction]
fn evaluate_checkpoint(checkpoint: PathBuf, split_file: PathBuf) -> PyResult<f64> {
    let model = GmnModel::<f64>::load(&checkpoint).map_err(err_py)?;
    let graphs = data::load_jsonl(&split_file).map_err(err_py)?;
    training::evaluate(&model, &graphs).map_err(err_py)
}

/// Compare analytic gradients with central finite differences on a random
/// small graph; returns `{"max_relative_error", "probes", "groups"}`.
#[pyfunction]
#[pyo3(signature = (seed = 1, nodes = 5, probes = 200, h = 1e-5, k_layers = 2, d = 16))]
fn check_gradients<'py>(
    py: Python<'py>,
    seed: u64,
    nodes: usize,
    probes: usize,
    h: f64,
    k_layers: usize,
    d: usize,
) -> PyResult<Bound<'py, PyDict>> {
    if nodes == 0 {
        return Err(PyValueError::new_err("nodes must be at least 1"));
    }
    let graph = synth::probe_graph(nodes, seed);
    let n_max = nodes + 1;
    let delta = if graph.bonds.is_empty() {
        1.0
    } else {
        compute_degree_stats(std::slice::from_ref(&graph), DeltaMode::LogMean)
            .map_err(err_py)?
            .delta
    };
    let cfg = TrainConfig {
        k_layers,
        d,
        d_e: d.div_ceil(2),
        n_max,
        token_hidden: d.div_ceil(2),
        channel_hidden: d,
        readout_hidden: d,
        ..TrainConfig::default()
    };
    let model = GmnModel::<f64>::new(cfg.hyper(6, 4, delta), seed).map_err(err_py)?;
    let batch = pad_batch(std::slice::from_ref(&graph), n_max).map_err(err_py)?;
    let mut registry = model.registry.clone();
    let options = GradCheckOptions {
        probes,
        step: h,
        seed,
        corrupt_backward: false,
    };
    let report = grad_check(
        |reg| {
            let mut tape = Tape::new();
            let (_, loss) = model.forward_with_loss_on(reg, &mut tape, &batch)?;
            Ok((tape, loss))
        },
        &mut registry,
        &options,
    )
    .map_err(err_py)?;

    let out = PyDict::new(py);
    out.set_item("max_relative_error", report.max_relative_error)?;
    out.set_item("probes", report.probes)?;
    let groups = PyDict::new(py);
    for g in &report.groups {
        groups.set_item(&g.group, g.max_relative_error)?;
    }
    out.set_item("groups", groups)?;
    Ok(out)
}

#[pymodule]
fn gmixer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(write_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(degree_stats, m)?)?;
    m.add_function(wrap_pyfunction!(degree_scaler, m)?)?;
    m.add_function(wrap_pyfunction!(prep, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(check_gradients, m)?)?;
    Ok(())
}
