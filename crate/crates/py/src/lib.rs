//! Python bindings: graphs, training configuration, pretraining, probing,
//! filter utilities and the concentration check.
//!
//! Matrices cross the boundary as lists of row lists.

use std::path::PathBuf;

use loha::experiment::{self, Variant};
use loha::graph::{generate_sbm, load_geom_gcn, load_graph, SbmSpec};
use loha::signals::{dirichlet_energy, Composition};
use loha::spectral::{filter_response as response, gamma_values, interp_weights_values, FilterParams, View};
use loha::trainer::{self, ProbeConfig};
use loha::{LohaError, Matrix};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: LohaError) -> PyErr {
    match e {
        LohaError::Numeric { .. } => PyRuntimeError::new_err(e.to_string()),
        LohaError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(py_err)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Undirected graph with node features and optional labels.
#[pyclass(name = "Graph", module = "pyloha", skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: loha::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (edges, features, labels=None))]
    fn new(edges: Vec<(usize, usize)>, features: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> PyResult<Self> {
        let (inner, _) = loha::Graph::from_edges(&edges, to_matrix(features)?, labels).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    /// Balanced stochastic block model with one-hot-plus-noise features.
    #[staticmethod]
    #[pyo3(signature = (nodes, classes, p_in, p_out, feature_noise=1.0, seed=0))]
    fn sbm(nodes: usize, classes: usize, p_in: f64, p_out: f64, feature_noise: f64, seed: u64) -> PyResult<Self> {
        let spec = SbmSpec {
            nodes,
            classes,
            p_in,
            p_out,
            feature_noise,
            seed,
        };
        Ok(PyGraph {
            inner: generate_sbm(&spec).map_err(py_err)?,
        })
    }

    /// Edge list, headerless feature CSV and optional label file.
    #[staticmethod]
    #[pyo3(signature = (edges, features, labels=None))]
    fn load(edges: PathBuf, features: PathBuf, labels: Option<PathBuf>) -> PyResult<Self> {
        let (inner, _) = load_graph(&edges, &features, labels.as_deref()).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    /// Directory holding `out1_graph_edges.txt` and `out1_node_feature_label.txt`.
    #[staticmethod]
    fn load_geom_gcn(dir: PathBuf) -> PyResult<Self> {
        let (inner, _) = load_geom_gcn(&dir).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels().map(<[usize]>::to_vec)
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.features())
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn edge_homophily(&self) -> PyResult<f64> {
        self.inner.edge_homophily().map_err(py_err)
    }

    /// Dirichlet energy of `x`, or of the node features when omitted.
    #[pyo3(signature = (x=None))]
    fn dirichlet_energy(&self, x: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
        let x = match x {
            Some(rows) => to_matrix(rows)?,
            None => self.inner.features().clone(),
        };
        dirichlet_energy(&self.inner, &x).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Graph(num_nodes={}, num_edges={})", self.inner.num_nodes(), self.inner.num_edges())
    }
}

/// Pretraining hyperparameters. Keyword arguments use the configuration
/// file names (`K`, `hidden`, `tau`, `mu`, `lr`, `epochs`, ...).
#[pyclass(name = "TrainConfig", module = "pyloha", skip_from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    inner: trainer::TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = match kwargs {
            None => trainer::TrainConfig::default(),
            Some(d) => {
                let json = py.import("json")?.call_method1("dumps", (d,))?.extract::<String>()?;
                serde_json::from_str(&json).map_err(|e| PyValueError::new_err(e.to_string()))?
            }
        };
        inner.validate().map_err(py_err)?;
        Ok(PyTrainConfig { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: trainer::TrainConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(py_err)?;
        Ok(PyTrainConfig { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    /// Copy with one of the six model variants applied.
    fn with_variant(&self, variant: &str) -> PyResult<Self> {
        let v: Variant = variant.parse().map_err(py_err)?;
        Ok(PyTrainConfig {
            inner: v.apply(&self.inner),
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.epochs
    }

    fn __repr__(&self) -> String {
        format!("TrainConfig({})", self.to_json())
    }
}

/// Result of [`pretrain`].
#[pyclass(name = "Pretrained", module = "pyloha")]
struct PyPretrained {
    inner: trainer::PretrainOutput,
}

#[pymethods]
impl PyPretrained {
    #[getter]
    fn embeddings(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.embeddings)
    }

    #[getter]
    fn best_epoch(&self) -> Option<usize> {
        self.inner.best_epoch
    }

    /// Per-epoch `(total, low, high, reunion)` losses.
    #[getter]
    fn history(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .history
            .iter()
            .map(|h| (h.total, h.low, h.high, h.reunion))
            .collect()
    }

    #[getter]
    fn low_weights(&self) -> Vec<f64> {
        self.inner.snapshot.low_w.clone()
    }

    #[getter]
    fn high_weights(&self) -> Vec<f64> {
        self.inner.snapshot.high_w.clone()
    }

    /// Filter snapshot as JSON, readable by `loha plot-filters`.
    fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner.snapshot).expect("snapshot serializes")
    }
}

/// Self-supervised pretraining; labels are never read.
#[pyfunction]
fn pretrain(py: Python<'_>, graph: &PyGraph, config: &PyTrainConfig) -> PyResult<PyPretrained> {
    let (g, cfg) = (graph.inner.clone(), config.inner.clone());
    let inner = py.detach(move || trainer::pretrain(&g, &cfg)).map_err(py_err)?;
    Ok(PyPretrained { inner })
}

/// Softmax-regression probe over `splits` random 60/20/20 splits.
/// Returns `(mean, std, accuracies)` in percent.
#[pyfunction]
#[pyo3(signature = (embeddings, labels, splits=10, split_seed=0, epochs=300, lr=0.01, weight_decay=1e-4))]
fn linear_probe(
    embeddings: Vec<Vec<f64>>,
    labels: Vec<usize>,
    splits: usize,
    split_seed: u64,
    epochs: usize,
    lr: f64,
    weight_decay: f64,
) -> PyResult<(f64, f64, Vec<f64>)> {
    let z = to_matrix(embeddings)?;
    let s = trainer::make_splits(labels.len(), split_seed, splits).map_err(py_err)?;
    let cfg = ProbeConfig {
        epochs,
        lr,
        weight_decay,
    };
    let r = trainer::linear_probe(&z, &labels, &s, &cfg).map_err(py_err)?;
    Ok((r.mean, r.std, r.accuracies))
}

/// Pretrain then probe. Returns `(mean, std, runtime_s)`.
#[pyfunction]
#[pyo3(signature = (graph, config, splits=10, split_seed=0))]
fn run(py: Python<'_>, graph: &PyGraph, config: &PyTrainConfig, splits: usize, split_seed: u64) -> PyResult<(f64, f64, f64)> {
    let (g, cfg) = (graph.inner.clone(), config.inner.clone());
    let r = py
        .detach(move || {
            let s = trainer::make_splits(g.num_nodes(), split_seed, splits)?;
            experiment::run(&g, &cfg, &s, &ProbeConfig::default())
        })
        .map_err(py_err)?;
    Ok((r.probe.mean, r.probe.std, r.runtime_s))
}

/// Chebyshev coefficients interpolating `gamma` at the Chebyshev nodes.
#[pyfunction]
fn interp_weights(gamma: Vec<f64>) -> PyResult<Vec<f64>> {
    interp_weights_values(&gamma).map_err(py_err)
}

/// Initial sliding-cosine node values of the `"low"` or `"high"` view.
#[pyfunction]
#[pyo3(signature = (view, order, beta_a=None, beta_b=None, delta=None))]
fn sliding_gamma(
    view: &str,
    order: usize,
    beta_a: Option<f64>,
    beta_b: Option<f64>,
    delta: Option<f64>,
) -> PyResult<Vec<f64>> {
    let v = match view {
        "low" => View::Low,
        "high" => View::High,
        other => return Err(PyValueError::new_err(format!("view must be 'low' or 'high', got {other:?}"))),
    };
    let init = FilterParams::init(v);
    let p = FilterParams {
        beta_a: beta_a.unwrap_or(init.beta_a),
        beta_b: beta_b.unwrap_or(init.beta_b),
        delta: delta.unwrap_or(init.delta),
    };
    gamma_values(&p, v, Default::default(), order).map_err(py_err)
}

/// `g(λ) = Σ_k w_k T_k(1 − 2λ/λ_max)` at each of `lambdas`.
#[pyfunction]
#[pyo3(signature = (weights, lambdas, lambda_max=2.0))]
fn filter_response(weights: Vec<f64>, lambdas: Vec<f64>, lambda_max: f64) -> Vec<f64> {
    response(&weights, &lambdas, lambda_max)
}

/// Monte Carlo tail check on a ring lattice. Returns one
/// `(t, empirical_tail, bound, passes)` tuple per grid point.
#[pyfunction]
#[pyo3(signature = (w_low, w_high, composition="subtract", nodes=32, reach=4, samples=100_000, seed=0))]
fn check_concentration(
    w_low: Vec<f64>,
    w_high: Vec<f64>,
    composition: &str,
    nodes: usize,
    reach: usize,
    samples: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64, bool)>> {
    let comp = match composition {
        "subtract" => Composition::Subtract,
        "add" => Composition::Add,
        other => {
            return Err(PyValueError::new_err(format!(
                "composition must be 'subtract' or 'add', got {other:?}"
            )))
        }
    };
    let g = trainer::ring_lattice(nodes, reach).map_err(py_err)?;
    let cfg = trainer::TheoremConfig {
        samples,
        seed,
        ..Default::default()
    };
    let r = trainer::check_concentration(&g, &w_low, &w_high, comp, &cfg).map_err(py_err)?;
    Ok(r.rows.iter().map(|x| (x.t, x.tail, x.bound, x.passes)).collect())
}

#[pymodule]
fn pyloha(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyPretrained>()?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(linear_probe, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(interp_weights, m)?)?;
    m.add_function(wrap_pyfunction!(sliding_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(filter_response, m)?)?;
    m.add_function(wrap_pyfunction!(check_concentration, m)?)?;
    m.add("VARIANTS", Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>())?;
    Ok(())
}
