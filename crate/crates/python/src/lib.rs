//! Python bindings: graphs and splits, the attentive-pooling model, training,
//! and the evaluation metrics.

use ndarray::Array2;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gap_core::checkpoint::Checkpoint;
use gap_core::graph::{EdgeSplit, Graph};
use gap_core::model::ModelParams;
use gap_core::neighborhood::NeighborhoodSeq;
use gap_core::rng::seeded;
use gap_core::trainer::{GradCheckConfig, OptimizerKind, TrainConfig};
use gap_core::GapError;

fn py_err(e: GapError) -> PyErr {
    match e {
        GapError::Argument(_) | GapError::Parse { .. } | GapError::NoCandidate(_) => PyValueError::new_err(e.to_string()),
        GapError::Numeric { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn matrix(values: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let nrows = values.len();
    let ncols = values.first().map_or(0, Vec::len);
    if values.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what}: rows have different lengths")));
    }
    Array2::from_shape_vec((nrows, ncols), values.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

/// A node-indexed graph; undirected graphs store both orientations of every edge.
#[pyclass(name = "Graph", module = "gapembed", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PyGraph {
    inner: Graph,
}

#[pymethods]
impl PyGraph {
    /// Parses "u v" lines; `#` starts a comment, self-loops and duplicates are dropped.
    #[staticmethod]
    #[pyo3(signature = (text, directed = false))]
    fn from_edge_list(text: &str, directed: bool) -> PyResult<Self> {
        Ok(PyGraph {
            inner: gap_core::graph::parse_edge_list(text, directed).map_err(py_err)?,
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    /// Edge count, with each undirected edge counted once.
    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn directed(&self) -> bool {
        self.inner.is_directed()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn has_edge(&self, u: usize, v: usize) -> bool {
        self.inner.has_edge(u, v)
    }

    fn out_neighbors(&self, u: usize) -> PyResult<Vec<usize>> {
        self.check(u)?;
        Ok(self.inner.out_neighbors(u).to_vec())
    }

    fn label(&self, u: usize) -> PyResult<String> {
        self.check(u)?;
        Ok(self.inner.id_map().label(u).to_string())
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.inner.id_map().get(label)
    }

    fn serialize(&self) -> String {
        self.inner.serialize()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(num_nodes={}, num_edges={}, directed={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            if self.inner.is_directed() { "True" } else { "False" }
        )
    }
}

impl PyGraph {
    fn check(&self, u: usize) -> PyResult<()> {
        if u < self.inner.num_nodes() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("node {u} out of range")))
        }
    }
}

/// Train / validation / test partition of a graph's edges.
#[pyclass(name = "EdgeSplit", module = "gapembed", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PySplit {
    inner: EdgeSplit,
}

#[pymethods]
impl PySplit {
    #[getter]
    fn train_edges(&self) -> Vec<(usize, usize)> {
        self.inner.train_edges.clone()
    }

    #[getter]
    fn valid_edges(&self) -> Vec<(usize, usize)> {
        self.inner.valid_edges.clone()
    }

    #[getter]
    fn test_edges(&self) -> Vec<(usize, usize)> {
        self.inner.test_edges.clone()
    }

    #[getter]
    fn train_graph(&self) -> PyGraph {
        PyGraph {
            inner: self.inner.train_graph.clone(),
        }
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

#[pyfunction]
#[pyo3(signature = (graph, ratio, valid_fraction = 0.05, seed = 1))]
fn split_edges(graph: &PyGraph, ratio: f64, valid_fraction: f64, seed: u64) -> PyResult<PySplit> {
    Ok(PySplit {
        inner: gap_core::graph::split_edges(&graph.inner, ratio, valid_fraction, seed).map_err(py_err)?,
    })
}

/// Node embedding table (with a zero PAD row at index `num_nodes`) and the `dim x dim` alignment matrix.
#[pyclass(name = "Model", module = "gapembed", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (num_nodes, dim, seed = 1))]
    fn new(num_nodes: usize, dim: usize, seed: u64) -> PyResult<Self> {
        Ok(PyModel {
            inner: ModelParams::init(num_nodes, dim, seed).map_err(py_err)?,
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embeddings(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.embeddings)
    }

    fn attention(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.attn)
    }

    fn set_embeddings(&mut self, values: Vec<Vec<f64>>) -> PyResult<()> {
        let m = matrix(values, "embeddings")?;
        if m.dim() != self.inner.embeddings.dim() {
            return Err(PyValueError::new_err(format!("expected shape {:?}", self.inner.embeddings.dim())));
        }
        let pad = self.inner.pad();
        if m.row(pad).iter().any(|&x| x != 0.0) {
            return Err(PyValueError::new_err("the PAD row must stay zero"));
        }
        self.inner.embeddings = m;
        Ok(())
    }

    fn set_attention(&mut self, values: Vec<Vec<f64>>) -> PyResult<()> {
        let m = matrix(values, "attention")?;
        if m.dim() != self.inner.attn.dim() {
            return Err(PyValueError::new_err(format!("expected shape {:?}", self.inner.attn.dim())));
        }
        self.inner.attn = m;
        Ok(())
    }

    /// Forward pass for explicit neighbor lists padded to `length`; returns
    /// attention weights (over valid positions) and both representations.
    fn forward<'py>(&self, py: Python<'py>, src: Vec<usize>, tgt: Vec<usize>, length: usize) -> PyResult<Bound<'py, PyDict>> {
        let pad = self.inner.pad();
        let seq_s = NeighborhoodSeq::from_ids(usize::MAX, &src, length, pad).map_err(py_err)?;
        let seq_t = NeighborhoodSeq::from_ids(usize::MAX, &tgt, length, pad).map_err(py_err)?;
        let st = gap_core::model::forward(&self.inner, &seq_s, &seq_t, 1.0, &mut seeded(0), false).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("alignment", rows(&st.align))?;
        out.set_item("attn_s", st.attn_s.to_vec())?;
        out.set_item("attn_t", st.attn_t.to_vec())?;
        out.set_item("r_s", st.r_s.to_vec())?;
        out.set_item("r_t", st.r_t.to_vec())?;
        out.set_item("score", st.r_s.dot(&st.r_t))?;
        Ok(out)
    }

    /// Context-sensitive representations of `u` and `v` built from `graph` neighborhoods.
    #[pyo3(signature = (graph, u, v, neighborhood, seed = 1))]
    fn pair_embed(&self, graph: &PyGraph, u: usize, v: usize, neighborhood: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (a, b) = gap_core::model::pair_embed(&self.inner, &graph.inner, u, v, neighborhood, &mut seeded(seed)).map_err(py_err)?;
        Ok((a.to_vec(), b.to_vec()))
    }

    /// Mean representation of `u` over its incident edges in `graph`.
    #[pyo3(signature = (graph, u, neighborhood, seed = 1))]
    fn static_embedding(&self, graph: &PyGraph, u: usize, neighborhood: usize, seed: u64) -> PyResult<Vec<f64>> {
        Ok(gap_core::model::static_embedding(&self.inner, &graph.inner, u, neighborhood, &mut seeded(seed))
            .map_err(py_err)?
            .to_vec())
    }

    /// Checkpoint text, loadable by `Model.load` and the command-line tool.
    fn save(&self, neighborhood: usize) -> String {
        Checkpoint::Gap {
            params: self.inner.clone(),
            neighborhood,
        }
        .to_text()
    }

    #[staticmethod]
    fn load(text: &str) -> PyResult<(Self, usize)> {
        match Checkpoint::from_text(text).map_err(py_err)? {
            Checkpoint::Gap { params, neighborhood } => Ok((PyModel { inner: params }, neighborhood)),
            Checkpoint::Mlp { .. } => Err(PyValueError::new_err("checkpoint holds the feed-forward variant")),
        }
    }

    fn __repr__(&self) -> String {
        format!("Model(num_nodes={}, dim={})", self.inner.num_nodes(), self.inner.dim())
    }
}

type TrainResult = (PyModel, Vec<(usize, f64, f64)>, Option<usize>);

/// Trains on `split`; returns the best-validation model, the per-epoch
/// history `(epoch, mean_loss, valid_auc)` and the best epoch.
/// `dropout` is a drop probability.
#[pyfunction]
#[pyo3(signature = (
    split, neighborhood = 100, dim = 200, dropout = 0.5, lr = 1e-4, batch_size = 64,
    max_epochs = 200, patience = 10, seed = 1, optimizer = "adam"
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    split: &PySplit,
    neighborhood: usize,
    dim: usize,
    dropout: f64,
    lr: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    seed: u64,
    optimizer: &str,
) -> PyResult<TrainResult> {
    let cfg = TrainConfig {
        neighborhood,
        dim,
        dropout_keep: gap_core::config::keep_from_dropout(dropout).map_err(py_err)?,
        learning_rate: lr,
        batch_size,
        max_epochs,
        patience,
        seed,
        optimizer: optimizer.parse::<OptimizerKind>().map_err(py_err)?,
    };
    let split = split.inner.clone();
    let out = py.detach(move || gap_core::trainer::train(&split, &cfg)).map_err(py_err)?;
    let history = out.history.iter().map(|r| (r.epoch, r.mean_loss, r.valid_auc)).collect();
    Ok((PyModel { inner: out.params }, history, out.best_epoch))
}

/// Test-edge AUC against an equal number of sampled non-edges.
#[pyfunction]
#[pyo3(signature = (model, split, neighborhood, seed = 1))]
fn link_prediction_auc(py: Python<'_>, model: &PyModel, split: &PySplit, neighborhood: usize, seed: u64) -> PyResult<f64> {
    let (params, split) = (model.inner.clone(), split.inner.clone());
    let lp = py
        .detach(move || gap_core::eval::link_prediction(&params, &split, neighborhood, seed))
        .map_err(py_err)?;
    Ok(lp.auc)
}

#[pyfunction]
fn score(r_s: Vec<f64>, r_t: Vec<f64>) -> PyResult<f64> {
    gap_core::model::score(&r_s, &r_t).map_err(py_err)
}

#[pyfunction]
fn auc(pos: Vec<f64>, neg: Vec<f64>) -> PyResult<f64> {
    gap_core::metrics::auc(&pos, &neg).map_err(py_err)
}

#[pyfunction]
fn nmi(y: Vec<usize>, y_hat: Vec<usize>) -> PyResult<f64> {
    gap_core::metrics::nmi(&y, &y_hat).map_err(py_err)
}

#[pyfunction]
fn ami(y: Vec<usize>, y_hat: Vec<usize>) -> PyResult<f64> {
    gap_core::metrics::ami(&y, &y_hat).map_err(py_err)
}

/// Cluster labels for the rows of `x`.
#[pyfunction]
#[pyo3(signature = (x, k, seed = 1))]
fn spectral_clustering(x: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let x = matrix(x, "x")?;
    Ok(gap_core::cluster::spectral_clustering(&x, k, seed).map_err(py_err)?.labels)
}

/// Largest relative error between analytic and finite-difference gradients on a random tiny instance.
#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn grad_check(seed: u64) -> PyResult<f64> {
    Ok(gap_core::trainer::grad_check(&GradCheckConfig::default(), seed)
        .map_err(py_err)?
        .max_rel_error)
}

#[pymodule]
fn gapembed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PySplit>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(split_edges, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(link_prediction_auc, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(ami, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_clustering, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    Ok(())
}
