//! Python bindings: graphs, victim training, patch generation and evaluation.

use std::path::PathBuf;

use guap_core::attack::{self, AttackHyper, PatchArtifact};
use guap_core::eval::{baseline_no_edges, evaluate_patch, EvalReport};
use guap_core::featgen;
use guap_core::gcn::{accuracy, train, BoundModel, GcnParams, TrainConfig};
use guap_core::graph::{CsrAdjacency, Split};
use guap_core::io::{self, DatasetDescriptor, SavedModel};
use guap_core::synth::{sbm, SbmConfig};
use guap_core::GuapError;
use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: GuapError) -> PyErr {
    match e {
        GuapError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>, cols: usize) -> PyResult<Array2<f64>> {
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("expected rows of {cols} values, got {}", r.len())));
    }
    Ok(Array2::from_shape_vec((n, cols), rows.concat()).expect("row lengths checked"))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Attributed graph with labels and a train/test/other split.
#[pyclass(name = "Graph", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: guap_core::graph::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (edges, features, labels, split, num_classes=None))]
    fn new(
        edges: Vec<(usize, usize)>,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        split: Vec<String>,
        num_classes: Option<usize>,
    ) -> PyResult<Self> {
        let n = labels.len();
        let d = features.first().map_or(0, Vec::len);
        let x = matrix(features, d)?;
        let split = split
            .iter()
            .map(|s| s.parse::<Split>().map_err(PyValueError::new_err))
            .collect::<PyResult<Vec<_>>>()?;
        let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |&l| l + 1));
        let adjacency = CsrAdjacency::from_edges(n, &edges).map_err(err)?;
        let inner = guap_core::graph::Graph::new(adjacency, x, labels, k, split).map_err(err)?;
        Ok(Self { inner })
    }

    /// Stochastic block model with class-dependent binary features.
    #[staticmethod]
    #[pyo3(signature = (seed=0, blocks=3, nodes_per_block=100, train_per_class=20, test_per_class=50))]
    fn sbm(seed: u64, blocks: usize, nodes_per_block: usize, train_per_class: usize, test_per_class: usize) -> PyResult<Self> {
        let cfg = SbmConfig {
            seed,
            blocks,
            nodes_per_block,
            train_per_class,
            test_per_class,
            ..Default::default()
        };
        Ok(Self {
            inner: sbm(&cfg).map_err(err)?,
        })
    }

    /// Loads `nodes.tsv`, `edges.tsv` and optional `features.txt` from `root`.
    #[staticmethod]
    #[pyo3(signature = (root, name=None, use_lcc=false))]
    fn load(root: PathBuf, name: Option<String>, use_lcc: bool) -> PyResult<Self> {
        let name = name.unwrap_or_else(|| "dataset".into());
        let desc = DatasetDescriptor::builtin(&name, &root)
            .unwrap_or_else(|| DatasetDescriptor {
                use_lcc,
                ..DatasetDescriptor::new(&name, &root)
            });
        Ok(Self {
            inner: io::load_dataset(&desc).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.adjacency().edge_count()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn train_nodes(&self) -> Vec<usize> {
        self.inner.train_nodes()
    }

    #[getter]
    fn test_nodes(&self) -> Vec<usize> {
        self.inner.test_nodes()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.adjacency().edges().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, edges={}, features={}, classes={})",
            self.n(),
            self.edge_count(),
            self.feature_dim(),
            self.num_classes()
        )
    }
}

/// Trained two-layer GCN victim.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: SavedModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn acc_test(&self) -> f64 {
        self.inner.acc_test
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.inner.params.hidden()
    }

    fn predict(&self, graph: &PyGraph) -> PyResult<Vec<usize>> {
        let g = &graph.inner;
        let model = BoundModel::new(&self.inner.params, g.features().view()).map_err(err)?;
        model.predict(&g.empty_patch(0)).map_err(err)
    }

    fn weights(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (rows(&self.inner.params.w0), rows(&self.inner.params.w1))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_model(&self.inner, path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_model(path).map_err(err)?,
        })
    }
}

/// A computed universal patch.
#[pyclass(name = "Patch", frozen)]
struct PyPatch {
    inner: PatchArtifact,
}

#[pymethods]
impl PyPatch {
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn border(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.border)
    }

    #[getter]
    fn patch_block(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.patch_block)
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.features)
    }

    #[getter]
    fn asr_trace(&self) -> Vec<f64> {
        self.inner.asr_trace.clone()
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    #[getter]
    fn best_asr(&self) -> f64 {
        self.inner.best_asr
    }

    #[getter]
    fn igp_invocations(&self) -> usize {
        self.inner.igp_invocations()
    }

    fn patch_edge_count(&self) -> usize {
        self.inner.patch_edge_count()
    }

    /// Border block after the flip attack on `target`.
    fn flipped_border(&self, graph: &PyGraph, target: usize) -> PyResult<Vec<Vec<f64>>> {
        let adj = self.inner.adjacency(&graph.inner).map_err(err)?;
        Ok(rows(adj.attack_flip(target).map_err(err)?.border()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_patch(&self.inner, path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_patch(path).map_err(err)?,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (graph, epochs=200, hidden=16, learning_rate=0.01, weight_decay=5e-4, seed=0))]
fn train_gcn(
    py: Python<'_>,
    graph: &PyGraph,
    epochs: usize,
    hidden: usize,
    learning_rate: f64,
    weight_decay: f64,
    seed: u64,
) -> PyResult<PyModel> {
    let cfg = TrainConfig {
        hidden,
        learning_rate,
        weight_decay,
        epochs,
        seed,
    };
    let g = &graph.inner;
    let params: GcnParams = py.detach(|| train(g, &cfg)).map_err(err)?;
    let pred = BoundModel::new(&params, g.features().view())
        .and_then(|m| m.predict(&g.empty_patch(0)))
        .map_err(err)?;
    let acc = accuracy(&pred, g.labels(), &g.test_nodes());
    Ok(PyModel {
        inner: SavedModel::new(params, "python", cfg, acc),
    })
}

#[pyfunction]
#[pyo3(signature = (
    graph, model, seed=0, max_epoch=50, max_iter=30, radius=10.0, sample_rate=1.0,
    patch_fraction=0.01, patch_nodes=None
))]
#[allow(clippy::too_many_arguments)]
fn generate_patch(
    py: Python<'_>,
    graph: &PyGraph,
    model: &PyModel,
    seed: u64,
    max_epoch: usize,
    max_iter: usize,
    radius: f64,
    sample_rate: f64,
    patch_fraction: f64,
    patch_nodes: Option<usize>,
) -> PyResult<PyPatch> {
    let hyper = AttackHyper {
        max_epoch,
        max_iter,
        radius,
        sample_rate,
        patch_fraction,
        patch_nodes,
        ..Default::default()
    };
    let inner = py
        .detach(|| attack::guap(&graph.inner, &model.inner.params, &hyper, seed))
        .map_err(err)?;
    Ok(PyPatch { inner })
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", &r.kind)?;
    d.set_item("asr_train", r.asr_train)?;
    d.set_item("asr_test", r.asr_test)?;
    d.set_item("acc_clean", r.acc_clean)?;
    d.set_item("acc_patched", r.acc_patched)?;
    d.set_item("delta_acc", r.delta_acc)?;
    d.set_item("m", r.m)?;
    d.set_item("patch_edges", r.patch_edges)?;
    d.set_item("low_accuracy", r.low_accuracy)?;
    Ok(d)
}

/// ASR on train and test nodes plus clean and patched accuracy.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, patch: &PyPatch, graph: &PyGraph, model: &PyModel) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .detach(|| evaluate_patch(&patch.inner, &graph.inner, &model.inner.params))
        .map_err(err)?;
    report_dict(py, &r)
}

#[pyfunction(name = "baseline_no_edges")]
fn py_baseline_no_edges<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    model: &PyModel,
    m: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = baseline_no_edges(&graph.inner, &model.inner.params, m, seed).map_err(err)?;
    report_dict(py, &r)
}

/// Probability that a sampled Gaussian feature with Bernoulli(p) moments
/// binarizes to one.
#[pyfunction]
fn binarized_one_probability(p: f64) -> PyResult<f64> {
    featgen::binarized_one_probability(p).map_err(err)
}

#[pymodule]
fn guap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPatch>()?;
    m.add_function(wrap_pyfunction!(train_gcn, m)?)?;
    m.add_function(wrap_pyfunction!(generate_patch, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(py_baseline_no_edges, m)?)?;
    m.add_function(wrap_pyfunction!(binarized_one_probability, m)?)?;
    Ok(())
}
