//! Two-layer graph convolutional network: `softmax(Â · relu(Â X W⁰) · W¹)`.
//!
//! Besides forward passes and training this module provides the two
//! adjacency derivatives the attack needs, both exact through the degree
//! normalization:
//!
//! * the Jacobian of one node's output probabilities with respect to its own
//!   (symmetrically coupled) adjacency row, and
//! * the gradient of the masked training loss with respect to every raw
//!   adjacency entry.

mod grad;
mod train;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

pub use grad::{AdjacencyGradient, RowJacobian};
pub use train::{train, train_with_history, TrainConfig, TrainHistory};

use crate::error::{GuapError, Result};
use crate::graph::{NormalizedAdjacency, PatchedAdjacency};

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// d × d′
    pub w0: Array2<f64>,
    /// d′ × K
    pub w1: Array2<f64>,
}

impl GcnParams {
    pub fn new(w0: Array2<f64>, w1: Array2<f64>) -> Result<Self> {
        if w0.ncols() != w1.nrows() {
            return Err(GuapError::Dimension(format!(
                "W0 is {:?} but W1 is {:?}",
                w0.dim(),
                w1.dim()
            )));
        }
        if !w0.iter().chain(w1.iter()).all(|x| x.is_finite()) {
            return Err(GuapError::InvalidGraph("non-finite model weight".into()));
        }
        Ok(Self { w0, w1 })
    }

    /// Glorot-uniform initialization.
    pub fn glorot<R: Rng>(input_dim: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let mut init = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
        };
        let w0 = init(input_dim, hidden);
        let w1 = init(hidden, classes);
        Self { w0, w1 }
    }

    pub fn input_dim(&self) -> usize {
        self.w0.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w0.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w1.ncols()
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `X W⁰`
    pub projected: Array2<f64>,
    /// `Â X W⁰`
    pub pre_hidden: Array2<f64>,
    /// `relu(Â X W⁰)`
    pub hidden: Array2<f64>,
    /// `H W¹`
    pub hidden_out: Array2<f64>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

fn log_softmax_at(row: ndarray::ArrayView1<f64>, class: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    row[class] - lse
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best
}

/// Row-wise argmax of a probability (or logit) matrix.
pub fn predict_labels(z: &Array2<f64>) -> Vec<usize> {
    z.rows().into_iter().map(argmax).collect()
}

/// Training nodes and the labels of all nodes.
#[derive(Debug, Clone, Copy)]
pub struct Supervision<'a> {
    pub nodes: &'a [usize],
    pub labels: &'a [usize],
}

/// A trained model bound to a fixed feature matrix.
///
/// `X W⁰` does not depend on the adjacency, so it is computed once and reused
/// for every forward pass and gradient over changing patch blocks.
#[derive(Debug, Clone)]
pub struct BoundModel<'a> {
    params: &'a GcnParams,
    projected: Array2<f64>,
}

impl<'a> BoundModel<'a> {
    pub fn new(params: &'a GcnParams, x: ArrayView2<f64>) -> Result<Self> {
        if x.ncols() != params.input_dim() {
            return Err(GuapError::Dimension(format!(
                "features have {} columns, model expects {}",
                x.ncols(),
                params.input_dim()
            )));
        }
        Ok(Self {
            params,
            projected: x.dot(&params.w0),
        })
    }

    pub fn params(&self) -> &GcnParams {
        self.params
    }

    pub fn rows(&self) -> usize {
        self.projected.nrows()
    }

    fn check(&self, adj: &PatchedAdjacency) -> Result<()> {
        if adj.total() != self.rows() {
            return Err(GuapError::Dimension(format!(
                "adjacency has {} nodes, features have {} rows",
                adj.total(),
                self.rows()
            )));
        }
        Ok(())
    }

    pub fn activations(&self, adj: &PatchedAdjacency) -> Result<Activations> {
        self.check(adj)?;
        Ok(self.activations_normalized(&NormalizedAdjacency::new(adj)))
    }

    pub(crate) fn activations_normalized(&self, norm: &NormalizedAdjacency) -> Activations {
        let pre_hidden = norm.apply(self.projected.view());
        let hidden = pre_hidden.mapv(|x| x.max(0.0));
        let hidden_out = hidden.dot(&self.params.w1);
        let logits = norm.apply(hidden_out.view());
        let probs = softmax_rows(&logits);
        Activations {
            projected: self.projected.clone(),
            pre_hidden,
            hidden,
            hidden_out,
            logits,
            probs,
        }
    }

    pub fn probs(&self, adj: &PatchedAdjacency) -> Result<Array2<f64>> {
        Ok(self.activations(adj)?.probs)
    }

    pub fn predict(&self, adj: &PatchedAdjacency) -> Result<Vec<usize>> {
        Ok(predict_labels(&self.activations(adj)?.logits))
    }

    /// Predicted class of node `i` only; still needs a full forward pass.
    pub fn predict_node(&self, adj: &PatchedAdjacency, i: usize) -> Result<usize> {
        if i >= adj.total() {
            return Err(GuapError::InvalidTarget { target: i, n: adj.total() });
        }
        Ok(argmax(self.activations(adj)?.logits.row(i)))
    }

    /// Cross-entropy summed over `sup.nodes`, skipping `exclude`.
    pub fn masked_loss(
        &self,
        adj: &PatchedAdjacency,
        sup: Supervision,
        exclude: Option<usize>,
    ) -> Result<f64> {
        let act = self.activations(adj)?;
        Ok(sup
            .nodes
            .iter()
            .filter(|&&j| Some(j) != exclude)
            .map(|&j| -log_softmax_at(act.logits.row(j), sup.labels[j]))
            .sum())
    }

    /// Gradient of [`masked_loss`](Self::masked_loss) with respect to every raw
    /// entry of the patched adjacency, entries treated as independent.
    pub fn loss_gradient(
        &self,
        adj: &PatchedAdjacency,
        sup: Supervision,
        exclude: Option<usize>,
    ) -> Result<AdjacencyGradient> {
        self.check(adj)?;
        let norm = NormalizedAdjacency::new(adj);
        let act = self.activations_normalized(&norm);
        Ok(grad::loss_gradient(&norm, &act, self.params, sup, exclude))
    }

    /// Jacobian of node `i`'s output probabilities with respect to row `i`
    /// (and, coupled, column `i`) of the patched adjacency.
    pub fn output_jacobian_row(&self, adj: &PatchedAdjacency, i: usize) -> Result<RowJacobian> {
        self.check(adj)?;
        let norm = NormalizedAdjacency::new(adj);
        let act = self.activations_normalized(&norm);
        Ok(grad::row_jacobian(&norm, &act, self.params, i))
    }
}

/// `Z = softmax(Â · relu(Â X W⁰) · W¹)` over the patched graph.
pub fn forward(adj: &PatchedAdjacency, x: ArrayView2<f64>, params: &GcnParams) -> Result<Array2<f64>> {
    BoundModel::new(params, x)?.probs(adj)
}

/// Predicted class of node `i`.
pub fn predicted_label(
    adj: &PatchedAdjacency,
    x: ArrayView2<f64>,
    params: &GcnParams,
    i: usize,
) -> Result<usize> {
    let z = forward(adj, x, params)?;
    if i >= z.nrows() {
        return Err(GuapError::InvalidTarget { target: i, n: z.nrows() });
    }
    Ok(argmax(z.row(i)))
}

pub fn masked_loss(
    adj: &PatchedAdjacency,
    x: ArrayView2<f64>,
    params: &GcnParams,
    sup: Supervision,
    exclude: Option<usize>,
) -> Result<f64> {
    BoundModel::new(params, x)?.masked_loss(adj, sup, exclude)
}

pub fn output_jacobian_wrt_adj_row(
    adj: &PatchedAdjacency,
    x: ArrayView2<f64>,
    params: &GcnParams,
    i: usize,
) -> Result<RowJacobian> {
    if i >= adj.total() {
        return Err(GuapError::InvalidTarget { target: i, n: adj.total() });
    }
    BoundModel::new(params, x)?.output_jacobian_row(adj, i)
}

pub fn loss_grad_wrt_patch_blocks(
    adj: &PatchedAdjacency,
    x: ArrayView2<f64>,
    params: &GcnParams,
    sup: Supervision,
    exclude: Option<usize>,
) -> Result<AdjacencyGradient> {
    BoundModel::new(params, x)?.loss_gradient(adj, sup, exclude)
}

/// Fraction of `nodes` whose prediction equals the label.
pub fn accuracy(pred: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes.iter().filter(|&&i| pred[i] == labels[i]).count();
    correct as f64 / nodes.len() as f64
}
