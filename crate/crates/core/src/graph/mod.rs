//! Graph data model and the patched block adjacency the attack operates on.
//!
//! The patched adjacency is the block matrix
//!
//! ```text
//! [ A   C ]
//! [ Cᵀ  B ]
//! ```
//!
//! where `A` is the immutable sparse adjacency of the original graph, `C`
//! (n×m) connects original nodes to patch nodes and `B` (m×m) connects patch
//! nodes among themselves.

mod csr;
mod lcc;
mod normalize;
mod patched;

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use csr::CsrAdjacency;
pub use lcc::{largest_component_nodes, largest_connected_component};
pub use normalize::NormalizedAdjacency;
pub use patched::{AttackMask, BorderBlocks, PatchedAdjacency};

use crate::error::{GuapError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Other,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Other => "other",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "other" => Ok(Split::Other),
            other => Err(format!("unknown split tag `{other}`")),
        }
    }
}

/// An undirected, unweighted attributed graph with node labels and a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Arc<CsrAdjacency>,
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Vec<Split>,
}

impl Graph {
    pub fn new(
        adjacency: CsrAdjacency,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = adjacency.n();
        if features.nrows() != n || labels.len() != n || split.len() != n {
            return Err(GuapError::Dimension(format!(
                "adjacency has {n} nodes but features/labels/split have {}/{}/{} rows",
                features.nrows(),
                labels.len(),
                split.len()
            )));
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(GuapError::InvalidGraph(format!(
                "node {node} has label {label} outside [0, {num_classes})"
            )));
        }
        if !adjacency.is_symmetric() {
            return Err(GuapError::InvalidGraph("adjacency is not symmetric".into()));
        }
        Ok(Self {
            adjacency: Arc::new(adjacency),
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Arc<CsrAdjacency> {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn nodes_in(&self, which: Split) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        self.nodes_in(Split::Train)
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        self.nodes_in(Split::Test)
    }

    /// The patched adjacency with `m` patch nodes and no patch edges.
    pub fn empty_patch(&self, m: usize) -> PatchedAdjacency {
        PatchedAdjacency::empty(Arc::clone(&self.adjacency), m)
    }

    /// Replaces the feature matrix, keeping everything else.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.n() {
            return Err(GuapError::Dimension(format!(
                "expected {} feature rows, got {}",
                self.n(),
                features.nrows()
            )));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    /// Subgraph induced by `keep` (sorted, unique), relabelled in that order.
    pub fn induced(&self, keep: &[usize]) -> Result<Self> {
        if keep.windows(2).any(|w| w[0] >= w[1]) || keep.last().is_some_and(|&k| k >= self.n()) {
            return Err(GuapError::InvalidGraph("induced node set must be sorted, unique and in range".into()));
        }
        Graph::new(
            self.adjacency.induced(keep),
            self.features.select(ndarray::Axis(0), keep),
            keep.iter().map(|&i| self.labels[i]).collect(),
            self.num_classes,
            keep.iter().map(|&i| self.split[i]).collect(),
        )
    }

    /// Same graph with a different split.
    pub fn with_split(&self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.n() {
            return Err(GuapError::Dimension("split length differs from n".into()));
        }
        Ok(Self {
            split,
            ..self.clone()
        })
    }
}
