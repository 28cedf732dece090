//! Universal adversarial patching of graphs for node-classification attacks.
//!
//! A small set of patch nodes and edges is computed once against a trained
//! two-layer GCN. Afterwards any original node is attacked by flipping its
//! connections to the patch, which changes that node's prediction while the
//! predictions of all other nodes stay put.

pub mod attack;
pub mod error;
pub mod eval;
pub mod featgen;
pub mod gcn;
pub mod graph;
pub mod io;
pub mod synth;

pub use error::{GuapError, Result};
