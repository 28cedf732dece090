//! Stochastic block model graphs with class-dependent binary features.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GuapError, Result};
use crate::graph::{CsrAdjacency, Graph, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmConfig {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Probability that a node has one of its class's signature features.
    pub p_signal: f64,
    /// Probability of every other feature.
    pub p_noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            blocks: 3,
            nodes_per_block: 100,
            p_in: 0.033,
            p_out: 0.0035,
            feature_dim: 30,
            p_signal: 0.3,
            p_noise: 0.05,
            train_per_class: 20,
            test_per_class: 50,
            seed: 0,
        }
    }
}

/// Samples a graph. Node `v` belongs to block `v / nodes_per_block`; the
/// feature dimensions are split evenly into per-class signature groups.
pub fn sbm(cfg: &SbmConfig) -> Result<Graph> {
    if cfg.blocks == 0 || cfg.nodes_per_block == 0 {
        return Err(GuapError::EmptyGraph);
    }
    if cfg.train_per_class + cfg.test_per_class > cfg.nodes_per_block {
        return Err(GuapError::Config(format!(
            "{} train + {} test nodes per class exceed block size {}",
            cfg.train_per_class, cfg.test_per_class, cfg.nodes_per_block
        )));
    }
    for (name, p) in [
        ("p_in", cfg.p_in),
        ("p_out", cfg.p_out),
        ("p_signal", cfg.p_signal),
        ("p_noise", cfg.p_noise),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(GuapError::hyper(name, "must be a probability"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.blocks * cfg.nodes_per_block;
    let block = |v: usize| v / cfg.nodes_per_block;

    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if block(a) == block(b) { cfg.p_in } else { cfg.p_out };
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    let adjacency = CsrAdjacency::from_edges(n, &edges)?;

    let group = (cfg.feature_dim / cfg.blocks).max(1);
    let features = Array2::from_shape_fn((n, cfg.feature_dim), |(v, f)| {
        let signature = f / group == block(v);
        let p = if signature { cfg.p_signal } else { cfg.p_noise };
        if rng.random_bool(p) {
            1.0
        } else {
            0.0
        }
    });

    let labels: Vec<usize> = (0..n).map(block).collect();
    let mut split = vec![Split::Other; n];
    for c in 0..cfg.blocks {
        let mut members: Vec<usize> = (c * cfg.nodes_per_block..(c + 1) * cfg.nodes_per_block).collect();
        members.shuffle(&mut rng);
        for &v in &members[..cfg.train_per_class] {
            split[v] = Split::Train;
        }
        for &v in &members[cfg.train_per_class..cfg.train_per_class + cfg.test_per_class] {
            split[v] = Split::Test;
        }
    }
    Graph::new(adjacency, features, labels, cfg.blocks, split)
}
