//! Patch optimization: the per-target inner loop and the universal outer loop.

mod igp;

use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use igp::{deepfool_step, igp, IgpResult};

use crate::error::{GuapError, Result};
use crate::featgen::{fit_feature_stats, sample_patch_features, FeatureStats};
use crate::gcn::{BoundModel, GcnParams, Supervision};
use crate::graph::{Graph, PatchedAdjacency};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackHyper {
    pub max_epoch: usize,
    pub max_iter: usize,
    /// L2 radius ξ for every patch node's incident-edge vector.
    pub radius: f64,
    pub overshoot: f64,
    pub step: f64,
    /// Fraction of the training set visited per epoch, in (0, 1].
    pub sample_rate: f64,
    pub binarize_threshold: f64,
    /// Patch size as a fraction of n, used when `patch_nodes` is unset.
    pub patch_fraction: f64,
    pub patch_nodes: Option<usize>,
    /// Clamp border blocks to [0, 1] after each projection.
    pub clip: bool,
    /// Measure the closest-boundary step over the patch entries only.
    pub deepfool_patch_norm: bool,
    /// Return the clipped perturbation `clip01(A' + Δ) − A'` from the inner
    /// loop instead of the raw accumulated `Δ`.
    pub clip_perturbation: bool,
    /// Start each epoch from the binarized matrix of the previous one.
    pub resume_binarized: bool,
}

impl Default for AttackHyper {
    fn default() -> Self {
        Self {
            max_epoch: 50,
            max_iter: 30,
            radius: 10.0,
            overshoot: 0.02,
            step: 10.0,
            sample_rate: 1.0,
            binarize_threshold: 0.5,
            patch_fraction: 0.01,
            patch_nodes: None,
            clip: true,
            clip_perturbation: true,
            deepfool_patch_norm: true,
            resume_binarized: true,
        }
    }
}

impl AttackHyper {
    pub fn validate(&self) -> Result<()> {
        if self.max_epoch == 0 {
            return Err(GuapError::hyper("max_epoch", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(GuapError::hyper("max_iter", "must be positive"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(GuapError::hyper("radius", format!("must be positive, got {}", self.radius)));
        }
        if !(self.overshoot >= 0.0 && self.overshoot.is_finite()) {
            return Err(GuapError::hyper("overshoot", "must be non-negative"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(GuapError::hyper("step", "must be positive"));
        }
        check_rate(self.sample_rate)?;
        if !(0.0..=1.0).contains(&self.binarize_threshold) {
            return Err(GuapError::hyper("binarize_threshold", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.patch_fraction) {
            return Err(GuapError::hyper("patch_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Number of patch nodes for a graph with `n` nodes.
    pub fn patch_count(&self, n: usize) -> Result<usize> {
        if let Some(m) = self.patch_nodes {
            return Ok(m);
        }
        let m = (self.patch_fraction * n as f64).round() as usize;
        if m == 0 && self.patch_fraction > 0.0 {
            return Err(GuapError::Config(format!(
                "patch fraction {} of {n} nodes rounds to zero patch nodes",
                self.patch_fraction
            )));
        }
        Ok(m)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(GuapError::hyper("sample_rate", format!("must lie in (0, 1], got {rate}")));
    }
    Ok(())
}

/// The computed patch plus what is needed to reproduce and audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchArtifact {
    pub n: usize,
    pub m: usize,
    /// Patch-node features, m×d.
    pub features: Array2<f64>,
    /// Binary border block C, n×m.
    pub border: Array2<f64>,
    /// Binary symmetric patch block B, m×m.
    pub patch_block: Array2<f64>,
    pub stats: FeatureStats,
    pub hyper: AttackHyper,
    pub seed: u64,
    /// Training-set ASR after each epoch's binarization.
    pub asr_trace: Vec<f64>,
    pub best_epoch: usize,
    pub best_asr: f64,
    pub igp_per_epoch: Vec<usize>,
    pub targets_per_epoch: Vec<usize>,
    pub degenerate_skips: usize,
    /// Wall-clock time; not part of the reproducible output.
    pub seconds: f64,
}

impl PatchArtifact {
    pub fn adjacency(&self, g: &Graph) -> Result<PatchedAdjacency> {
        if g.n() != self.n {
            return Err(GuapError::Validation(format!(
                "artifact was computed for {} nodes, graph has {}",
                self.n,
                g.n()
            )));
        }
        PatchedAdjacency::from_blocks(
            g.adjacency().clone(),
            self.border.clone(),
            self.patch_block.clone(),
        )
    }

    /// Original features stacked over the patch features.
    pub fn stacked_features(&self, g: &Graph) -> Result<Array2<f64>> {
        stack_features(g.features(), &self.features)
    }

    pub fn igp_invocations(&self) -> usize {
        self.igp_per_epoch.iter().sum()
    }

    pub fn targets_visited(&self) -> usize {
        self.targets_per_epoch.iter().sum()
    }

    pub fn patch_edge_count(&self) -> usize {
        let m = self.m;
        let border = self.border.iter().filter(|&&x| x > 0.5).count();
        let block = (0..m)
            .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
            .filter(|&(p, q)| self.patch_block[[p, q]] > 0.5)
            .count();
        border + block
    }
}

pub fn stack_features(x: &Array2<f64>, patch: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != patch.ncols() {
        return Err(GuapError::Dimension(format!(
            "patch features have {} columns, graph features {}",
            patch.ncols(),
            x.ncols()
        )));
    }
    Ok(concatenate![Axis(0), x.view(), patch.view()])
}

/// Predictions of the victim on the unpatched graph.
pub fn clean_predictions(g: &Graph, params: &GcnParams) -> Result<Vec<usize>> {
    BoundModel::new(params, g.features().view())?.predict(&g.empty_patch(0))
}

/// Per-node attack outcome: does flipping node `i` change its prediction
/// away from `clean[i]`? Nodes are evaluated independently and in parallel.
pub fn attack_outcomes(
    model: &BoundModel,
    adj: &PatchedAdjacency,
    nodes: &[usize],
    clean: &[usize],
) -> Result<Vec<bool>> {
    nodes
        .par_iter()
        .map(|&i| {
            let attacked = adj.attack_flip(i)?;
            Ok(model.predict_node(&attacked, i)? != clean[i])
        })
        .collect()
}

/// Fraction of `nodes` whose flip attack changes the clean prediction.
pub fn asr(model: &BoundModel, adj: &PatchedAdjacency, nodes: &[usize], clean: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(GuapError::EmptyNodeSet);
    }
    let hits = attack_outcomes(model, adj, nodes, clean)?
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok(hits as f64 / nodes.len() as f64)
}

/// Uniform sample of `⌈rate·|nodes|⌉` nodes in shuffled order, fixed by `(seed, epoch)`.
pub fn sample_training_nodes(nodes: &[usize], rate: f64, epoch: usize, seed: u64) -> Result<Vec<usize>> {
    check_rate(rate)?;
    // 0.4 * 140 evaluates to 56.000000000000007
    let count = ((rate * nodes.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 32) + epoch as u64);
    let mut out = nodes.to_vec();
    out.shuffle(&mut rng);
    out.truncate(count.min(nodes.len()));
    Ok(out)
}

/// State handed to an observer at the end of every epoch.
#[derive(Debug)]
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    /// Border blocks after the node loop, before binarization.
    pub continuous: &'a PatchedAdjacency,
    pub binarized: &'a PatchedAdjacency,
    pub asr: f64,
    pub igp_invocations: usize,
    pub targets_visited: usize,
}

/// Computes a universal patch for the victim `params` on `g`.
pub fn guap(g: &Graph, params: &GcnParams, hyper: &AttackHyper, seed: u64) -> Result<PatchArtifact> {
    guap_with_observer(g, params, hyper, seed, |_| {})
}

pub fn guap_with_observer(
    g: &Graph,
    params: &GcnParams,
    hyper: &AttackHyper,
    seed: u64,
    mut observer: impl FnMut(&EpochSnapshot),
) -> Result<PatchArtifact> {
    hyper.validate()?;
    let start = Instant::now();
    let n = g.n();
    let m = hyper.patch_count(n)?;
    let train = g.train_nodes();
    if train.is_empty() {
        return Err(GuapError::Config("training split is empty".into()));
    }
    let stats = fit_feature_stats(g.features().view())?;
    let patch_features = sample_patch_features(&stats, m, seed);
    let x_new = stack_features(g.features(), &patch_features)?;
    let clean = clean_predictions(g, params)?;
    let model = BoundModel::new(params, x_new.view())?;
    let sup = Supervision {
        nodes: &train,
        labels: g.labels(),
    };

    let mut adj = g.empty_patch(m);
    let mut best: Option<(usize, f64, PatchedAdjacency)> = None;
    let mut asr_trace = Vec::with_capacity(hyper.max_epoch);
    let mut igp_per_epoch = Vec::with_capacity(hyper.max_epoch);
    let mut targets_per_epoch = Vec::with_capacity(hyper.max_epoch);
    let mut degenerate_skips = 0;

    for epoch in 0..hyper.max_epoch {
        let targets = if m == 0 {
            Vec::new()
        } else {
            sample_training_nodes(&train, hyper.sample_rate, epoch, seed)?
        };
        let mut invocations = 0;
        let mut successes = 0;
        for &i in &targets {
            adj.flip_in_place(i)?;
            if model.predict_node(&adj, i)? != clean[i] {
                adj.flip_in_place(i)?;
                continue;
            }
            invocations += 1;
            match igp(&model, &adj, sup, i, clean[i], hyper) {
                Ok(res) => {
                    successes += usize::from(res.success);
                    adj.add_perturbation(&res.perturbation);
                }
                Err(GuapError::DegenerateGradient { node }) => {
                    log::warn!("epoch {epoch}: degenerate gradient at node {node}, skipped");
                    degenerate_skips += 1;
                    adj.flip_in_place(i)?;
                    continue;
                }
                Err(e) => return Err(e),
            }
            adj.flip_in_place(i)?;
            adj.l2_project_in_place(hyper.radius)?;
            if hyper.clip {
                adj.clip01_in_place();
            }
            adj.blocks_mut().1.diag_mut().fill(0.0);
        }
        let binarized = adj.binarize(hyper.binarize_threshold);
        let rate = asr(&model, &binarized, &train, &clean)?;
        log::info!(
            "epoch {epoch}: train ASR {rate:.4}, {invocations} IGP calls ({successes} fooled) over {} targets, {} patch edges",
            targets.len(),
            binarized.patch_edge_count()
        );
        observer(&EpochSnapshot {
            epoch,
            continuous: &adj,
            binarized: &binarized,
            asr: rate,
            igp_invocations: invocations,
            targets_visited: targets.len(),
        });
        asr_trace.push(rate);
        igp_per_epoch.push(invocations);
        targets_per_epoch.push(targets.len());
        if best.as_ref().is_none_or(|(_, b, _)| rate > *b) {
            best = Some((epoch, rate, binarized.clone()));
        }
        if hyper.resume_binarized {
            adj = binarized;
        }
    }

    let (best_epoch, best_asr, best_adj) = best.expect("at least one epoch runs");
    let (border, patch_block) = best_adj.into_blocks();
    Ok(PatchArtifact {
        n,
        m,
        features: patch_features,
        border,
        patch_block,
        stats,
        hyper: hyper.clone(),
        seed,
        asr_trace,
        best_epoch,
        best_asr,
        igp_per_epoch,
        targets_per_epoch,
        degenerate_skips,
        seconds: start.elapsed().as_secs_f64(),
    })
}
