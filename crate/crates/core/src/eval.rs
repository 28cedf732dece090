//! ASR / ΔAcc reporting, ablation baselines, sweeps and retraining transfer.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{clean_predictions, guap, stack_features, AttackHyper, PatchArtifact};
use crate::error::{GuapError, Result};
use crate::featgen::{fit_feature_stats, sample_patch_features};
use crate::gcn::{accuracy, train, BoundModel, GcnParams, TrainConfig};
use crate::graph::{Graph, PatchedAdjacency, Split};

/// Attack result for one evaluated node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOutcome {
    pub node: usize,
    pub split: Split,
    pub label: usize,
    pub clean_pred: usize,
    /// Prediction on the patched, unattacked graph.
    pub patched_pred: usize,
    /// Prediction under the node's own flip attack.
    pub attacked_pred: usize,
    pub fooled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub seed: u64,
    pub m: usize,
    pub patch_edges: usize,
    /// `None` when the split is empty.
    pub asr_train: Option<f64>,
    pub asr_test: Option<f64>,
    pub acc_clean: f64,
    pub acc_patched: f64,
    /// `acc_patched − acc_clean`.
    pub delta_acc: f64,
    /// Clean test accuracy is below 0.5, so ASR says little about the patch.
    pub low_accuracy: bool,
    pub outcomes: Vec<NodeOutcome>,
    pub config: serde_json::Value,
    pub metadata: RunMetadata,
}

/// Run facts that differ between otherwise identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seconds: f64,
}

impl EvalReport {
    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }
}

/// Everything needed to evaluate one patch against one victim.
struct Patched<'a> {
    g: &'a Graph,
    params: &'a GcnParams,
    patch_features: &'a Array2<f64>,
    adj: PatchedAdjacency,
}

impl Patched<'_> {
    fn evaluate(&self, kind: &str, seed: u64) -> Result<EvalReport> {
        let start = Instant::now();
        let g = self.g;
        let clean = clean_predictions(g, self.params)?;
        let x_new = stack_features(g.features(), self.patch_features)?;
        let model = BoundModel::new(self.params, x_new.view())?;
        let patched = model.predict(&self.adj)?;
        let test = g.test_nodes();
        let acc_clean = accuracy(&clean, g.labels(), &test);
        let acc_patched = accuracy(&patched, g.labels(), &test);

        let mut nodes = g.train_nodes();
        nodes.extend(&test);
        let attacked: Vec<usize> = nodes
            .par_iter()
            .map(|&i| model.predict_node(&self.adj.attack_flip(i)?, i))
            .collect::<Result<_>>()?;
        let outcomes: Vec<NodeOutcome> = nodes
            .iter()
            .zip(attacked)
            .map(|(&i, attacked_pred)| NodeOutcome {
                node: i,
                split: g.split()[i],
                label: g.labels()[i],
                clean_pred: clean[i],
                patched_pred: patched[i],
                attacked_pred,
                fooled: attacked_pred != clean[i],
            })
            .collect();
        let rate = |which: Split| {
            let (hits, total) = outcomes
                .iter()
                .filter(|o| o.split == which)
                .fold((0usize, 0usize), |(h, t), o| (h + usize::from(o.fooled), t + 1));
            (total > 0).then(|| hits as f64 / total as f64)
        };
        Ok(EvalReport {
            kind: kind.to_string(),
            seed,
            m: self.adj.m(),
            patch_edges: self.adj.patch_edge_count(),
            asr_train: rate(Split::Train),
            asr_test: rate(Split::Test),
            acc_clean,
            acc_patched,
            delta_acc: acc_patched - acc_clean,
            low_accuracy: acc_clean < 0.5,
            outcomes,
            config: serde_json::Value::Null,
            metadata: RunMetadata {
                seconds: start.elapsed().as_secs_f64(),
            },
        })
    }
}

fn check_artifact(artifact: &PatchArtifact, g: &Graph) -> Result<()> {
    let m = artifact.m;
    if artifact.n != g.n()
        || artifact.border.dim() != (g.n(), m)
        || artifact.patch_block.dim() != (m, m)
        || artifact.features.dim() != (m, g.feature_dim())
    {
        return Err(GuapError::Validation(format!(
            "artifact (n = {}, m = {m}, d = {}) does not fit graph (n = {}, d = {})",
            artifact.n,
            artifact.features.ncols(),
            g.n(),
            g.feature_dim()
        )));
    }
    Ok(())
}

/// Evaluates a computed patch: clean vs patched accuracy and per-split ASR.
pub fn evaluate_patch(artifact: &PatchArtifact, g: &Graph, params: &GcnParams) -> Result<EvalReport> {
    check_artifact(artifact, g)?;
    Patched {
        g,
        params,
        patch_features: &artifact.features,
        adj: artifact.adjacency(g)?,
    }
    .evaluate("guap", artifact.seed)
}

/// Patch nodes with generated features and no edges at all.
pub fn baseline_no_edges(g: &Graph, params: &GcnParams, m: usize, seed: u64) -> Result<EvalReport> {
    let stats = fit_feature_stats(g.features().view())?;
    let features = sample_patch_features(&stats, m, seed);
    Patched {
        g,
        params,
        patch_features: &features,
        adj: g.empty_patch(m),
    }
    .evaluate("no-edges", seed)
}

/// How random patch edges are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomEdges {
    /// Every possible patch edge independently with this probability.
    Probability(f64),
    /// Probability chosen so the expected undirected edge count equals this.
    ExpectedCount(f64),
}

impl RandomEdges {
    pub fn probability(self, n: usize, m: usize) -> Result<f64> {
        let p = match self {
            RandomEdges::Probability(p) => p,
            RandomEdges::ExpectedCount(count) => {
                let positions = (n * m + m * m.saturating_sub(1) / 2) as f64;
                if count < 0.0 {
                    return Err(GuapError::hyper("edge_budget", "must be non-negative"));
                }
                if positions == 0.0 {
                    0.0
                } else {
                    count / positions
                }
            }
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(GuapError::hyper("edge_probability", format!("{p} is not a probability")));
        }
        Ok(p)
    }
}

/// Patch nodes with generated features and Bernoulli edges.
pub fn baseline_random_edges(
    g: &Graph,
    params: &GcnParams,
    m: usize,
    edges: RandomEdges,
    seed: u64,
) -> Result<EvalReport> {
    let n = g.n();
    let p = edges.probability(n, m)?;
    let stats = fit_feature_stats(g.features().view())?;
    let features = sample_patch_features(&stats, m, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 << 32);
    let mut adj = g.empty_patch(m);
    {
        let (border, block) = adj.blocks_mut();
        border.mapv_inplace(|_| if rng.random_bool(p) { 1.0 } else { 0.0 });
        for a in 0..m {
            for b in a + 1..m {
                let v = if rng.random_bool(p) { 1.0 } else { 0.0 };
                block[[a, b]] = v;
                block[[b, a]] = v;
            }
        }
    }
    Patched {
        g,
        params,
        patch_features: &features,
        adj,
    }
    .evaluate("random-edges", seed)
}

/// Resamples the patch features from the stored statistics and re-evaluates
/// the unchanged patch edges.
pub fn regenerate_features_eval(
    artifact: &PatchArtifact,
    g: &Graph,
    params: &GcnParams,
    new_seed: u64,
) -> Result<EvalReport> {
    check_artifact(artifact, g)?;
    let features = sample_patch_features(&artifact.stats, artifact.m, new_seed);
    Patched {
        g,
        params,
        patch_features: &features,
        adj: artifact.adjacency(g)?,
    }
    .evaluate("regenerated-features", new_seed)
}

/// Retrains the victim from `new_seed` and evaluates the fixed patch on it.
pub fn transfer_retrain_check(
    artifact: &PatchArtifact,
    g: &Graph,
    train_cfg: &TrainConfig,
    new_seed: u64,
) -> Result<EvalReport> {
    let cfg = TrainConfig {
        seed: new_seed,
        ..train_cfg.clone()
    };
    let params = train(g, &cfg)?;
    let mut report = evaluate_patch(artifact, g, &params)?;
    report.kind = "retrained-victim".into();
    report.seed = new_seed;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PatchFraction,
    Radius,
    SampleRate,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::PatchFraction => "patch_fraction",
            SweepAxis::Radius => "radius",
            SweepAxis::SampleRate => "sample_rate",
        }
    }

    fn apply(self, hyper: &AttackHyper, value: f64) -> AttackHyper {
        let mut h = hyper.clone();
        match self {
            SweepAxis::PatchFraction => {
                h.patch_fraction = value;
                h.patch_nodes = None;
            }
            SweepAxis::Radius => h.radius = value,
            SweepAxis::SampleRate => h.sample_rate = value,
        }
        h
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = GuapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch_fraction" | "patch-frac" => Ok(SweepAxis::PatchFraction),
            "radius" => Ok(SweepAxis::Radius),
            "sample_rate" | "sample-rate" => Ok(SweepAxis::SampleRate),
            other => Err(GuapError::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// Means over the seeds of one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub runs: usize,
    pub m: usize,
    pub asr_train: f64,
    pub asr_test: f64,
    pub delta_acc: f64,
    pub patch_edges: f64,
    pub igp_invocations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Column names after the leading axis column.
    pub const COLUMNS: &'static str = "runs,m,asr_train,asr_test,delta_acc,patch_edges,igp_invocations";

    /// CSV with the axis name as first column; an empty table is header only.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.axis, Self::COLUMNS);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.value, r.runs, r.m, r.asr_train, r.asr_test, r.delta_acc, r.patch_edges, r.igp_invocations
            ));
        }
        out
    }
}

/// One attack run plus its evaluation.
pub fn run_and_evaluate(
    g: &Graph,
    params: &GcnParams,
    hyper: &AttackHyper,
    seed: u64,
) -> Result<(PatchArtifact, EvalReport)> {
    let artifact = guap(g, params, hyper, seed)?;
    let report = evaluate_patch(&artifact, g, params)?;
    Ok((artifact, report))
}

/// Runs one attack per `(value, seed)` on up to `workers` threads and
/// averages per value. Output order and content do not depend on scheduling.
pub fn sweep(
    g: &Graph,
    params: &GcnParams,
    hyper: &AttackHyper,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    workers: usize,
) -> Result<SweepTable> {
    if seeds.is_empty() {
        return Err(GuapError::Config("sweep needs at least one seed".into()));
    }
    let jobs: Vec<(usize, f64, u64)> = values
        .iter()
        .enumerate()
        .flat_map(|(k, &v)| seeds.iter().map(move |&s| (k, v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| GuapError::Config(format!("cannot start sweep workers: {e}")))?;
    let results: Vec<(usize, PatchArtifact, EvalReport)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, v, s)| {
                let h = axis.apply(hyper, v);
                let (art, rep) = run_and_evaluate(g, params, &h, s)?;
                Ok((k, art, rep))
            })
            .collect::<Result<_>>()
    })?;

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let rows = values
        .iter()
        .enumerate()
        .map(|(k, &value)| {
            let runs: Vec<_> = results.iter().filter(|(j, _, _)| *j == k).collect();
            let col = |f: &dyn Fn(&PatchArtifact, &EvalReport) -> f64| -> f64 {
                mean(&runs.iter().map(|(_, a, r)| f(a, r)).collect::<Vec<_>>())
            };
            SweepRow {
                value,
                runs: runs.len(),
                m: runs[0].1.m,
                asr_train: col(&|_, r| r.asr_train.unwrap_or(0.0)),
                asr_test: col(&|_, r| r.asr_test.unwrap_or(0.0)),
                delta_acc: col(&|_, r| r.delta_acc),
                patch_edges: col(&|a, _| a.patch_edge_count() as f64),
                igp_invocations: col(&|a, _| a.igp_invocations() as f64),
            }
        })
        .collect();
    Ok(SweepTable { axis, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrated_probability() {
        let p = RandomEdges::ExpectedCount(15.0).probability(10, 3).unwrap();
        assert!((p - 15.0 / 33.0).abs() < 1e-15);
        assert_eq!(RandomEdges::ExpectedCount(1.0).probability(4, 0).unwrap(), 0.0);
        assert!(RandomEdges::Probability(1.5).probability(4, 2).is_err());
        assert!(RandomEdges::ExpectedCount(100.0).probability(4, 2).is_err());
    }

    #[test]
    fn axis_names_round_trip() {
        for a in [SweepAxis::PatchFraction, SweepAxis::Radius, SweepAxis::SampleRate] {
            assert_eq!(a.as_str().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("depth".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let t = SweepTable {
            axis: SweepAxis::Radius,
            rows: vec![],
        };
        assert_eq!(t.to_csv(), format!("radius,{}\n", SweepTable::COLUMNS));
    }
}
