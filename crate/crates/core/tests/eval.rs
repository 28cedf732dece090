mod common;

use common::DenseGcn;
use guap_core::attack::{guap, AttackHyper, PatchArtifact};
use guap_core::eval::{
    baseline_no_edges, baseline_random_edges, evaluate_patch, regenerate_features_eval, sweep,
    transfer_retrain_check, EvalReport, RandomEdges, SweepAxis,
};
use guap_core::featgen::{sample_patch_features, FeatureStats};
use guap_core::gcn::{train, BoundModel, GcnParams, TrainConfig};
use guap_core::graph::{CsrAdjacency, Graph, Split};
use guap_core::synth::{sbm, SbmConfig};
use guap_core::GuapError;
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_graph() -> Graph {
    sbm(&SbmConfig {
        nodes_per_block: 30,
        p_in: 0.1,
        p_out: 0.01,
        train_per_class: 6,
        test_per_class: 15,
        ..Default::default()
    })
    .unwrap()
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 100,
        ..Default::default()
    }
}

fn hyper() -> AttackHyper {
    AttackHyper {
        max_epoch: 3,
        max_iter: 10,
        patch_nodes: Some(3),
        ..Default::default()
    }
}

/// Report without the fields that legitimately differ between equivalent runs.
fn comparable(r: &EvalReport) -> EvalReport {
    EvalReport {
        kind: String::new(),
        seed: 0,
        metadata: Default::default(),
        ..r.clone()
    }
}

fn empty_artifact(g: &Graph) -> PatchArtifact {
    PatchArtifact {
        n: g.n(),
        m: 0,
        features: Array2::zeros((0, g.feature_dim())),
        border: Array2::zeros((g.n(), 0)),
        patch_block: Array2::zeros((0, 0)),
        stats: FeatureStats {
            mean: vec![0.0; g.feature_dim()],
            variance: vec![0.0; g.feature_dim()],
            binary: true,
        },
        hyper: AttackHyper::default(),
        seed: 0,
        asr_trace: vec![],
        best_epoch: 0,
        best_asr: 0.0,
        igp_per_epoch: vec![],
        targets_per_epoch: vec![],
        degenerate_skips: 0,
        seconds: 0.0,
    }
}

#[test]
fn zero_patch_has_no_effect() {
    let g = small_graph();
    let params = train(&g, &train_cfg()).unwrap();
    let r = evaluate_patch(&empty_artifact(&g), &g, &params).unwrap();
    assert_eq!(r.delta_acc, 0.0);
    assert_eq!(r.asr_train, Some(0.0));
    assert_eq!(r.asr_test, Some(0.0));
    assert_eq!(r.outcomes.len(), 18 + 45);

    let r = baseline_no_edges(&g, &params, 0, 1).unwrap();
    assert_eq!(r.asr_test, Some(0.0));
}

#[test]
fn mismatched_artifact_is_a_validation_error() {
    let g = small_graph();
    let params = train(&g, &train_cfg()).unwrap();
    let mut a = empty_artifact(&g);
    a.n += 1;
    assert!(matches!(evaluate_patch(&a, &g, &params), Err(GuapError::Validation(_))));
    let mut a = empty_artifact(&g);
    a.features = Array2::zeros((0, g.feature_dim() + 1));
    assert!(matches!(evaluate_patch(&a, &g, &params), Err(GuapError::Validation(_))));
}

/// Six nodes, two classes, zero-feature isolated patch nodes.
#[test]
fn isolated_zero_patch_keeps_original_logits_exactly() {
    let edges = [(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)];
    let adjacency = CsrAdjacency::from_edges(6, &edges).unwrap();
    let x = array![[1.0, 0.0], [0.9, 0.2], [0.6, 0.5], [0.3, 0.8], [0.1, 1.0], [0.0, 0.7]];
    let g = Graph::new(
        adjacency,
        x.clone(),
        vec![0, 0, 0, 1, 1, 1],
        2,
        vec![Split::Train, Split::Test, Split::Test, Split::Test, Split::Test, Split::Train],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = GcnParams::glorot(2, 4, 2, &mut rng);

    let m = 2;
    let patched = g.empty_patch(m);
    let x_new = ndarray::concatenate![ndarray::Axis(0), x.view(), Array2::<f64>::zeros((m, 2)).view()];
    let got = BoundModel::new(&params, x_new.view()).unwrap().probs(&patched).unwrap();

    let mut clean = Array2::zeros((6, 6));
    for &(a, b) in &edges {
        clean[[a, b]] = 1.0;
        clean[[b, a]] = 1.0;
    }
    let oracle = DenseGcn { x: &x, params: &params }.probs(&clean);
    for i in 0..6 {
        for c in 0..2 {
            assert!((got[[i, c]] - oracle[[i, c]]).abs() < 1e-14);
        }
    }

    let mut a = empty_artifact(&g);
    a.m = m;
    a.features = Array2::zeros((m, 2));
    a.border = Array2::zeros((6, m));
    a.patch_block = Array2::zeros((m, m));
    let r = evaluate_patch(&a, &g, &params).unwrap();
    assert_eq!(r.delta_acc, 0.0);
    assert_eq!(r.acc_clean, r.acc_patched);
}

#[test]
fn random_edges_with_zero_probability_is_the_no_edge_baseline() {
    let g = small_graph();
    let params = train(&g, &train_cfg()).unwrap();
    let a = baseline_no_edges(&g, &params, 3, 5).unwrap();
    let b = baseline_random_edges(&g, &params, 3, RandomEdges::Probability(0.0), 5).unwrap();
    assert_eq!(comparable(&a), comparable(&b));
    assert_eq!(b.patch_edges, 0);
}

#[test]
fn random_edges_at_one_half_are_dense_and_symmetric() {
    let g = small_graph();
    let params = train(&g, &train_cfg()).unwrap();
    let r = baseline_random_edges(&g, &params, 3, RandomEdges::Probability(0.5), 2).unwrap();
    let positions = (g.n() * 3 + 3) as f64;
    let frac = r.patch_edges as f64 / positions;
    assert!((frac - 0.5).abs() < 0.06, "{frac}");
    assert_eq!(r.delta_acc, r.acc_patched - r.acc_clean);
}

#[test]
fn regeneration_with_the_same_seed_reproduces_the_report() {
    let g = small_graph();
    let params = train(&g, &train_cfg()).unwrap();
    let artifact = guap(&g, &params, &hyper(), 11).unwrap();
    let original = evaluate_patch(&artifact, &g, &params).unwrap();
    let again = regenerate_features_eval(&artifact, &g, &params, artifact.seed).unwrap();
    assert_eq!(comparable(&original), comparable(&again));
}

#[test]
fn zero_variance_statistics_ignore_the_seed() {
    let stats = FeatureStats {
        mean: vec![0.2, 0.7, 0.0],
        variance: vec![0.0; 3],
        binary: false,
    };
    assert_eq!(sample_patch_features(&stats, 4, 1), sample_patch_features(&stats, 4, 99));
}

#[test]
fn same_seed_retrain_gives_the_same_asr() {
    let g = small_graph();
    let cfg = train_cfg();
    let params = train(&g, &cfg).unwrap();
    let artifact = guap(&g, &params, &hyper(), 2).unwrap();
    let original = evaluate_patch(&artifact, &g, &params).unwrap();
    let retrained = transfer_retrain_check(&artifact, &g, &cfg, cfg.seed).unwrap();
    assert_eq!(original.asr_test, retrained.asr_test);
    assert_eq!(original.asr_train, retrained.asr_train);
}

#[test]
fn untrained_victim_is_flagged() {
    let g = small_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = GcnParams::glorot(g.feature_dim(), 16, g.num_classes(), &mut rng);
    let r = baseline_no_edges(&g, &params, 3, 0).unwrap();
    assert!(r.acc_clean < 0.5);
    assert!(r.low_accuracy);
}

#[test]
fn single_point_sweep_matches_a_direct_run() {
    let g = small_graph();
    let params = train(&g, &train_cfg()).unwrap();
    let h = hyper();
    let table = sweep(&g, &params, &h, SweepAxis::Radius, &[10.0], &[4], 1).unwrap();
    let artifact = guap(&g, &params, &h, 4).unwrap();
    let r = evaluate_patch(&artifact, &g, &params).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!(row.asr_train, r.asr_train.unwrap());
    assert_eq!(row.asr_test, r.asr_test.unwrap());
    assert_eq!(row.delta_acc, r.delta_acc);
    assert_eq!(row.patch_edges, artifact.patch_edge_count() as f64);
    assert_eq!(row.igp_invocations, artifact.igp_invocations() as f64);
}

#[test]
fn sweep_csv_is_independent_of_worker_count() {
    let g = small_graph();
    let params = train(&g, &train_cfg()).unwrap();
    let h = AttackHyper {
        max_epoch: 2,
        ..hyper()
    };
    let values = [0.5, 1.0];
    let a = sweep(&g, &params, &h, SweepAxis::SampleRate, &values, &[0, 1], 1).unwrap();
    let b = sweep(&g, &params, &h, SweepAxis::SampleRate, &values, &[0, 1], 3).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv().lines().count(), 3);
}
