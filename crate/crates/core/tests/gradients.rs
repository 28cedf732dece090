mod common;

use std::sync::Arc;

use common::{central_difference, random_instance, relative_error, DenseGcn};
use guap_core::gcn::{BoundModel, GcnParams, Supervision};
use guap_core::graph::{CsrAdjacency, PatchedAdjacency};
use ndarray::{array, Array2};

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

#[test]
fn loss_gradient_matches_central_differences() {
    for seed in 0..20 {
        let inst = random_instance(seed, 8, 3, 4);
        let model = BoundModel::new(&inst.params, inst.x.view()).unwrap();
        let sup = Supervision { nodes: &inst.train, labels: &inst.labels };
        let exclude = Some(inst.train[0]);
        let grad = model.loss_gradient(&inst.adj, sup, exclude).unwrap().to_dense();

        let oracle = DenseGcn { x: &inst.x, params: &inst.params };
        let e = inst.adj.to_dense();
        let t = e.nrows();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for a in 0..t {
            for b in 0..t {
                analytic.push(grad[[a, b]]);
                numeric.push(central_difference(&e, &[(a, b)], H, |m| {
                    oracle.loss(m, &inst.train, &inst.labels, exclude)
                }));
            }
        }
        let err = relative_error(&analytic, &numeric);
        assert!(err < TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn row_jacobian_matches_symmetric_central_differences() {
    for seed in 0..20 {
        let inst = random_instance(100 + seed, 8, 3, 4);
        let model = BoundModel::new(&inst.params, inst.x.view()).unwrap();
        let oracle = DenseGcn { x: &inst.x, params: &inst.params };
        let e = inst.adj.to_dense();
        let t = e.nrows();
        // one original node and one patch node per instance
        for &i in &[seed as usize % inst.adj.n(), t - 1] {
            let jac = model.output_jacobian_row(&inst.adj, i).unwrap();
            let k = jac.probs.nrows();
            assert_eq!(jac.probs.ncols(), t);
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            for j in 0..t {
                let coords: Vec<(usize, usize)> = if j == i { vec![(i, i)] } else { vec![(i, j), (j, i)] };
                for c in 0..k {
                    analytic.push(jac.probs[[c, j]]);
                    numeric.push(central_difference(&e, &coords, H, |m| oracle.probs(m)[[i, c]]));
                }
            }
            let err = relative_error(&analytic, &numeric);
            assert!(err < TOL, "seed {seed}, row {i}: relative error {err:e}");
            let z = oracle.probs(&e);
            for c in 0..k {
                assert!((jac.output[c] - z[[i, c]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn coupled_derivative_is_sum_of_one_sided_derivatives() {
    let inst = random_instance(7, 8, 3, 3);
    let oracle = DenseGcn { x: &inst.x, params: &inst.params };
    let e = inst.adj.to_dense();
    let i = 0;
    let f = |m: &Array2<f64>| oracle.probs(m)[[i, 0]];
    for j in 1..e.nrows() {
        let both = central_difference(&e, &[(i, j), (j, i)], H, f);
        let sum = central_difference(&e, &[(i, j)], H, f) + central_difference(&e, &[(j, i)], H, f);
        assert!((both - sum).abs() < 1e-7 * (1.0 + both.abs()), "j = {j}: {both} vs {sum}");
    }
}

#[test]
fn masked_border_is_symmetrized_restriction_with_target_zeroed() {
    let inst = random_instance(3, 8, 3, 4);
    let model = BoundModel::new(&inst.params, inst.x.view()).unwrap();
    let sup = Supervision { nodes: &inst.train, labels: &inst.labels };
    let target = 1;
    let grad = model.loss_gradient(&inst.adj, sup, Some(target)).unwrap();
    let dense = grad.to_dense();
    let n = inst.adj.n();
    let m = inst.adj.m();
    let masked = grad.masked_border(Some(target));
    assert!(masked.is_symmetric());
    for a in 0..n {
        for p in 0..m {
            let expected = if a == target {
                0.0
            } else {
                0.5 * (dense[[a, n + p]] + dense[[n + p, a]])
            };
            assert!((masked.border[[a, p]] - expected).abs() < 1e-12);
        }
    }
    for p in 0..m {
        for q in 0..m {
            let expected = 0.5 * (dense[[n + p, n + q]] + dense[[n + q, n + p]]);
            assert!((masked.patch_block[[p, q]] - expected).abs() < 1e-12);
        }
    }
    let unmasked = grad.masked_border(None);
    assert!(unmasked.border.row(target).iter().any(|v| *v != 0.0));
}

#[test]
fn gradient_vanishes_between_unsupervised_components() {
    // component {0,1,2} carries all the supervision; {3,4,5} is out of reach
    let adj = CsrAdjacency::from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
    let adj = PatchedAdjacency::empty(Arc::new(adj), 0);
    let x = array![[1.0, 0.2], [0.3, 1.0], [0.5, 0.5], [1.0, 0.0], [0.0, 1.0], [0.7, 0.1]];
    let params = GcnParams::new(
        array![[0.9, -0.4, 0.3], [-0.2, 0.8, 0.5]],
        array![[1.0, -0.5], [-0.7, 0.6], [0.4, 0.2]],
    )
    .unwrap();
    let labels = vec![0, 1, 0, 1, 0, 1];
    let nodes = vec![0, 1, 2];
    let model = BoundModel::new(&params, x.view()).unwrap();
    let grad = model
        .loss_gradient(&adj, Supervision { nodes: &nodes, labels: &labels }, None)
        .unwrap();
    for a in 3..6 {
        for b in 3..6 {
            assert_eq!(grad.entry(a, b), 0.0, "entry ({a}, {b})");
        }
    }
    assert!((0..3).any(|a| grad.entry(a, (a + 1) % 3) != 0.0));
}

#[test]
fn coupled_derivative_vanishes_at_an_interior_loss_minimum() {
    // Minimize the loss along one coupled border entry with a derivative-free
    // search, then check the analytic derivative there.
    let mut checked = 0;
    for seed in 0..400u64 {
        let inst = random_instance(500 + seed, 5, 2, 3);
        let row = seed as usize % inst.adj.n();
        let model = BoundModel::new(&inst.params, inst.x.view()).unwrap();
        let sup = Supervision { nodes: &inst.train, labels: &inst.labels };
        let n = inst.adj.n();
        let at = |t: f64| {
            let mut border = inst.adj.border().clone();
            border[[row, 0]] = t;
            PatchedAdjacency::from_blocks(
                Arc::clone(inst.adj.original()),
                border,
                inst.adj.patch_block().clone(),
            )
            .unwrap()
        };
        let loss = |t: f64| model.masked_loss(&at(t), sup, None).unwrap();
        let (mut lo, mut hi) = (0.0f64, 20.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if loss(a) < loss(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let t = 0.5 * (lo + hi);
        if t < 0.05 || t > 19.95 {
            continue;
        }
        // ReLU kinks give minima with a jump in slope; only smooth minima count
        let h = 1e-4;
        let left = (loss(t) - loss(t - h)) / h;
        let right = (loss(t + h) - loss(t)) / h;
        if (right - left).abs() > 1e-3 {
            continue;
        }
        let g = model.loss_gradient(&at(t), sup, None).unwrap();
        let coupled = g.entry(row, n) + g.entry(n, row);
        assert!(coupled.abs() < 1e-6, "seed {seed}: derivative {coupled:e} at t = {t}");
        checked += 1;
        if checked == 3 {
            break;
        }
    }
    assert!(checked > 0, "no interior minimum found");
}
