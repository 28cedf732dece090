//! Shared fixtures and an independent dense GCN used as a finite-difference oracle.
#![allow(dead_code)]

use std::sync::Arc;

use guap_core::gcn::GcnParams;
use guap_core::graph::{CsrAdjacency, PatchedAdjacency};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Dense reference GCN over an arbitrary (possibly asymmetric) raw adjacency.
pub struct DenseGcn<'a> {
    pub x: &'a Array2<f64>,
    pub params: &'a GcnParams,
}

impl DenseGcn<'_> {
    pub fn normalized(e: &Array2<f64>) -> Array2<f64> {
        let t = e.nrows();
        let tilde = e + &Array2::<f64>::eye(t);
        let deg: Vec<f64> = tilde.rows().into_iter().map(|r| r.sum()).collect();
        Array2::from_shape_fn((t, t), |(a, b)| tilde[[a, b]] / (deg[a].sqrt() * deg[b].sqrt()))
    }

    pub fn logits(&self, e: &Array2<f64>) -> Array2<f64> {
        let a = Self::normalized(e);
        let h = a.dot(&self.x.dot(&self.params.w0)).mapv(|v| v.max(0.0));
        a.dot(&h.dot(&self.params.w1))
    }

    pub fn probs(&self, e: &Array2<f64>) -> Array2<f64> {
        let mut z = self.logits(e);
        for mut row in z.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let s = row.sum();
            row /= s;
        }
        z
    }

    pub fn loss(&self, e: &Array2<f64>, nodes: &[usize], labels: &[usize], exclude: Option<usize>) -> f64 {
        let z = self.probs(e);
        nodes
            .iter()
            .filter(|&&j| Some(j) != exclude)
            .map(|&j| -z[[j, labels[j]]].ln())
            .sum()
    }
}

/// Central difference of `f` at `e` along the entries in `coords`, all moved together.
pub fn central_difference(
    e: &Array2<f64>,
    coords: &[(usize, usize)],
    h: f64,
    f: impl Fn(&Array2<f64>) -> f64,
) -> f64 {
    let mut plus = e.clone();
    let mut minus = e.clone();
    for &(a, b) in coords {
        plus[[a, b]] += h;
        minus[[a, b]] -= h;
    }
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

pub struct Instance {
    pub adj: PatchedAdjacency,
    pub x: Array2<f64>,
    pub params: GcnParams,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
}

/// Random small instance: n ≤ `max_n`, 1 ≤ m ≤ `max_m`, 2 ≤ K ≤ `max_k`,
/// continuous border blocks strictly inside (0, 1).
pub fn random_instance(seed: u64, max_n: usize, max_m: usize, max_k: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=max_n);
    let m = rng.random_range(1..=max_m);
    let k = rng.random_range(2..=max_k);
    let d = rng.random_range(3..=5);
    let hidden = 4;
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.45) {
                edges.push((a, b));
            }
        }
    }
    let orig = Arc::new(CsrAdjacency::from_edges(n, &edges).unwrap());
    let border = Array2::from_shape_simple_fn((n, m), || rng.random_range(0.05..0.95));
    let mut block = Array2::zeros((m, m));
    for p in 0..m {
        for q in p + 1..m {
            let v = rng.random_range(0.05..0.95);
            block[[p, q]] = v;
            block[[q, p]] = v;
        }
    }
    let adj = PatchedAdjacency::from_blocks(orig, border, block).unwrap();
    let mut normal = |r: usize, c: usize, scale: f64| {
        Array2::from_shape_simple_fn((r, c), || scale * rng.sample::<f64, _>(StandardNormal))
    };
    let x = normal(n + m, d, 1.0);
    let params = GcnParams::new(normal(d, hidden, 0.8), normal(hidden, k, 0.8)).unwrap();
    let labels: Vec<usize> = (0..n + m).map(|i| (i * 7 + seed as usize) % k).collect();
    let train: Vec<usize> = (0..n).filter(|i| i % 2 == 0 || *i == 1).collect();
    Instance {
        adj,
        x,
        params,
        labels,
        train,
    }
}

/// erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1)); all terms positive.
pub fn erf_series(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > 1e-18 * sum {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    sign * 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
}

/// One-probability of a binarized Gaussian with Bernoulli(p) moments.
pub fn binarized_oracle(p: f64) -> f64 {
    0.5 * (1.0 - erf_series((0.5 - p) / (2.0 * p * (1.0 - p)).sqrt()))
}
