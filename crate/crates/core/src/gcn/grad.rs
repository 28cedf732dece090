//! Adjacency derivatives of the GCN output.
//!
//! With `Ã = E + I`, `d = Ã·1` and `s = d^{-1/2}`, the normalized adjacency is
//! `Â_ab = s_a Ã_ab s_b`. For any scalar `L` with `∂L/∂Â = M`,
//!
//! ```text
//! ∂L/∂E_ab = s_a s_b M_ab + τ_a,   τ_a = -½ s_a³ Σ_b (M_ab Ã_ab s_b + M_ba Ã_ba s_b)
//! ```
//!
//! and for the two-layer GCN `M = G_O Qᵀ + G_U Pᵀ` is low rank, so neither `M`
//! nor the full gradient is ever formed.

use ndarray::{concatenate, s, Array1, Array2, Axis, Zip};

use super::{Activations, GcnParams, Supervision};
use crate::graph::{BorderBlocks, NormalizedAdjacency};

/// Gradient of a scalar with respect to every raw adjacency entry, in
/// factored form: `G_ab = s_a s_b ⟨left_a, right_b⟩ + τ_a`.
#[derive(Debug, Clone)]
pub struct AdjacencyGradient {
    n: usize,
    inv_sqrt_deg: Array1<f64>,
    left: Array2<f64>,
    right: Array2<f64>,
    tau: Array1<f64>,
}

impl AdjacencyGradient {
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        let s = &self.inv_sqrt_deg;
        s[a] * s[b] * self.left.row(a).dot(&self.right.row(b)) + self.tau[a]
    }

    /// All (n+m)² entries. Quadratic in size; meant for inspection and tests.
    pub fn to_dense(&self) -> Array2<f64> {
        let t = self.dim();
        Array2::from_shape_fn((t, t), |(a, b)| self.entry(a, b))
    }

    fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Array2<f64> {
        let s = &self.inv_sqrt_deg;
        let l = &self.left.slice(s![rows.clone(), ..]) * &s.slice(s![rows.clone()]).insert_axis(Axis(1));
        let r = &self.right.slice(s![cols.clone(), ..]) * &s.slice(s![cols]).insert_axis(Axis(1));
        let mut out = l.dot(&r.t());
        out += &self.tau.slice(s![rows]).insert_axis(Axis(1));
        out
    }

    /// The gradient restricted to the patch blocks, masked and symmetrized the
    /// way the inner attack loop consumes it: the n×n block is dropped, row and
    /// column `exclude` are zeroed, and the result is `(G + Gᵀ) / 2`.
    pub fn masked_border(&self, exclude: Option<usize>) -> BorderBlocks {
        let n = self.n;
        let t = self.dim();
        let upper = self.block(0..n, n..t);
        let lower = self.block(n..t, 0..n);
        let patch = self.block(n..t, n..t);
        let mut border = upper;
        Zip::from(&mut border)
            .and(&lower.t())
            .for_each(|g, &h| *g = 0.5 * (*g + h));
        let mut patch_block = &patch + &patch.t();
        patch_block *= 0.5;
        let mut out = BorderBlocks { border, patch_block };
        if let Some(i) = exclude {
            out.zero_node(n, i);
        }
        out
    }
}

/// Jacobian of node `i`'s probabilities with respect to its adjacency row,
/// where entry `(i, j)` and `(j, i)` move together.
#[derive(Debug, Clone)]
pub struct RowJacobian {
    /// K × (n+m); `probs[[c, j]] = ∂Z_ic / ∂E_ij`.
    pub probs: Array2<f64>,
    /// The same for the logits.
    pub logits: Array2<f64>,
    /// `Z_i` at the evaluation point.
    pub output: Array1<f64>,
    /// Pre-softmax row `O_i`; predictions take the argmax of this.
    pub output_logits: Array1<f64>,
}

fn relu_mask(pre: &Array2<f64>) -> Array2<f64> {
    pre.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 })
}

fn rowwise_dot(a: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    Zip::from(a.rows()).and(b.rows()).map_collect(|x, y| x.dot(&y))
}

pub(super) fn loss_gradient(
    norm: &NormalizedAdjacency,
    act: &Activations,
    params: &GcnParams,
    sup: Supervision,
    exclude: Option<usize>,
) -> AdjacencyGradient {
    let s = norm.inv_sqrt_deg();
    let k = params.num_classes();
    let mut g_out = Array2::<f64>::zeros((norm.dim(), k));
    for &j in sup.nodes {
        if Some(j) == exclude {
            continue;
        }
        let mut row = g_out.row_mut(j);
        row.assign(&act.probs.row(j));
        row[sup.labels[j]] -= 1.0;
    }
    let d_hidden_out = norm.apply_transpose(g_out.view());
    let mut d_pre = d_hidden_out.dot(&params.w1.t());
    d_pre *= &relu_mask(&act.pre_hidden);
    let at_d_pre = norm.apply_transpose(d_pre.view());

    // s_a σ_a = G_O·O + G_U·U + Q·(ÂᵀG_O) + P·(ÂᵀG_U), row-wise
    let scaled_sigma = rowwise_dot(&g_out, &act.logits)
        + rowwise_dot(&d_pre, &act.pre_hidden)
        + rowwise_dot(&act.hidden_out, &d_hidden_out)
        + rowwise_dot(&act.projected, &at_d_pre);
    let tau = Zip::from(&scaled_sigma).and(s).map_collect(|&sig, &si| -0.5 * si * si * sig);

    AdjacencyGradient {
        n: norm.n(),
        inv_sqrt_deg: s.clone(),
        left: concatenate![Axis(1), g_out, d_pre],
        right: concatenate![Axis(1), act.hidden_out, act.projected],
        tau,
    }
}

pub(super) fn row_jacobian(
    norm: &NormalizedAdjacency,
    act: &Activations,
    params: &GcnParams,
    i: usize,
) -> RowJacobian {
    let s = norm.inv_sqrt_deg();
    let si = s[i];
    let w1 = &params.w1;
    let p = &act.projected;
    let q = &act.hidden_out;
    let mask = relu_mask(&act.pre_hidden);
    let a_row = norm.row(i);
    let a_col = a_row.view().insert_axis(Axis(1));

    // W = Âᵀ (diag(â) ∘ mask)
    let w = norm.apply_transpose((&mask * &a_col).view());
    // Φ_a = 2 â_a Q_a + (P_a ∘ W_a) W¹, plus O_i at a = i
    let mut phi = (&(p * &w)).dot(w1);
    phi.scaled_add(2.0, &(q * &a_col));
    {
        let mut phi_i = phi.row_mut(i);
        phi_i += &act.logits.row(i);
    }
    // A1_j = (P_j ∘ mask_i) W¹,  A2_j = (mask_j ∘ P_i) W¹
    let a1 = (p * &mask.row(i).insert_axis(Axis(0))).dot(w1);
    let a2 = (&mask * &p.row(i).insert_axis(Axis(0))).dot(w1);

    // Ψ_j = s_i s_j (Q_j + â_i A1_j + â_j A2_j)
    let mut psi = q.clone();
    psi.scaled_add(a_row[i], &a1);
    psi += &(&a2 * &a_col);
    psi *= &(s * si).insert_axis(Axis(1));

    // Ξ_j = Ψ_j − ½ s_i² Φ_i − ½ s_j² Φ_j for j ≠ i
    let s_sq = s.mapv(|x| x * x).insert_axis(Axis(1));
    let mut xi = psi;
    xi.scaled_add(-0.5, &(&phi * &s_sq));
    let phi_i = phi.row(i).to_owned();
    for mut row in xi.rows_mut() {
        row.scaled_add(-0.5 * si * si, &phi_i);
    }
    // the diagonal entry is a single coordinate
    let diag = (&q.row(i) + &(&a1.row(i) * a_row[i])) * (si * si) - &(&phi_i * (0.5 * si * si));
    xi.row_mut(i).assign(&diag);

    // ∂Z_ic/∂t = Z_ic (∂O_ic/∂t − Σ_k Z_ik ∂O_ik/∂t)
    let z = act.probs.row(i).to_owned();
    let logits = xi.t().to_owned();
    let mean = z.dot(&logits);
    let mut probs = &logits - &mean.insert_axis(Axis(0));
    probs *= &z.view().insert_axis(Axis(1));

    RowJacobian {
        probs,
        logits,
        output: z,
        output_logits: act.logits.row(i).to_owned(),
    }
}
