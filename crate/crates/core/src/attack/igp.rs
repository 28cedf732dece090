use ndarray::Array1;

use super::AttackHyper;
use crate::error::{GuapError, Result};
use crate::gcn::{argmax, BoundModel, RowJacobian, Supervision};
use crate::graph::{BorderBlocks, PatchedAdjacency};

/// Output of the inner perturbation loop for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct IgpResult {
    /// Perturbation of the border blocks; its n×n block is implicitly zero.
    pub perturbation: BorderBlocks,
    pub iterations: usize,
    /// The target's prediction differs from `pred` on the final perturbed matrix.
    pub success: bool,
}

/// Closest-boundary step restricted to the patch entries of row `i`.
///
/// With `patch_only`, class differences `Δw_c` are taken over the m patch
/// entries only, so `v` is the minimum step within the admissible subspace.
/// Otherwise they span the whole row and the first n entries of `v` are
/// dropped afterwards. Returns the m patch components of `v`.
pub fn deepfool_step(
    jac: &RowJacobian,
    pred: usize,
    n: usize,
    node: usize,
    patch_only: bool,
) -> Result<Array1<f64>> {
    let f = &jac.output;
    let start = if patch_only { n } else { 0 };
    let cols = ndarray::s![start..];
    let grad_pred = jac.probs.row(pred);
    let grad_pred = grad_pred.slice(cols);
    let mut best: Option<(f64, f64, Array1<f64>)> = None;
    for c in 0..f.len() {
        if c == pred {
            continue;
        }
        let dw = &jac.probs.row(c).slice(cols) - &grad_pred;
        let norm_sq = dw.dot(&dw);
        if norm_sq == 0.0 {
            continue;
        }
        let df = (f[c] - f[pred]).abs();
        let ratio = df / norm_sq.sqrt();
        if best.as_ref().is_none_or(|(r, _, _)| ratio < *r) {
            best = Some((ratio, df / norm_sq, dw));
        }
    }
    let (_, scale, dw) = best.ok_or(GuapError::DegenerateGradient { node })?;
    Ok(dw.slice(ndarray::s![n - start..]).mapv(|x| x * scale))
}

fn perturbed(base: &PatchedAdjacency, delta: &BorderBlocks) -> PatchedAdjacency {
    let mut e = base.clone();
    e.add_perturbation(delta);
    e.clip01_in_place();
    e
}

/// `e − base` over the border blocks.
fn effective(base: &PatchedAdjacency, e: &PatchedAdjacency) -> BorderBlocks {
    BorderBlocks {
        border: e.border() - base.border(),
        patch_block: e.patch_block() - base.patch_block(),
    }
}

/// Iterative graph perturbation on the attacked matrix `attacked` for target `i`.
///
/// Each iteration takes a closest-boundary step on row `i`'s patch entries and
/// then a descent step on the loss of every other supervised node, masked to
/// the border blocks outside row and column `i`. The loop stops when `i`'s
/// prediction on `clip01(attacked + Δ)` leaves `pred` or after `max_iter` steps.
pub fn igp(
    model: &BoundModel,
    attacked: &PatchedAdjacency,
    sup: Supervision,
    i: usize,
    pred: usize,
    hyper: &AttackHyper,
) -> Result<IgpResult> {
    let n = attacked.n();
    if i >= n {
        return Err(GuapError::InvalidTarget { target: i, n });
    }
    let mut delta = BorderBlocks::zeros(n, attacked.m());
    let mut e = attacked.clone();
    let mut iterations = 0;
    loop {
        let jac = model.output_jacobian_row(&e, i)?;
        let success = argmax(jac.output_logits.view()) != pred;
        if success || iterations >= hyper.max_iter {
            if hyper.clip_perturbation {
                delta = effective(attacked, &e);
            }
            return Ok(IgpResult {
                perturbation: delta,
                iterations,
                success,
            });
        }
        let v = deepfool_step(&jac, pred, n, i, hyper.deepfool_patch_norm)?;
        log::trace!(
            "node {i} iter {iterations}: z {:.4} row {:.3} v {:.3e}",
            jac.output,
            e.border().row(i),
            v
        );
        delta
            .border
            .row_mut(i)
            .scaled_add(1.0 + hyper.overshoot, &v);
        e = perturbed(attacked, &delta);
        let grad = model.loss_gradient(&e, sup, Some(i))?.masked_border(Some(i));
        delta.scaled_add(-hyper.step, &grad);
        iterations += 1;
        e = perturbed(attacked, &delta);
    }
}
