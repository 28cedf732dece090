use std::sync::Arc;

use ndarray::{Array2, Zip};

use super::CsrAdjacency;
use crate::error::{GuapError, Result};

/// The attack matrix `P` for one target.
///
/// Row and column `target` equal the attack vector `[0; n] ++ [1; m]`; every
/// other entry is zero. It is only ever queried entry-wise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackMask {
    pub target: usize,
    pub n: usize,
    pub m: usize,
}

impl AttackMask {
    pub fn new(target: usize, n: usize, m: usize) -> Result<Self> {
        if target >= n {
            return Err(GuapError::InvalidTarget { target, n });
        }
        Ok(Self { target, n, m })
    }

    /// Entry `p_j` of the attack vector.
    pub fn vector_entry(&self, j: usize) -> f64 {
        if j >= self.n && j < self.n + self.m {
            1.0
        } else {
            0.0
        }
    }

    /// Entry `P_ab` of the attack matrix.
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        if a == self.target {
            self.vector_entry(b)
        } else if b == self.target {
            self.vector_entry(a)
        } else {
            0.0
        }
    }
}

/// Additive perturbation supported on the border blocks only; its n×n block is
/// zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderBlocks {
    pub border: Array2<f64>,
    pub patch_block: Array2<f64>,
}

impl BorderBlocks {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            border: Array2::zeros((n, m)),
            patch_block: Array2::zeros((m, m)),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.patch_block == self.patch_block.t()
    }

    /// Zeroes every entry in row and column `node` of the full matrix.
    pub fn zero_node(&mut self, n: usize, node: usize) {
        if node < n {
            self.border.row_mut(node).fill(0.0);
        } else {
            let p = node - n;
            self.border.column_mut(p).fill(0.0);
            self.patch_block.row_mut(p).fill(0.0);
            self.patch_block.column_mut(p).fill(0.0);
        }
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &BorderBlocks) {
        self.border.scaled_add(alpha, &other.border);
        self.patch_block.scaled_add(alpha, &other.patch_block);
    }
}

/// Block adjacency `[[A, C], [Cᵀ, B]]` of the patched graph.
///
/// `A` is shared and never written; only `C` (n×m) and `B` (m×m) change.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedAdjacency {
    original: Arc<CsrAdjacency>,
    border: Array2<f64>,
    patch_block: Array2<f64>,
}

impl PatchedAdjacency {
    pub fn empty(original: Arc<CsrAdjacency>, m: usize) -> Self {
        let n = original.n();
        Self {
            original,
            border: Array2::zeros((n, m)),
            patch_block: Array2::zeros((m, m)),
        }
    }

    pub fn from_blocks(
        original: Arc<CsrAdjacency>,
        border: Array2<f64>,
        patch_block: Array2<f64>,
    ) -> Result<Self> {
        let n = original.n();
        let m = patch_block.nrows();
        if border.dim() != (n, m) || patch_block.ncols() != m {
            return Err(GuapError::Dimension(format!(
                "border {:?} and patch block {:?} do not fit n = {n}",
                border.dim(),
                patch_block.dim()
            )));
        }
        Ok(Self {
            original,
            border,
            patch_block,
        })
    }

    pub fn n(&self) -> usize {
        self.original.n()
    }

    pub fn m(&self) -> usize {
        self.patch_block.nrows()
    }

    pub fn total(&self) -> usize {
        self.n() + self.m()
    }

    pub fn original(&self) -> &Arc<CsrAdjacency> {
        &self.original
    }

    pub fn border(&self) -> &Array2<f64> {
        &self.border
    }

    pub fn patch_block(&self) -> &Array2<f64> {
        &self.patch_block
    }

    /// Mutable access to `C` and `B`; the original block stays out of reach.
    pub fn blocks_mut(&mut self) -> (&mut Array2<f64>, &mut Array2<f64>) {
        (&mut self.border, &mut self.patch_block)
    }

    pub fn into_blocks(self) -> (Array2<f64>, Array2<f64>) {
        (self.border, self.patch_block)
    }

    /// Entry `(a, b)` of the full (n+m)×(n+m) matrix.
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        let n = self.n();
        match (a < n, b < n) {
            (true, true) => {
                if self.original.contains(a, b) {
                    1.0
                } else {
                    0.0
                }
            }
            (true, false) => self.border[[a, b - n]],
            (false, true) => self.border[[b, a - n]],
            (false, false) => self.patch_block[[a - n, b - n]],
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let t = self.total();
        Array2::from_shape_fn((t, t), |(a, b)| self.entry(a, b))
    }

    /// Flips the target's connections to every patch node, `x ↦ 1 − x`.
    ///
    /// Applying it twice restores the input, so the same call undoes an attack.
    pub fn attack_flip(&self, target: usize) -> Result<Self> {
        let mut out = self.clone();
        out.flip_in_place(target)?;
        Ok(out)
    }

    pub fn flip_in_place(&mut self, target: usize) -> Result<()> {
        let mask = AttackMask::new(target, self.n(), self.m())?;
        self.border
            .row_mut(mask.target)
            .mapv_inplace(|x| 1.0 - x);
        Ok(())
    }

    /// Adds a border-supported perturbation.
    pub fn add_perturbation(&mut self, delta: &BorderBlocks) {
        self.border += &delta.border;
        self.patch_block += &delta.patch_block;
    }

    /// Projects every patch node's incident-edge vector onto the L2 ball.
    pub fn l2_project_patch_columns(&self, radius: f64) -> Result<Self> {
        let mut out = self.clone();
        out.l2_project_in_place(radius)?;
        Ok(out)
    }

    /// In-place projection.
    ///
    /// `B` is first symmetrized. Patch node `p` gets the scale factor
    /// `f_p = min(1, radius / ‖v_p‖)` where `v_p` is column `p` of `[C; B]`
    /// without `B[p, p]`. Border entries scale by `f_p`; a shared entry
    /// `B[p, q]` scales by `min(f_p, f_q)`, which keeps `B` symmetric and every
    /// column inside the ball.
    pub fn l2_project_in_place(&mut self, radius: f64) -> Result<()> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GuapError::hyper("radius", format!("must be positive, got {radius}")));
        }
        let m = self.m();
        symmetrize(&mut self.patch_block);
        let factors: Vec<f64> = (0..m)
            .map(|p| {
                let border_sq: f64 = self.border.column(p).iter().map(|x| x * x).sum();
                let block_sq: f64 = self
                    .patch_block
                    .column(p)
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != p)
                    .map(|(_, x)| x * x)
                    .sum();
                let norm = (border_sq + block_sq).sqrt();
                if norm > radius {
                    radius / norm
                } else {
                    1.0
                }
            })
            .collect();
        for (p, &f) in factors.iter().enumerate() {
            if f < 1.0 {
                self.border.column_mut(p).mapv_inplace(|x| x * f);
            }
        }
        for p in 0..m {
            for q in 0..m {
                if p != q {
                    self.patch_block[[p, q]] *= factors[p].min(factors[q]);
                }
            }
        }
        Ok(())
    }

    /// L2 norm of each patch node's incident-edge vector (diagonal excluded).
    pub fn patch_column_norms(&self) -> Vec<f64> {
        (0..self.m())
            .map(|p| {
                let b: f64 = self.border.column(p).iter().map(|x| x * x).sum();
                let pb: f64 = self
                    .patch_block
                    .column(p)
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != p)
                    .map(|(_, x)| x * x)
                    .sum();
                (b + pb).sqrt()
            })
            .collect()
    }

    pub fn clip01_and_zero_diag(&self) -> Self {
        let mut out = self.clone();
        out.clip01_and_zero_diag_in_place();
        out
    }

    pub fn clip01_and_zero_diag_in_place(&mut self) {
        self.clip01_in_place();
        self.patch_block.diag_mut().fill(0.0);
    }

    /// Clamps the border blocks to [0, 1] without touching the diagonal.
    pub fn clip01_in_place(&mut self) {
        self.border.mapv_inplace(|x| x.clamp(0.0, 1.0));
        self.patch_block.mapv_inplace(|x| x.clamp(0.0, 1.0));
    }

    /// Sets border entries to 1 where strictly greater than `threshold`, else 0.
    pub fn binarize(&self, threshold: f64) -> Self {
        let mut out = self.clone();
        out.binarize_in_place(threshold);
        out
    }

    pub fn binarize_in_place(&mut self, threshold: f64) {
        let f = |x: f64| if x > threshold { 1.0 } else { 0.0 };
        self.border.mapv_inplace(f);
        self.patch_block.mapv_inplace(f);
    }

    pub fn is_binary(&self) -> bool {
        let bin = |x: &f64| *x == 0.0 || *x == 1.0;
        self.border.iter().all(bin) && self.patch_block.iter().all(bin)
    }

    pub fn patch_block_is_symmetric(&self) -> bool {
        self.patch_block == self.patch_block.t()
    }

    /// Undirected patch edges: border entries plus off-diagonal upper-triangle
    /// entries of `B` that are strictly above 0.5.
    pub fn patch_edge_count(&self) -> usize {
        let m = self.m();
        let border = self.border.iter().filter(|&&x| x > 0.5).count();
        let block = (0..m)
            .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
            .filter(|&(p, q)| self.patch_block[[p, q]] > 0.5)
            .count();
        border + block
    }

    /// Row sums of `Ã = A_new + I`.
    pub fn degrees(&self) -> Vec<f64> {
        let n = self.n();
        let mut deg: Vec<f64> = (0..n)
            .map(|a| 1.0 + self.original.degree(a) as f64 + self.border.row(a).sum())
            .collect();
        for p in 0..self.m() {
            deg.push(1.0 + self.border.column(p).sum() + self.patch_block.row(p).sum());
        }
        deg
    }
}

fn symmetrize(b: &mut Array2<f64>) {
    let t = b.t().to_owned();
    Zip::from(&mut *b).and(&t).for_each(|x, &y| *x = 0.5 * (*x + y));
}
