use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::PatchedAdjacency;

/// `D̃^{-1/2} (A_new + I) D̃^{-1/2}` applied without densifying the original block.
///
/// The n×n part is walked through the sparse structure, the border and
/// patch blocks through dense products. Degrees use the continuous border
/// weights, so this also works while `B` and `C` are relaxed to [0, 1].
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency<'a> {
    adj: &'a PatchedAdjacency,
    inv_sqrt_deg: Array1<f64>,
}

impl<'a> NormalizedAdjacency<'a> {
    pub fn new(adj: &'a PatchedAdjacency) -> Self {
        let inv_sqrt_deg = adj.degrees().into_iter().map(|d| 1.0 / d.sqrt()).collect();
        Self { adj, inv_sqrt_deg }
    }

    pub fn dim(&self) -> usize {
        self.adj.total()
    }

    pub fn n(&self) -> usize {
        self.adj.n()
    }

    pub fn m(&self) -> usize {
        self.adj.m()
    }

    pub fn inv_sqrt_deg(&self) -> &Array1<f64> {
        &self.inv_sqrt_deg
    }

    pub fn adjacency(&self) -> &PatchedAdjacency {
        self.adj
    }

    /// `Â[a, b]`.
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        let tilde = self.adj.entry(a, b) + if a == b { 1.0 } else { 0.0 };
        self.inv_sqrt_deg[a] * tilde * self.inv_sqrt_deg[b]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let t = self.dim();
        Array2::from_shape_fn((t, t), |(a, b)| self.entry(a, b))
    }

    /// Row `a` of `Â` as a dense vector.
    pub fn row(&self, a: usize) -> Array1<f64> {
        let n = self.n();
        let s = &self.inv_sqrt_deg;
        let mut out = Array1::zeros(self.dim());
        if a < n {
            out[a] = 1.0;
            for &b in self.adj.original().neighbors(a) {
                out[b] = 1.0;
            }
            out.slice_mut(s![n..]).assign(&self.adj.border().row(a));
        } else {
            let p = a - n;
            out.slice_mut(s![..n]).assign(&self.adj.border().column(p));
            out.slice_mut(s![n..]).assign(&self.adj.patch_block().row(p));
            out[a] += 1.0;
        }
        out *= s;
        out *= s[a];
        out
    }

    /// `Â · y`.
    pub fn apply(&self, y: ArrayView2<f64>) -> Array2<f64> {
        self.product(y, false)
    }

    /// `Âᵀ · y`. Differs from [`apply`](Self::apply) only when `B` is not symmetric.
    pub fn apply_transpose(&self, y: ArrayView2<f64>) -> Array2<f64> {
        self.product(y, true)
    }

    fn product(&self, y: ArrayView2<f64>, transpose: bool) -> Array2<f64> {
        let n = self.n();
        let s = &self.inv_sqrt_deg;
        assert_eq!(y.nrows(), self.dim(), "operand has wrong row count");
        let ys = &y * &s.view().insert_axis(Axis(1));
        let (top, bottom) = ys.view().split_at(Axis(0), n);
        let original = self.adj.original();
        let border = self.adj.border();

        // self loops: Ã = A_new + I
        let mut out = ys.clone();
        {
            let (mut out_top, mut out_bottom) = out.view_mut().split_at(Axis(0), n);
            for a in 0..n {
                let mut row = out_top.row_mut(a);
                for &b in original.neighbors(a) {
                    row += &top.row(b);
                }
            }
            if self.m() > 0 {
                out_top += &border.dot(&bottom);
                out_bottom += &border.t().dot(&top);
                let block = self.adj.patch_block();
                if transpose {
                    out_bottom += &block.t().dot(&bottom);
                } else {
                    out_bottom += &block.dot(&bottom);
                }
            }
        }
        out *= &s.view().insert_axis(Axis(1));
        out
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_abs_diff_eq;
    use ndarray::array;

    use super::*;
    use crate::graph::CsrAdjacency;

    #[test]
    fn single_isolated_node_normalizes_to_one() {
        let adj = PatchedAdjacency::empty(Arc::new(CsrAdjacency::empty(1)), 0);
        assert_eq!(NormalizedAdjacency::new(&adj).to_dense(), array![[1.0]]);
    }

    #[test]
    fn single_edge_gives_all_halves() {
        let adj =
            PatchedAdjacency::empty(Arc::new(CsrAdjacency::from_edges(2, &[(0, 1)]).unwrap()), 0);
        let norm = NormalizedAdjacency::new(&adj).to_dense();
        for &x in norm.iter() {
            assert_abs_diff_eq!(x, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn weighted_border_entry_uses_continuous_degree() {
        // one original node, one patch node, C = 0.5
        let adj = PatchedAdjacency::from_blocks(
            Arc::new(CsrAdjacency::empty(1)),
            array![[0.5]],
            array![[0.0]],
        )
        .unwrap();
        let norm = NormalizedAdjacency::new(&adj);
        assert_abs_diff_eq!(norm.entry(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norm.entry(1, 0), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn hybrid_product_matches_dense() {
        let orig = Arc::new(CsrAdjacency::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap());
        let adj = PatchedAdjacency::from_blocks(
            orig,
            array![[0.2, 1.0], [0.0, 0.5], [0.9, 0.0], [0.1, 0.3]],
            array![[0.0, 0.7], [0.4, 0.2]],
        )
        .unwrap();
        let norm = NormalizedAdjacency::new(&adj);
        let dense = norm.to_dense();
        let y = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 + 1.0) * 0.3 - j as f64);
        let fast = norm.apply(y.view());
        let slow = dense.dot(&y);
        let fast_t = norm.apply_transpose(y.view());
        let slow_t = dense.t().dot(&y);
        for (a, b) in fast.iter().zip(slow.iter()).chain(fast_t.iter().zip(slow_t.iter())) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        for a in 0..6 {
            let row = norm.row(a);
            for b in 0..6 {
                assert_abs_diff_eq!(row[b], dense[[a, b]], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn binary_normalization_is_symmetric_and_bounded() {
        let orig = Arc::new(CsrAdjacency::from_edges(5, &[(0, 1), (1, 2), (3, 4), (0, 2)]).unwrap());
        let adj = PatchedAdjacency::from_blocks(
            orig,
            array![[1.0], [0.0], [0.0], [1.0], [1.0]],
            array![[0.0]],
        )
        .unwrap();
        let dense = NormalizedAdjacency::new(&adj).to_dense();
        assert_eq!(dense.t().to_owned(), dense);
        assert!(dense.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(dense.diag().iter().all(|&x| x > 0.0));
    }
}
