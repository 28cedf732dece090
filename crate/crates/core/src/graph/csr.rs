use crate::error::{GuapError, Result};

/// Binary symmetric adjacency in compressed sparse row form.
///
/// Only the column structure is stored; every present entry has weight 1.
/// The diagonal is always empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrAdjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl CsrAdjacency {
    /// Empty graph on `n` nodes.
    pub fn empty(n: usize) -> Self {
        Self {
            indptr: vec![0; n + 1],
            indices: Vec::new(),
        }
    }

    /// Builds the adjacency of an undirected graph from an edge list.
    ///
    /// Edges are symmetrized and deduplicated; self loops are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GuapError::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                continue;
            }
            rows[a].push(b);
            rows[b].push(a);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            indices.extend(row);
            indptr.push(indices.len());
        }
        Ok(Self { indptr, indices })
    }

    pub fn n(&self) -> usize {
        self.indptr.len() - 1
    }

    /// Number of stored (directed) entries, i.e. twice the undirected edge count.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nnz() / 2
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        &self.indices[self.indptr[row]..self.indptr[row + 1]]
    }

    pub fn degree(&self, row: usize) -> usize {
        self.indptr[row + 1] - self.indptr[row]
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.neighbors(row).binary_search(&col).is_ok()
    }

    /// Undirected edges `(a, b)` with `a < b`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |a| {
            self.neighbors(a)
                .iter()
                .copied()
                .filter(move |&b| a < b)
                .map(move |b| (a, b))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n()).all(|a| self.neighbors(a).iter().all(|&b| self.contains(b, a)))
    }

    /// Induced subgraph on `keep` (sorted, unique old indices), relabelled 0..keep.len().
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut remap = vec![usize::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let mut indptr = Vec::with_capacity(keep.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for &old in keep {
            // neighbors are sorted and `remap` is monotone on `keep`
            indices.extend(
                self.neighbors(old)
                    .iter()
                    .map(|&b| remap[b])
                    .filter(|&b| b != usize::MAX),
            );
            indptr.push(indices.len());
        }
        Self { indptr, indices }
    }
}
