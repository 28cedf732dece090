use std::collections::VecDeque;

use super::Graph;
use crate::error::{GuapError, Result};

/// Connected component labels; components are numbered in order of their
/// smallest node index.
fn component_labels(g: &Graph) -> (Vec<usize>, Vec<usize>) {
    let adj = g.adjacency();
    let n = adj.n();
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in adj.neighbors(u) {
                if label[v] == usize::MAX {
                    label[v] = id;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Sorted indices of the largest connected component.
///
/// Ties between equally large components go to the one containing the
/// smallest node index.
pub fn largest_component_nodes(g: &Graph) -> Result<Vec<usize>> {
    if g.n() == 0 {
        return Err(GuapError::EmptyGraph);
    }
    let (label, sizes) = component_labels(g);
    // first maximum wins, and components are discovered in index order
    let best = sizes
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (id, &s)| if s > acc.1 { (id, s) } else { acc })
        .0;
    Ok((0..g.n()).filter(|&i| label[i] == best).collect())
}

/// Induced subgraph on the largest connected component; node order is preserved.
pub fn largest_connected_component(g: &Graph) -> Result<Graph> {
    let keep = largest_component_nodes(g)?;
    if keep.len() == g.n() {
        return Ok(g.clone());
    }
    g.induced(&keep)
}
