//! Fixed-length, masked first-order neighborhood sequences.

use rand::seq::index;
use rand::Rng;

use crate::error::{GapError, Result};
use crate::graph::Graph;

/// A neighborhood of `owner`, padded (or subsampled) to a fixed length.
///
/// Valid entries always form a prefix; the remaining slots hold the PAD
/// sentinel, which is the index one past the last real node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSeq {
    pub owner: usize,
    pub node_ids: Vec<usize>,
    pub valid: usize,
    pub pad: usize,
}

impl NeighborhoodSeq {
    /// Builds a sequence from explicit ids, all of which are valid.
    pub fn from_ids(owner: usize, ids: &[usize], len: usize, pad: usize) -> Result<Self> {
        if len == 0 {
            return Err(GapError::arg("sequence length must be at least 1"));
        }
        if ids.is_empty() || ids.len() > len {
            return Err(GapError::arg(format!(
                "need between 1 and {len} valid ids, got {}",
                ids.len()
            )));
        }
        let mut node_ids = ids.to_vec();
        node_ids.resize(len, pad);
        Ok(NeighborhoodSeq {
            owner,
            node_ids,
            valid: ids.len(),
            pad,
        })
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn is_valid(&self, pos: usize) -> bool {
        pos < self.valid
    }

    pub fn valid_ids(&self) -> &[usize] {
        &self.node_ids[..self.valid]
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_valid(i)).collect()
    }
}

/// Union of out- and in-neighbors of `u`, or `[u]` when it has none.
pub fn first_order_neighbors(g: &Graph, u: usize) -> Result<Vec<usize>> {
    if u >= g.num_nodes() {
        return Err(GapError::arg(format!(
            "node {u} out of range for n={}",
            g.num_nodes()
        )));
    }
    let (out, inn) = (g.out_neighbors(u), g.in_neighbors(u));
    // both lists are sorted; merge without duplicates
    let mut merged = Vec::with_capacity(out.len() + inn.len());
    let (mut i, mut j) = (0, 0);
    while i < out.len() || j < inn.len() {
        let next = match (out.get(i), inn.get(j)) {
            (Some(&a), Some(&b)) if a == b => {
                i += 1;
                j += 1;
                a
            }
            (Some(&a), Some(&b)) if a < b => {
                i += 1;
                a
            }
            (Some(_), Some(&b)) => {
                j += 1;
                b
            }
            (Some(&a), None) => {
                i += 1;
                a
            }
            (None, Some(&b)) => {
                j += 1;
                b
            }
            (None, None) => unreachable!(),
        };
        merged.push(next);
    }
    if merged.is_empty() {
        merged.push(u);
    }
    Ok(merged)
}

/// Pads `neighbors` to `len`, or draws a uniform `len`-subset when there are more.
pub fn materialize<R: Rng + ?Sized>(
    owner: usize,
    neighbors: &[usize],
    len: usize,
    pad: usize,
    rng: &mut R,
) -> Result<NeighborhoodSeq> {
    if len == 0 {
        return Err(GapError::arg("sequence length must be at least 1"));
    }
    if neighbors.is_empty() {
        return Err(GapError::arg(format!("node {owner} has an empty neighborhood")));
    }
    if neighbors.len() <= len {
        return NeighborhoodSeq::from_ids(owner, neighbors, len, pad);
    }
    let picked: Vec<usize> = index::sample(rng, neighbors.len(), len)
        .into_iter()
        .map(|i| neighbors[i])
        .collect();
    NeighborhoodSeq::from_ids(owner, &picked, len, pad)
}

/// First-order neighborhood of `u` in `g`, materialized to length `len`.
pub fn neighborhood<R: Rng + ?Sized>(g: &Graph, u: usize, len: usize, rng: &mut R) -> Result<NeighborhoodSeq> {
    let neighbors = first_order_neighbors(g, u)?;
    materialize(u, &neighbors, len, g.num_nodes(), rng)
}
