use std::collections::HashMap;

use super::{HeteroGraph, NodeRef};
use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Fanout value meaning "take every neighbour".
pub const UNLIMITED: usize = usize::MAX;

/// A sampled multi-hop neighbourhood with a compact local index.
///
/// Local ids are assigned in BFS order with the seeds first, so the nodes
/// discovered within `h` hops form the prefix `0..count_within(h)`. Every
/// node with hop `< num_hops()` is expanded exactly once; its sampled
/// neighbours under relation `r` are `neighbors_local(i, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborSample {
    nodes: Vec<NodeRef>,
    hop: Vec<usize>,
    num_seeds: usize,
    hop_counts: Vec<usize>,
    rel_offsets: Vec<Vec<usize>>,
    rel_members: Vec<Vec<usize>>,
    index: HashMap<NodeRef, usize>,
}

impl NeighborSample {
    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> NodeRef {
        self.nodes[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_seeds(&self) -> usize {
        self.num_seeds
    }

    pub fn seeds(&self) -> &[NodeRef] {
        &self.nodes[..self.num_seeds]
    }

    pub fn num_hops(&self) -> usize {
        self.hop_counts.len() - 1
    }

    pub fn hop_of(&self, i: usize) -> usize {
        self.hop[i]
    }

    /// Number of local nodes discovered within `h` hops of the seeds.
    pub fn count_within(&self, h: usize) -> usize {
        self.hop_counts[h.min(self.num_hops())]
    }

    /// Segment offsets over the expanded prefix for relation `r`.
    pub fn relation_offsets(&self, r: usize) -> &[usize] {
        &self.rel_offsets[r]
    }

    pub fn relation_members(&self, r: usize) -> &[usize] {
        &self.rel_members[r]
    }

    /// Sampled neighbours of local node `i` under relation `r`; empty for
    /// unexpanded nodes and nodes of another type.
    pub fn neighbors_local(&self, i: usize, r: usize) -> &[usize] {
        let off = &self.rel_offsets[r];
        if i + 1 >= off.len() {
            return &[];
        }
        &self.rel_members[r][off[i]..off[i + 1]]
    }

    pub fn local_index(&self, node: NodeRef) -> Option<usize> {
        self.index.get(&node).copied()
    }

    /// Local ids of type `t` within the first `n` local nodes.
    pub fn ids_of_type(&self, t: usize, n: usize) -> Vec<usize> {
        (0..n.min(self.nodes.len()))
            .filter(|&i| self.nodes[i].type_id == t)
            .collect()
    }
}

/// Samples up to `fanouts[h]` neighbours per (node, relation) at hop `h`,
/// uniformly without replacement. Deterministic given `rng`.
pub fn sample_neighborhood(
    g: &HeteroGraph,
    seeds: &[NodeRef],
    fanouts: &[usize],
    rng: Rng,
) -> Result<NeighborSample> {
    sample_neighborhood_filtered(g, seeds, fanouts, false, rng)
}

/// As [`sample_neighborhood`]; with `temporal` set, neighbours whose
/// timestamp is later than the originating seed's timestamp are excluded.
pub fn sample_neighborhood_filtered(
    g: &HeteroGraph,
    seeds: &[NodeRef],
    fanouts: &[usize],
    temporal: bool,
    mut rng: Rng,
) -> Result<NeighborSample> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("empty seed list".into()));
    }
    let num_rel = g.num_relations();
    let mut nodes: Vec<NodeRef> = Vec::new();
    let mut hop = Vec::new();
    let mut cutoff: Vec<Option<i64>> = Vec::new();
    let mut index = HashMap::new();
    for &s in seeds {
        if s.type_id >= g.num_types() || s.row_id >= g.num_nodes(s.type_id) {
            return Err(Error::Graph(format!("seed {s:?} out of bounds")));
        }
        if index.insert(s, nodes.len()).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate seed {s:?}")));
        }
        nodes.push(s);
        hop.push(0);
        cutoff.push(if temporal { g.node_time(s) } else { None });
    }
    let num_seeds = nodes.len();
    let mut hop_counts = vec![num_seeds];
    let mut rel_offsets = vec![vec![0usize]; num_rel];
    let mut rel_members: Vec<Vec<usize>> = vec![Vec::new(); num_rel];
    let mut frontier = 0..num_seeds;
    let mut candidates = Vec::new();
    for (h, &fanout) in fanouts.iter().enumerate() {
        for i in frontier.clone() {
            let u = nodes[i];
            for r in 0..num_rel {
                let rel = g.relation(r);
                if rel.src_type == u.type_id {
                    candidates.clear();
                    candidates.extend(g.adjacency(r).row(u.row_id).iter().copied().filter(|&v| {
                        match cutoff[i] {
                            Some(c) => g
                                .node_time(NodeRef::new(rel.dst_type, v))
                                .is_none_or(|t| t <= c),
                            None => true,
                        }
                    }));
                    let picked: Vec<usize> = if candidates.len() <= fanout {
                        candidates.clone()
                    } else {
                        let mut idx = rng.sample_indices(candidates.len(), fanout);
                        idx.sort_unstable();
                        idx.into_iter().map(|k| candidates[k]).collect()
                    };
                    for v in picked {
                        let node = NodeRef::new(rel.dst_type, v);
                        let local = *index.entry(node).or_insert_with(|| {
                            nodes.push(node);
                            hop.push(h + 1);
                            cutoff.push(cutoff[i]);
                            nodes.len() - 1
                        });
                        rel_members[r].push(local);
                    }
                }
                rel_offsets[r].push(rel_members[r].len());
            }
        }
        frontier = frontier.end..nodes.len();
        hop_counts.push(nodes.len());
    }
    Ok(NeighborSample {
        nodes,
        hop,
        num_seeds,
        hop_counts,
        rel_offsets,
        rel_members,
        index,
    })
}
