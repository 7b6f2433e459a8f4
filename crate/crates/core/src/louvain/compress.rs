use rayon::prelude::*;

use super::{CommunityState, WeightedDigraph};
use crate::Result;

/// The graph of communities produced by one level.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedGraph {
    pub graph: WeightedDigraph,
    /// Nodes of the previous level folded into each new node.
    pub members: Vec<Vec<u32>>,
    /// New node of each previous-level node.
    pub node_map: Vec<u32>,
}

/// Collapses every community into one node. Intra-community arcs become the
/// new node's self-loop and arcs between two communities are summed per
/// direction. New node ids follow ascending community tag.
pub fn compress(g: &WeightedDigraph, s: &CommunityState) -> Result<CompressedGraph> {
    let n = g.node_count();
    let mut dense = vec![u32::MAX; n];
    let mut members: Vec<Vec<u32>> = Vec::new();
    for (next, c) in s.communities().enumerate() {
        dense[c as usize] = next as u32;
        members.push(Vec::new());
    }
    let node_map: Vec<u32> = s.assignment().iter().map(|&c| dense[c as usize]).collect();
    for (i, &c) in node_map.iter().enumerate() {
        members[c as usize].push(i as u32);
    }

    let mut arcs: Vec<(u32, u32, f64)> = g
        .arcs()
        .par_iter()
        .map(|&(a, b, w)| (node_map[a as usize], node_map[b as usize], w))
        .collect();
    // stable, so parallel arcs are summed in original order
    arcs.par_sort_by_key(|&(a, b, _)| (a, b));
    let graph = WeightedDigraph::from_arcs(members.len(), &arcs)?;
    Ok(CompressedGraph {
        graph,
        members,
        node_map,
    })
}
