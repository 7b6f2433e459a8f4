//! The directed transaction graph, noise pruning and MCS extraction.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{Amount, MergedEdge, MergedEdges, NodeId, TimeWindow};
use crate::{Error, Result};

/// Per-node aggregates over merged edges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub deg_in: u32,
    pub deg_out: u32,
    pub money_in: Amount,
    pub money_out: Amount,
    pub count_in: u64,
    pub count_out: u64,
    /// Mean time point of all inbound transfers, `None` without inbound edges.
    pub t_in_mean: Option<f64>,
    /// Mean time point of all outbound transfers, `None` without outbound edges.
    pub t_out_mean: Option<f64>,
}

impl NodeStats {
    pub fn deg(&self) -> u32 {
        self.deg_in + self.deg_out
    }

    pub fn total_money(&self) -> Amount {
        Amount(self.money_in.0 + self.money_out.0)
    }

    pub fn total_count(&self) -> u64 {
        self.count_in + self.count_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionGraph {
    pub window: TimeWindow,
    /// Account ids sorted lexicographically; `NodeId` indexes this table.
    pub accounts: Vec<String>,
    pub stats: Vec<NodeStats>,
    /// Unique `(src, dst)` edges sorted by key.
    pub edges: Vec<MergedEdge>,
}

impl TransactionGraph {
    pub fn node_count(&self) -> usize {
        self.accounts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    /// Keeps the edges selected by `keep` and the nodes they touch, re-indexing
    /// nodes densely (order preserved) and recomputing node stats.
    ///
    /// Returns the new graph and the map from new to old node ids.
    pub fn subgraph<F>(&self, mut keep: F) -> (TransactionGraph, Vec<NodeId>)
    where
        F: FnMut(&MergedEdge) -> bool,
    {
        let kept: Vec<&MergedEdge> = self.edges.iter().filter(|e| keep(e)).collect();
        let mut used = vec![false; self.node_count()];
        for e in &kept {
            used[e.src as usize] = true;
            used[e.dst as usize] = true;
        }
        let mut remap = vec![NodeId::MAX; self.node_count()];
        let mut old_ids = Vec::new();
        for (old, _) in used.iter().enumerate().filter(|(_, u)| **u) {
            remap[old] = old_ids.len() as NodeId;
            old_ids.push(old as NodeId);
        }
        let edges: Vec<MergedEdge> = kept
            .into_iter()
            .map(|e| MergedEdge {
                src: remap[e.src as usize],
                dst: remap[e.dst as usize],
                ..e.clone()
            })
            .collect();
        let accounts = old_ids.iter().map(|&o| self.accounts[o as usize].clone()).collect();
        let stats = node_stats(old_ids.len(), &edges);
        (
            TransactionGraph {
                window: self.window,
                accounts,
                stats,
                edges,
            },
            old_ids,
        )
    }
}

fn node_stats(n: usize, edges: &[MergedEdge]) -> Vec<NodeStats> {
    let mut stats = vec![NodeStats::default(); n];
    let mut t_in = vec![0i128; n];
    let mut t_out = vec![0i128; n];
    for e in edges {
        let (s, d) = (e.src as usize, e.dst as usize);
        stats[s].deg_out += 1;
        stats[s].money_out.0 += e.money.0;
        stats[s].count_out += e.count;
        t_out[s] += e.time_sum;
        stats[d].deg_in += 1;
        stats[d].money_in.0 += e.money.0;
        stats[d].count_in += e.count;
        t_in[d] += e.time_sum;
    }
    for (i, st) in stats.iter_mut().enumerate() {
        if st.count_in > 0 {
            st.t_in_mean = Some(t_in[i] as f64 / st.count_in as f64);
        }
        if st.count_out > 0 {
            st.t_out_mean = Some(t_out[i] as f64 / st.count_out as f64);
        }
    }
    stats
}

/// Builds the graph and its node stats from merged edges.
///
/// Mean inbound/outbound times are count-weighted over edge means, which is
/// the same as the mean over the raw transactions.
pub fn build_graph(merged: MergedEdges, window: TimeWindow) -> Result<TransactionGraph> {
    window.validate()?;
    let MergedEdges { accounts, mut edges } = merged;
    let n = accounts.len();
    if let Some(e) = edges.iter().find(|e| e.src as usize >= n || e.dst as usize >= n) {
        return Err(Error::Structural(format!(
            "edge {}->{} references a node outside the {n}-account table",
            e.src, e.dst
        )));
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    if let Some(w) = edges.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
        return Err(Error::Structural(format!(
            "duplicate edge {} -> {}",
            accounts[w[0].src as usize], accounts[w[0].dst as usize]
        )));
    }
    let stats = node_stats(n, &edges);
    Ok(TransactionGraph {
        window,
        accounts,
        stats,
        edges,
    })
}

/// Drops edges whose two endpoints both have degree one, then nodes left
/// without edges. With `iterate` the pruning repeats until nothing changes.
pub fn filter_isolated_edges(g: &TransactionGraph, iterate: bool) -> TransactionGraph {
    let mut current = g.clone();
    loop {
        let stats = &current.stats;
        let before = current.edge_count();
        let (next, _) = current.subgraph(|e| !(stats[e.src as usize].deg() == 1 && stats[e.dst as usize].deg() == 1));
        let changed = next.edge_count() != before || next.node_count() != current.node_count();
        current = next;
        if !iterate || !changed {
            return current;
        }
    }
}

/// Disjoint-set forest over dense ids.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }
}

/// Weakly connected components. Each node is labelled with the smallest node
/// id in its component.
pub fn weakly_connected_components(g: &TransactionGraph) -> Vec<NodeId> {
    let n = g.node_count();
    let mut uf = UnionFind::new(n);
    for e in &g.edges {
        uf.union(e.src, e.dst);
    }
    let mut min_of_root = vec![NodeId::MAX; n];
    let roots: Vec<u32> = (0..n as u32).map(|i| uf.find(i)).collect();
    for (i, &r) in roots.iter().enumerate() {
        // ids are visited in ascending order, so the first one seen is the minimum
        if min_of_root[r as usize] == NodeId::MAX {
            min_of_root[r as usize] = i as NodeId;
        }
    }
    roots.iter().map(|&r| min_of_root[r as usize]).collect()
}

/// MCS scale and hub thresholds. All comparisons are strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    /// Keep MCSs with more than `v_min` nodes.
    pub v_min: usize,
    /// Keep MCSs with fewer than `v_max` nodes.
    pub v_max: usize,
    /// A hub has degree greater than `d_hub`.
    pub d_hub: u32,
    /// Keep MCSs with more than `n_hub_min` hubs.
    pub n_hub_min: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            v_min: 10,
            v_max: 2000,
            d_hub: 20,
            n_hub_min: 7,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.v_min >= self.v_max {
            return Err(Error::Config(format!(
                "v_min ({}) must be below v_max ({})",
                self.v_min, self.v_max
            )));
        }
        if self.d_hub < 1 {
            return Err(Error::Config("d_hub must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McsInfo {
    pub mcs_id: u32,
    pub node_count: usize,
    pub edge_count: usize,
    pub hub_count: usize,
    pub kept: bool,
}

/// The surviving subgraph after MCS filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredGraph {
    pub graph: TransactionGraph,
    /// MCS id of each node of `graph`.
    pub mcs_of: Vec<u32>,
    /// Every MCS of the input, kept or not, ordered by id.
    pub mcs: Vec<McsInfo>,
}

/// Groups component labels into MCSs numbered densely by smallest member.
pub fn mcs_infos(g: &TransactionGraph, components: &[NodeId], d_hub: u32) -> (Vec<u32>, Vec<McsInfo>) {
    let n = g.node_count();
    let mut dense = vec![u32::MAX; n];
    let mut infos: Vec<McsInfo> = Vec::new();
    let mut mcs_of = vec![0u32; n];
    for i in 0..n {
        let label = components[i] as usize;
        if dense[label] == u32::MAX {
            dense[label] = infos.len() as u32;
            infos.push(McsInfo {
                mcs_id: dense[label],
                node_count: 0,
                edge_count: 0,
                hub_count: 0,
                kept: false,
            });
        }
        let id = dense[label];
        mcs_of[i] = id;
        let info = &mut infos[id as usize];
        info.node_count += 1;
        if g.stats[i].deg() > d_hub {
            info.hub_count += 1;
        }
    }
    for e in &g.edges {
        infos[mcs_of[e.src as usize] as usize].edge_count += 1;
    }
    (mcs_of, infos)
}

/// Keeps the MCSs with `v_min < V < v_max` and more than `n_hub_min` hubs.
pub fn filter_mcs(g: &TransactionGraph, components: &[NodeId], th: &FilterThresholds) -> Result<FilteredGraph> {
    th.validate()?;
    if components.len() != g.node_count() {
        return Err(Error::InvalidInput(format!(
            "component labels cover {} nodes, graph has {}",
            components.len(),
            g.node_count()
        )));
    }
    let (mcs_of, mut mcs) = mcs_infos(g, components, th.d_hub);
    for info in &mut mcs {
        info.kept = th.v_min < info.node_count && info.node_count < th.v_max && info.hub_count > th.n_hub_min;
    }
    let (graph, old_ids) = g.subgraph(|e| mcs[mcs_of[e.src as usize] as usize].kept);
    let mcs_of = old_ids.iter().map(|&o| mcs_of[o as usize]).collect();
    Ok(FilteredGraph { graph, mcs_of, mcs })
}

pub const SNAPSHOT_FORMAT: &str = "amlgraph-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Serialized post-prune graph with its component labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub format: String,
    pub version: u32,
    pub graph: TransactionGraph,
    pub components: Vec<NodeId>,
}

impl GraphSnapshot {
    pub fn new(graph: TransactionGraph, components: Vec<NodeId>) -> Self {
        GraphSnapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            graph,
            components,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let snap: GraphSnapshot = serde_json::from_reader(BufReader::new(file))?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!(
                "unsupported snapshot {} v{}",
                snap.format, snap.version
            )));
        }
        if snap.components.len() != snap.graph.node_count() {
            return Err(Error::Format("snapshot component labels do not match node count".into()));
        }
        Ok(snap)
    }
}
