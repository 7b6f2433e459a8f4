//! Stage orchestration: ingest, detect and score, separately or in one run.

use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::graph::{
    build_graph, filter_isolated_edges, filter_mcs, weakly_connected_components, FilteredGraph, GraphSnapshot,
    TransactionGraph,
};
use crate::ingest::{compute_primitive_weights, merge_edges, parse_transactions, TimeWindow, TransactionRecord};
use crate::louvain::{run_louvain, CommunityState, LouvainResult, WeightedDigraph};
use crate::risk::{community_metrics, score_communities, RiskReport};
use crate::weighting::apply_weights;
use crate::{Error, Result};

/// Counts at each step of a run, for auditing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Funnel {
    pub raw_rows: usize,
    pub malformed_rows: usize,
    pub out_of_window_rows: usize,
    pub transactions: usize,
    pub accounts: usize,
    pub merged_edges: usize,
    pub pruned_nodes: usize,
    pub pruned_edges: usize,
    pub mcs_count: usize,
    pub kept_mcs: usize,
    pub filtered_nodes: usize,
    pub filtered_edges: usize,
    pub communities: usize,
    pub modularity: f64,
}

/// Parsed input transactions and the window they were read against.
#[derive(Debug, Clone)]
pub struct Input {
    pub records: Vec<TransactionRecord>,
    pub window: TimeWindow,
}

/// Reads the input CSV. Without a configured window, the window spans the
/// observed timestamps.
pub fn load_input(path: &Path, window: Option<TimeWindow>, funnel: &mut Funnel) -> Result<Input> {
    let read_window = window.unwrap_or(TimeWindow {
        start: i64::MIN / 4,
        end: i64::MAX / 4,
    });
    let parsed = parse_transactions(path, &read_window)?;
    funnel.raw_rows = parsed.total_rows;
    funnel.malformed_rows = parsed.malformed;
    funnel.out_of_window_rows = parsed.out_of_window;
    funnel.transactions = parsed.records.len();
    if parsed.malformed > 0 {
        warn!("skipped {} malformed rows", parsed.malformed);
    }
    info!(
        "read {} rows: {} transactions, {} outside the window",
        parsed.total_rows,
        parsed.records.len(),
        parsed.out_of_window
    );
    let window = match window {
        Some(w) => w,
        None => {
            let lo = parsed.records.iter().map(|r| r.timestamp).min().unwrap_or(0);
            let hi = parsed.records.iter().map(|r| r.timestamp).max().unwrap_or(0);
            let w = TimeWindow::new(lo, hi + 1)?;
            info!("window inferred as [{}, {})", w.start, w.end);
            w
        }
    };
    Ok(Input {
        records: parsed.records,
        window,
    })
}

/// Merges transfers into weighted edges, prunes isolated edges and labels
/// weakly connected components.
pub fn ingest_records(input: &Input, cfg: &PipelineConfig, funnel: &mut Funnel) -> Result<GraphSnapshot> {
    let mut merged = merge_edges(&input.records);
    compute_primitive_weights(&mut merged.edges, &cfg.weights.primitive())?;
    funnel.accounts = merged.accounts.len();
    funnel.merged_edges = merged.edges.len();
    let g = build_graph(merged, input.window)?;
    let pruned = filter_isolated_edges(&g, cfg.iterate_prune);
    funnel.pruned_nodes = pruned.node_count();
    funnel.pruned_edges = pruned.edge_count();
    info!(
        "merged {} transactions into {} edges over {} accounts; {} edges on {} nodes after pruning",
        input.records.len(),
        g.edge_count(),
        g.node_count(),
        pruned.edge_count(),
        pruned.node_count()
    );
    let components = weakly_connected_components(&pruned);
    Ok(GraphSnapshot::new(pruned, components))
}

/// The MCS-filtered graph with final edge weights, ready for detection.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub filtered: FilteredGraph,
    pub digraph: WeightedDigraph,
}

pub fn weighted_digraph(g: &TransactionGraph) -> Result<WeightedDigraph> {
    let arcs: Vec<(u32, u32, f64)> = g.edges.iter().map(|e| (e.src, e.dst, e.w_e)).collect();
    WeightedDigraph::from_arcs(g.node_count(), &arcs)
}

pub fn prepare(snapshot: &GraphSnapshot, cfg: &PipelineConfig, funnel: &mut Funnel) -> Result<Prepared> {
    let mut filtered = filter_mcs(&snapshot.graph, &snapshot.components, &cfg.filter)?;
    funnel.mcs_count = filtered.mcs.len();
    funnel.kept_mcs = filtered.mcs.iter().filter(|m| m.kept).count();
    funnel.filtered_nodes = filtered.graph.node_count();
    funnel.filtered_edges = filtered.graph.edge_count();
    info!(
        "{} of {} MCSs kept: {} nodes, {} edges",
        funnel.kept_mcs,
        funnel.mcs_count,
        funnel.filtered_nodes,
        funnel.filtered_edges
    );
    if filtered.graph.is_empty() {
        warn!("no MCS passed the filters; the report will be empty");
    } else {
        apply_weights(&mut filtered.graph, &cfg.weights)?;
    }
    let digraph = weighted_digraph(&filtered.graph)?;
    Ok(Prepared { filtered, digraph })
}

pub fn detect(prepared: &Prepared, cfg: &PipelineConfig, funnel: &mut Funnel) -> Result<LouvainResult> {
    let result = run_louvain(&prepared.digraph, &cfg.louvain)?;
    funnel.communities = result.community_count();
    funnel.modularity = result.modularity;
    info!(
        "{} communities over {} levels, Q_D = {:.6}",
        funnel.communities,
        result.levels.len(),
        result.modularity
    );
    Ok(result)
}

/// Modularity of an externally supplied assignment on the prepared graph.
pub fn assignment_modularity(prepared: &Prepared, assignment: &[u32]) -> Result<f64> {
    if prepared.digraph.node_count() == 0 {
        return Ok(0.0);
    }
    Ok(CommunityState::from_assignment(&prepared.digraph, assignment.to_vec())?.modularity(&prepared.digraph))
}

pub fn score(
    prepared: &Prepared,
    assignment: &[u32],
    modularity: f64,
    input: &Input,
    cfg: &PipelineConfig,
) -> Result<RiskReport> {
    let g = &prepared.filtered.graph;
    let metrics = community_metrics(g, assignment, &prepared.filtered.mcs_of, &input.records, cfg.entropy_bins)?;
    let report = score_communities(metrics, &cfg.risk_weights, &cfg.levels, modularity)?;
    let suspicious = report.mcs.iter().filter(|m| m.suspicious).count();
    info!(
        "scored {} communities; {} of {} MCSs suspicious",
        report.communities.len(),
        suspicious,
        report.mcs.len()
    );
    Ok(report)
}

/// Everything a one-shot run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub snapshot: GraphSnapshot,
    pub prepared: Prepared,
    pub louvain: LouvainResult,
    pub report: RiskReport,
    pub funnel: Funnel,
}

/// Runs every stage on already-parsed input.
pub fn run_on_input(input: &Input, cfg: &PipelineConfig, mut funnel: Funnel) -> Result<PipelineOutput> {
    cfg.validate()?;
    let snapshot = ingest_records(input, cfg, &mut funnel).map_err(|e| e.in_stage("ingest"))?;
    let prepared = prepare(&snapshot, cfg, &mut funnel).map_err(|e| e.in_stage("detect"))?;
    let louvain = detect(&prepared, cfg, &mut funnel).map_err(|e| e.in_stage("detect"))?;
    let report =
        score(&prepared, &louvain.assignment, louvain.modularity, input, cfg).map_err(|e| e.in_stage("score"))?;
    Ok(PipelineOutput {
        snapshot,
        prepared,
        louvain,
        report,
        funnel,
    })
}

pub fn run_pipeline(path: &Path, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let mut funnel = Funnel::default();
    let input = load_input(path, cfg.window, &mut funnel).map_err(|e| e.in_stage("ingest"))?;
    run_on_input(&input, cfg, funnel)
}

/// Runs `f` on a thread pool sized by `worker_count` (all cores if unset).
pub fn with_workers<T: Send>(worker_count: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start {worker_count:?} workers: {e}")))?;
    Ok(pool.install(f))
}
