//! Community detection by maximizing a direction-corrected modularity.
//!
//! For a weighted digraph with symmetric weights `B = A + Aᵀ`, node weights
//! `k_i = k_in + k_out` and `2m = Σ_i k_i`, the objective is
//!
//! ```text
//! Q_D = 1/2m · Σ_ij [ B_ij − e^{δ_i−δ_j}·k_i·k_j / 2m ] · 1[c_i = c_j]
//! δ_n = (k_in − k_out) / k_n
//! ```
//!
//! The `e^{δ_i−δ_j}` factor shrinks the expected weight of links from sources
//! into sinks, so a flow that funnels through an account counts as stronger
//! community evidence than the same weight running the other way.
//!
//! Detection alternates a local-move stage and a compression stage. The
//! local-move stage runs either serially (nodes in id order, moves applied
//! immediately) or in synchronous rounds. A round visits the classes of a
//! greedy colouring in turn; nodes of one class propose moves in parallel
//! against a frozen snapshot, the proposals pass the swap/lag repair, and the
//! survivors are committed largest gain first, each rechecked against the
//! live aggregates.

mod compress;
mod digraph;
mod parallel;
mod serial;
mod state;

use std::collections::HashSet;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

pub use compress::{compress, CompressedGraph};
pub use digraph::{delta_factors, WeightedDigraph};
pub use parallel::{
    gather_messages, greedy_coloring, has_dead_target, has_two_cycle, parallel_sweep, resolve_swap_lag, NodeExchangeInfo,
};
pub use serial::{serial_local_move_sweep, SweepStats, MIN_GAIN};
pub use state::{delta_modularity, directed_modularity, remove_from_community, CommunityState};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Serial,
    #[default]
    Parallel,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(Mode::Serial),
            "parallel" => Ok(Mode::Parallel),
            _ => Err(Error::Config(format!("unknown louvain mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LouvainConfig {
    pub mode: Mode,
    /// Stop once a level improves modularity by less than this.
    pub epsilon_q: f64,
    pub max_levels: usize,
    /// Synchronous rounds per level before falling back to serial sweeps.
    pub max_rounds: usize,
    /// Safety cap on serial sweeps per level.
    pub max_sweeps: usize,
}

impl Default for LouvainConfig {
    fn default() -> Self {
        LouvainConfig {
            mode: Mode::Parallel,
            epsilon_q: 1e-7,
            max_levels: 20,
            max_rounds: 100,
            max_sweeps: 1000,
        }
    }
}

impl LouvainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_q >= 0.0) {
            return Err(Error::Config("epsilon_q must be non-negative".into()));
        }
        if self.max_levels == 0 || self.max_rounds == 0 || self.max_sweeps == 0 {
            return Err(Error::Config("louvain limits must be positive".into()));
        }
        Ok(())
    }
}

/// Diagnostics for one level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub nodes: usize,
    pub communities: usize,
    pub q_start: f64,
    pub q_end: f64,
    /// Modularity after each serial sweep.
    pub sweep_q: Vec<f64>,
    pub moves: usize,
    pub min_accepted_gain: Option<f64>,
    pub min_net_gain: Option<f64>,
    pub parallel_rounds: usize,
    pub fell_back_to_serial: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LouvainResult {
    /// Final community of each input node, numbered densely by smallest member.
    pub assignment: Vec<u32>,
    /// Community of each input node after each applied level.
    pub level_assignments: Vec<Vec<u32>>,
    pub levels: Vec<LevelStats>,
    /// `Q_D` of the final assignment on the input graph.
    pub modularity: f64,
}

impl LouvainResult {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().copied().max().map_or(0, |m| m as usize + 1)
    }
}

fn serial_stage(g: &WeightedDigraph, s: &mut CommunityState, cfg: &LouvainConfig, stats: &mut LevelStats) {
    for _ in 0..cfg.max_sweeps {
        let sweep = serial_local_move_sweep(g, s);
        stats.sweep_q.push(s.modularity(g));
        if sweep.moved == 0 {
            return;
        }
        stats.moves += sweep.moved;
        stats.min_accepted_gain = min_opt(stats.min_accepted_gain, sweep.min_accepted_gain);
        stats.min_net_gain = min_opt(stats.min_net_gain, sweep.min_net_gain);
    }
    warn!("serial stage hit max_sweeps={} without a fixpoint", cfg.max_sweeps);
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn parallel_stage(g: &WeightedDigraph, s: &mut CommunityState, cfg: &LouvainConfig, stats: &mut LevelStats) -> Result<()> {
    let classes = parallel::color_classes(&greedy_coloring(g));
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    seen.insert(s.assignment().to_vec());
    // nodes sent back by the last repair; the same swap would otherwise be
    // proposed again next round
    let mut lower_only = vec![false; g.node_count()];
    while stats.parallel_rounds < cfg.max_rounds {
        stats.parallel_rounds += 1;
        let mut moved = 0;
        let mut restricted = false;
        for class in &classes {
            let (proposed, net) = parallel::sweep_nodes(g, s, class, &lower_only);
            let prev = s.assignment().to_vec();
            let resolved = if proposed == prev { proposed.clone() } else { resolve_swap_lag(&prev, &proposed) };
            for &i in class {
                let i = i as usize;
                restricted |= lower_only[i];
                lower_only[i] = proposed[i] != prev[i] && resolved[i] == prev[i];
            }
            let mut movers: Vec<(u32, u32, f64)> = (0..prev.len())
                .filter(|&i| resolved[i] != prev[i])
                .map(|i| (i as u32, resolved[i], net.get(&(i as u32)).copied().unwrap_or(0.0)))
                .collect();
            // largest expected gain first; a move whose gain was eaten by
            // earlier commits is dropped
            movers.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            for (i, to, _) in movers {
                if serial::commit_move(g, s, i, to) {
                    moved += 1;
                }
            }
        }
        stats.moves += moved;
        if moved == 0 {
            if restricted || lower_only.iter().any(|&f| f) {
                // only an unrestricted round can confirm a fixpoint
                lower_only.fill(false);
                continue;
            }
            return Ok(());
        }
        if !seen.insert(s.assignment().to_vec()) {
            // the synchronous dynamics would repeat this state forever
            debug!("level {}: synchronous rounds cycled after {}", stats.level, stats.parallel_rounds);
            break;
        }
    }
    debug!("level {}: no synchronous fixpoint after {} rounds", stats.level, stats.parallel_rounds);
    stats.fell_back_to_serial = true;
    serial_stage(g, s, cfg, stats);
    Ok(())
}

/// Runs one level's local-move stage from singletons and reports it.
pub fn run_level(g: &WeightedDigraph, cfg: &LouvainConfig, level: usize) -> Result<(CommunityState, LevelStats)> {
    let mut s = CommunityState::singletons(g);
    let mut stats = LevelStats {
        level,
        nodes: g.node_count(),
        q_start: s.modularity(g),
        ..Default::default()
    };
    match cfg.mode {
        Mode::Serial => serial_stage(g, &mut s, cfg, &mut stats),
        Mode::Parallel => parallel_stage(g, &mut s, cfg, &mut stats)?,
    }
    stats.q_end = s.modularity(g);
    stats.communities = s.community_count();
    Ok((s, stats))
}

/// Multi-level detection. Levels repeat until a level improves modularity by
/// less than `epsilon_q` or `max_levels` is reached.
pub fn run_louvain(g: &WeightedDigraph, cfg: &LouvainConfig) -> Result<LouvainResult> {
    cfg.validate()?;
    let n = g.node_count();
    if n == 0 {
        return Ok(LouvainResult::default());
    }
    let mut result = LouvainResult::default();
    let mut current = g.clone();
    // node of `current` that each input node belongs to
    let mut to_current: Vec<u32> = (0..n as u32).collect();
    for level in 0..cfg.max_levels {
        let (state, stats) = run_level(&current, cfg, level)?;
        let improvement = stats.q_end - stats.q_start;
        info!(
            "level {level}: {} nodes -> {} communities, Q_D {:.6} -> {:.6}",
            stats.nodes, stats.communities, stats.q_start, stats.q_end
        );
        let merged = stats.communities < stats.nodes;
        result.levels.push(stats);
        if !merged || improvement <= 0.0 {
            break;
        }
        let compressed = compress(&current, &state)?;
        for c in to_current.iter_mut() {
            *c = compressed.node_map[*c as usize];
        }
        result.level_assignments.push(to_current.clone());
        current = compressed.graph;
        if improvement < cfg.epsilon_q {
            break;
        }
    }
    result.assignment = relabel_by_first_member(&to_current);
    let final_state = CommunityState::from_assignment(g, result.assignment.clone())?;
    result.modularity = final_state.modularity(g);
    Ok(result)
}

/// Renumbers tags densely in order of each community's smallest node.
pub fn relabel_by_first_member(assignment: &[u32]) -> Vec<u32> {
    let mut map: Vec<u32> = vec![u32::MAX; assignment.iter().copied().max().map_or(0, |m| m as usize + 1)];
    let mut next = 0u32;
    assignment
        .iter()
        .map(|&c| {
            if map[c as usize] == u32::MAX {
                map[c as usize] = next;
                next += 1;
            }
            map[c as usize]
        })
        .collect()
}
