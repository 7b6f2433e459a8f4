use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::serial::{choose, gain_floor, Decision};
use super::state::insertion_gain;
use super::{CommunityState, WeightedDigraph};

/// What node `i` learns about one neighbour `j` in a synchronous round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeExchangeInfo {
    pub k_i: f64,
    pub k_i_in: f64,
    pub k_i_out: f64,
    pub delta_i: f64,
    pub c_i: u32,
    pub j: u32,
    pub k_j: f64,
    pub k_j_in: f64,
    pub k_j_out: f64,
    pub delta_j: f64,
    pub c_j: u32,
    /// `A_ij + A_ji`
    pub w_ij: f64,
}

/// Messages node `i` receives from its neighbours for the given assignment.
pub fn gather_messages(g: &WeightedDigraph, assignment: &[u32], i: u32) -> Vec<NodeExchangeInfo> {
    g.neighbors(i)
        .map(|(j, w)| NodeExchangeInfo {
            k_i: g.k(i),
            k_i_in: g.k_in(i),
            k_i_out: g.k_out(i),
            delta_i: g.delta(i),
            c_i: assignment[i as usize],
            j,
            k_j: g.k(j),
            k_j_in: g.k_in(j),
            k_j_out: g.k_out(j),
            delta_j: g.delta(j),
            c_j: assignment[j as usize],
            w_ij: w,
        })
        .collect()
}

fn propose(g: &WeightedDigraph, s: &CommunityState, i: u32, lower_only: bool) -> u32 {
    propose_decision(g, s, i, lower_only).map_or(s.community_of(i), |d| d.target)
}

fn propose_decision(g: &WeightedDigraph, s: &CommunityState, i: u32, lower_only: bool) -> Option<Decision> {
    let messages = gather_messages(g, s.assignment(), i);
    let home = s.community_of(i);
    let mut weights: Vec<(u32, f64)> = messages.iter().map(|m| (m.c_j, m.w_ij)).collect();
    weights.sort_by_key(|&(c, _)| c);
    weights.dedup_by(|next, kept| {
        if next.0 == kept.0 {
            kept.1 += next.1;
            true
        } else {
            false
        }
    });
    let k_home = weights.iter().find(|(c, _)| *c == home).map_or(0.0, |x| x.1);
    if lower_only {
        weights.retain(|&(c, _)| c <= home);
    }
    // evaluate against the frozen snapshot with `i` virtually detached
    let return_gain = if s.size(home) <= 1 {
        0.0
    } else {
        let (_, s_plus, s_minus) = s.without(g, i, k_home);
        insertion_gain(g, i, k_home, s_plus, s_minus)
    };
    choose(home, return_gain, &weights, gain_floor(g, i), |c, k| s.insertion_gain(g, i, c, k))
}

/// One bulk-synchronous round: every node picks its best move against the
/// frozen state `s`. Returns the proposed assignment; nothing is applied.
///
/// The result depends only on `s`, never on how rayon splits the work.
pub fn parallel_sweep(g: &WeightedDigraph, s: &CommunityState) -> Vec<u32> {
    (0..g.node_count() as u32).into_par_iter().map(|i| propose(g, s, i, false)).collect()
}

/// Synchronous round restricted to `nodes`: each proposes against the frozen
/// state `s` while every other node keeps its tag. A node with
/// `lower_only[i]` set may only move to a smaller tag than its own.
///
/// Also returns the net gain each mover expects.
pub(crate) fn sweep_nodes(
    g: &WeightedDigraph,
    s: &CommunityState,
    nodes: &[u32],
    lower_only: &[bool],
) -> (Vec<u32>, HashMap<u32, f64>) {
    let moves: Vec<(u32, Decision)> = nodes
        .par_iter()
        .filter_map(|&i| propose_decision(g, s, i, lower_only[i as usize]).map(|d| (i, d)))
        .collect();
    let mut proposed = s.assignment().to_vec();
    let mut net = HashMap::with_capacity(moves.len());
    for (i, d) in moves {
        proposed[i as usize] = d.target;
        net.insert(i, d.net);
    }
    (proposed, net)
}

/// Greedy distance-1 colouring in id order: each node takes the smallest
/// colour unused by its lower-id neighbours. Nodes of one colour are pairwise
/// non-adjacent.
pub fn greedy_coloring(g: &WeightedDigraph) -> Vec<u32> {
    let n = g.node_count();
    let mut color = vec![u32::MAX; n];
    let mut taken: Vec<u32> = Vec::new();
    for i in 0..n as u32 {
        taken.clear();
        taken.extend(g.neighbors(i).filter(|&(j, _)| j < i).map(|(j, _)| color[j as usize]));
        taken.sort_unstable();
        taken.dedup();
        let c = taken.iter().enumerate().find(|&(k, &t)| k as u32 != t).map_or(taken.len(), |(k, _)| k);
        color[i as usize] = c as u32;
    }
    color
}

/// Node ids grouped by colour, ascending within each class.
pub(crate) fn color_classes(colors: &[u32]) -> Vec<Vec<u32>> {
    let k = colors.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut classes = vec![Vec::new(); k];
    for (i, &c) in colors.iter().enumerate() {
        classes[c as usize].push(i as u32);
    }
    classes
}

/// Repairs the artifacts of a synchronous round.
///
/// - Community swap: when some nodes move `A → B` while others move `B → A`,
///   all of them return to their previous communities.
/// - Ascription lag: a tag whose previous members all left is dead. Nodes
///   that moved into it are forwarded to where its leader (smallest previous
///   member) went, following chains; a chain that loops is a generalized swap
///   and its leaders are sent back.
///
/// The output has no opposing pair of relabels and every tag it uses has at
/// least one member.
pub fn resolve_swap_lag(prev: &[u32], proposed: &[u32]) -> Vec<u32> {
    assert_eq!(prev.len(), proposed.len(), "assignments must cover the same nodes");
    let n = prev.len();
    let mut next = proposed.to_vec();
    // every pass either reverts a node or forwards nodes onto live tags
    for _ in 0..=2 * n + 1 {
        let mut changed = false;

        let moves: BTreeSet<(u32, u32)> = (0..n).filter(|&i| next[i] != prev[i]).map(|i| (prev[i], next[i])).collect();
        for i in 0..n {
            if next[i] != prev[i] && moves.contains(&(next[i], prev[i])) {
                next[i] = prev[i];
                changed = true;
            }
        }
        if changed {
            continue;
        }

        // tag -> leader, for tags whose previous members all moved away
        let mut leader: HashMap<u32, usize> = HashMap::new();
        let mut alive: BTreeSet<u32> = BTreeSet::new();
        for i in 0..n {
            if next[i] == prev[i] {
                alive.insert(prev[i]);
            } else {
                leader.entry(prev[i]).or_insert(i);
            }
        }
        leader.retain(|t, _| !alive.contains(t));
        if leader.is_empty() {
            break;
        }
        let mut dead: Vec<u32> = leader.keys().copied().collect();
        dead.sort_unstable();

        let mut terminal: HashMap<u32, u32> = HashMap::new();
        let mut cycle_leaders: BTreeSet<usize> = BTreeSet::new();
        for &t in &dead {
            let mut path = vec![t];
            let mut cur = t;
            let end = loop {
                if let Some(&done) = terminal.get(&cur) {
                    break Some(done);
                }
                match leader.get(&cur) {
                    None => break Some(cur),
                    Some(&l) => {
                        let nxt = next[l];
                        if let Some(pos) = path.iter().position(|&p| p == nxt) {
                            cycle_leaders.extend(path[pos..].iter().map(|p| leader[p]));
                            break None;
                        }
                        path.push(nxt);
                        cur = nxt;
                    }
                }
            };
            if let Some(end) = end {
                for p in path {
                    terminal.insert(p, end);
                }
            }
        }
        if !cycle_leaders.is_empty() {
            for l in cycle_leaders {
                next[l] = prev[l];
            }
            continue;
        }
        for i in 0..n {
            if next[i] != prev[i] {
                if let Some(&t) = terminal.get(&next[i]) {
                    if t != next[i] {
                        next[i] = t;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    next
}

/// True when some node moved `A → B` and another `B → A`.
pub fn has_two_cycle(prev: &[u32], next: &[u32]) -> bool {
    let moves: BTreeSet<(u32, u32)> =
        prev.iter().zip(next).filter(|(a, b)| a != b).map(|(&a, &b)| (a, b)).collect();
    moves.iter().any(|&(a, b)| moves.contains(&(b, a)))
}

/// True when a node moved into a tag whose previous members all left.
pub fn has_dead_target(prev: &[u32], next: &[u32]) -> bool {
    let occupied: BTreeSet<u32> = next.iter().copied().collect();
    let mut had: BTreeSet<u32> = BTreeSet::new();
    let mut kept: BTreeSet<u32> = BTreeSet::new();
    for (&p, &q) in prev.iter().zip(next) {
        had.insert(p);
        if p == q {
            kept.insert(p);
        }
    }
    prev.iter()
        .zip(next)
        .any(|(&p, &q)| p != q && had.contains(&q) && !kept.contains(&q) && occupied.contains(&q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_moves_is_identity() {
        let prev = vec![0, 0, 2, 3];
        assert_eq!(resolve_swap_lag(&prev, &prev), prev);
    }

    #[test]
    fn swap_is_reverted() {
        // i=0 and j=1 trade tags; satellites 2,3 follow 0, 4,5 follow 1
        let prev = vec![0, 1, 2, 3, 4, 5];
        let proposed = vec![1, 0, 0, 0, 1, 1];
        assert!(has_two_cycle(&prev, &proposed));
        let out = resolve_swap_lag(&prev, &proposed);
        assert_eq!(out, vec![0, 1, 0, 0, 1, 1]);
        assert!(!has_two_cycle(&prev, &out));
    }

    #[test]
    fn lag_is_forwarded() {
        // a=2, b=3 join j=1's tag while j joins i=0
        let prev = vec![0, 1, 2, 3];
        let proposed = vec![0, 0, 1, 1];
        assert!(has_dead_target(&prev, &proposed));
        assert_eq!(resolve_swap_lag(&prev, &proposed), vec![0, 0, 0, 0]);
    }

    #[test]
    fn chains_are_followed() {
        // 3 -> tag 2, 2 -> tag 1, 1 -> tag 0 (0 stays)
        let prev = vec![0, 1, 2, 3];
        let proposed = vec![0, 0, 1, 2];
        assert_eq!(resolve_swap_lag(&prev, &proposed), vec![0, 0, 0, 0]);
    }

    #[test]
    fn three_cycles_revert() {
        let prev = vec![0, 1, 2, 3];
        let proposed = vec![1, 2, 0, 0];
        let out = resolve_swap_lag(&prev, &proposed);
        assert_eq!(out, vec![0, 1, 2, 0]);
    }

    #[test]
    fn multi_member_swap_reverted() {
        let prev = vec![0, 0, 2, 2];
        let proposed = vec![0, 2, 0, 2];
        assert_eq!(resolve_swap_lag(&prev, &proposed), prev);
    }
}
