use super::WeightedDigraph;
use crate::{Error, Result};

/// Node-to-community assignment with the per-community aggregates needed for
/// O(degree) move evaluation.
///
/// For community `c`:
/// - `internal(c) = Σ_{i,j∈c} (A_ij + A_ji)`
/// - `s_plus(c) = Σ_{i∈c} e^{δ_i} k_i`, `s_minus(c) = Σ_{i∈c} e^{−δ_i} k_i`
///
/// The null-model mass of a community, `Σ_{i,j∈c} e^{δ_i−δ_j} k_i k_j`,
/// factorizes as `s_plus(c) · s_minus(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityState {
    assignment: Vec<u32>,
    internal: Vec<f64>,
    s_plus: Vec<f64>,
    s_minus: Vec<f64>,
    size: Vec<u32>,
    members: Vec<Vec<u32>>,
    /// Index of each node in its community's member list.
    slot: Vec<u32>,
}

/// A removal leaving less than this fraction of an aggregate is redone from
/// the remaining members, since the subtraction would have cancelled.
const CANCELLATION_RATIO: f64 = 1e-6;

impl CommunityState {
    /// Every node in its own community, tagged with its own id.
    pub fn singletons(g: &WeightedDigraph) -> Self {
        let n = g.node_count() as u32;
        Self::from_assignment(g, (0..n).collect()).expect("identity assignment is valid")
    }

    /// Builds aggregates from scratch. Tags must lie in `0..n`.
    pub fn from_assignment(g: &WeightedDigraph, assignment: Vec<u32>) -> Result<Self> {
        let n = g.node_count();
        if assignment.len() != n {
            return Err(Error::InvalidInput(format!(
                "assignment covers {} nodes, graph has {n}",
                assignment.len()
            )));
        }
        if let Some(t) = assignment.iter().find(|&&t| t as usize >= n) {
            return Err(Error::InvalidInput(format!("community tag {t} out of range 0..{n}")));
        }
        let mut s = CommunityState {
            internal: vec![0.0; n],
            s_plus: vec![0.0; n],
            s_minus: vec![0.0; n],
            size: vec![0; n],
            members: vec![Vec::new(); n],
            slot: vec![0; n],
            assignment,
        };
        for i in 0..n as u32 {
            let c = s.assignment[i as usize] as usize;
            s.size[c] += 1;
            s.slot[i as usize] = s.members[c].len() as u32;
            s.members[c].push(i);
            s.s_plus[c] += g.k_plus(i);
            s.s_minus[c] += g.k_minus(i);
        }
        for &(a, b, w) in g.arcs() {
            let (ca, cb) = (s.assignment[a as usize], s.assignment[b as usize]);
            if ca == cb {
                s.internal[ca as usize] += 2.0 * w;
            }
        }
        Ok(s)
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn into_assignment(self) -> Vec<u32> {
        self.assignment
    }

    pub fn community_of(&self, i: u32) -> u32 {
        self.assignment[i as usize]
    }

    pub fn size(&self, c: u32) -> u32 {
        self.size[c as usize]
    }

    pub fn internal(&self, c: u32) -> f64 {
        self.internal[c as usize]
    }

    pub fn s_plus(&self, c: u32) -> f64 {
        self.s_plus[c as usize]
    }

    pub fn s_minus(&self, c: u32) -> f64 {
        self.s_minus[c as usize]
    }

    /// Tags of the non-empty communities, ascending.
    pub fn communities(&self) -> impl Iterator<Item = u32> + '_ {
        self.size.iter().enumerate().filter(|(_, &s)| s > 0).map(|(c, _)| c as u32)
    }

    pub fn community_count(&self) -> usize {
        self.size.iter().filter(|&&s| s > 0).count()
    }

    /// `Q_D = Σ_c [internal(c)/2m − s_plus(c)·s_minus(c)/(2m)²]`
    pub fn modularity(&self, g: &WeightedDigraph) -> f64 {
        directed_modularity(g, self)
    }

    /// Symmetric weight between `i` and each community among its neighbours,
    /// sorted by tag. `i`'s own self-loop is excluded.
    pub fn neighbor_communities(&self, g: &WeightedDigraph, i: u32) -> Vec<(u32, f64)> {
        community_weights(g, &self.assignment, i)
    }

    /// Gain of inserting the detached node `i` into community `c`, given the
    /// symmetric weight `k_i_c` between them.
    #[inline]
    pub(crate) fn insertion_gain(&self, g: &WeightedDigraph, i: u32, c: u32, k_i_c: f64) -> f64 {
        insertion_gain(
            g,
            i,
            k_i_c,
            self.s_plus[c as usize],
            self.s_minus[c as usize],
        )
    }

    /// `(internal, s_plus, s_minus)` of `i`'s community without `i`.
    pub(crate) fn without(&self, g: &WeightedDigraph, i: u32, k_i_c: f64) -> (f64, f64, f64) {
        let c = self.assignment[i as usize] as usize;
        if self.size[c] <= 1 {
            return (0.0, 0.0, 0.0);
        }
        let removed_internal = 2.0 * k_i_c + 2.0 * g.self_loop(i);
        let internal = self.internal[c] - removed_internal;
        let s_plus = self.s_plus[c] - g.k_plus(i);
        let s_minus = self.s_minus[c] - g.k_minus(i);
        let cancelled = |rest: f64, total: f64| rest < CANCELLATION_RATIO * total;
        if cancelled(s_plus, self.s_plus[c])
            || cancelled(s_minus, self.s_minus[c])
            || (removed_internal > 0.0 && cancelled(internal, self.internal[c]))
        {
            return self.recount(g, c as u32, Some(i));
        }
        (internal, s_plus, s_minus)
    }

    /// Aggregates of community `c` summed from its members, skipping `skip`.
    fn recount(&self, g: &WeightedDigraph, c: u32, skip: Option<u32>) -> (f64, f64, f64) {
        let (mut internal, mut s_plus, mut s_minus) = (0.0, 0.0, 0.0);
        for &m in self.members[c as usize].iter().filter(|&&m| Some(m) != skip) {
            s_plus += g.k_plus(m);
            s_minus += g.k_minus(m);
            internal += 2.0 * g.self_loop(m);
            for (j, w) in g.neighbors(m) {
                if self.assignment[j as usize] == c && Some(j) != skip {
                    internal += w;
                }
            }
        }
        (internal, s_plus, s_minus)
    }

    /// Removes `i` from its community without assigning a new one. The caller
    /// must follow with [`attach`](Self::attach).
    pub(crate) fn detach(&mut self, g: &WeightedDigraph, i: u32, k_i_c: f64) {
        let (internal, s_plus, s_minus) = self.without(g, i, k_i_c);
        let c = self.assignment[i as usize] as usize;
        self.size[c] -= 1;
        self.internal[c] = internal;
        self.s_plus[c] = s_plus;
        self.s_minus[c] = s_minus;
        let at = self.slot[i as usize] as usize;
        self.members[c].swap_remove(at);
        if let Some(&moved) = self.members[c].get(at) {
            self.slot[moved as usize] = at as u32;
        }
    }

    pub(crate) fn attach(&mut self, g: &WeightedDigraph, i: u32, c: u32, k_i_c: f64) {
        let cu = c as usize;
        self.assignment[i as usize] = c;
        self.size[cu] += 1;
        self.slot[i as usize] = self.members[cu].len() as u32;
        self.members[cu].push(i);
        self.internal[cu] += 2.0 * k_i_c + 2.0 * g.self_loop(i);
        self.s_plus[cu] += g.k_plus(i);
        self.s_minus[cu] += g.k_minus(i);
    }

    /// Moves `i` into community `c` (which may be empty), keeping aggregates
    /// consistent.
    pub fn move_node(&mut self, g: &WeightedDigraph, i: u32, c: u32) {
        let nbrs = self.neighbor_communities(g, i);
        let weight_to = |t: u32| nbrs.iter().find(|(c, _)| *c == t).map_or(0.0, |x| x.1);
        let old = self.assignment[i as usize];
        self.detach(g, i, weight_to(old));
        self.attach(g, i, c, weight_to(c));
    }

    /// A tag with no members, preferring `i`'s own id.
    fn free_tag(&self, i: u32) -> u32 {
        if self.size[i as usize] == 0 {
            return i;
        }
        self.size.iter().position(|&s| s == 0).expect("fewer communities than nodes") as u32
    }
}

/// `Σ_j (A_ij + A_ji)` grouped by the community of `j`, sorted by tag.
pub(crate) fn community_weights(g: &WeightedDigraph, assignment: &[u32], i: u32) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = g.neighbors(i).map(|(j, w)| (assignment[j as usize], w)).collect();
    out.sort_by_key(|&(c, _)| c);
    out.dedup_by(|next, kept| {
        if next.0 == kept.0 {
            kept.1 += next.1;
            true
        } else {
            false
        }
    });
    out
}

/// `ΔQ_D = 2·k_i^c/2m − θ_i/(2m)²` with
/// `θ_i = k_i e^{δ_i} s_minus(c) + k_i e^{−δ_i} s_plus(c)`.
#[inline]
pub(crate) fn insertion_gain(g: &WeightedDigraph, i: u32, k_i_c: f64, s_plus: f64, s_minus: f64) -> f64 {
    let two_m = g.two_m();
    let theta = g.k_plus(i) * s_minus + g.k_minus(i) * s_plus;
    2.0 * k_i_c / two_m - theta / (two_m * two_m)
}

pub fn directed_modularity(g: &WeightedDigraph, s: &CommunityState) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    let two_m = g.two_m();
    s.communities()
        .map(|c| s.internal(c) / two_m - s.s_plus(c) * s.s_minus(c) / (two_m * two_m))
        .sum()
}

/// Modularity change from inserting `i` into community `c`.
///
/// `i` must sit alone in its community; use [`remove_from_community`] first.
pub fn delta_modularity(g: &WeightedDigraph, s: &CommunityState, i: u32, c: u32) -> Result<f64> {
    let own = s.community_of(i);
    if s.size(own) != 1 {
        return Err(Error::InvalidInput(format!("node {i} is not alone in its community")));
    }
    if c == own || s.size(c) == 0 {
        return Err(Error::InvalidInput(format!("target community {c} is empty")));
    }
    let k_i_c = s.neighbor_communities(g, i).iter().find(|(t, _)| *t == c).map_or(0.0, |x| x.1);
    Ok(s.insertion_gain(g, i, c, k_i_c))
}

/// Detaches `i` into a fresh singleton community. A node already alone is
/// left untouched.
pub fn remove_from_community(g: &WeightedDigraph, s: &mut CommunityState, i: u32) {
    let own = s.community_of(i);
    if s.size(own) == 1 {
        return;
    }
    let nbrs = s.neighbor_communities(g, i);
    let k_own = nbrs.iter().find(|(t, _)| *t == own).map_or(0.0, |x| x.1);
    s.detach(g, i, k_own);
    let tag = s.free_tag(i);
    s.attach(g, i, tag, 0.0);
}
