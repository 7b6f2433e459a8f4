use super::{CommunityState, WeightedDigraph};

/// Gains at or below this fraction of the node's weight share `k_i / 2m`
/// are treated as zero when deciding a move.
pub const MIN_GAIN: f64 = 1e-12;

/// Absolute gain threshold for node `i`.
#[inline]
pub(crate) fn gain_floor(g: &WeightedDigraph, i: u32) -> f64 {
    MIN_GAIN * g.k(i) / g.two_m()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    pub moved: usize,
    /// Smallest insertion gain among accepted moves.
    pub min_accepted_gain: Option<f64>,
    /// Smallest net modularity change (insertion minus return gain) among
    /// accepted moves.
    pub min_net_gain: Option<f64>,
}

impl SweepStats {
    fn record(&mut self, gain: f64, net: f64) {
        self.moved += 1;
        self.min_accepted_gain = Some(self.min_accepted_gain.map_or(gain, |g| g.min(gain)));
        self.min_net_gain = Some(self.min_net_gain.map_or(net, |g| g.min(net)));
    }
}

/// The move a detached node should make.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Decision {
    pub target: u32,
    pub gain: f64,
    pub net: f64,
}

/// Picks the best neighbouring community for a detached node. `return_gain`
/// is the gain of going back to `home`. A move is only chosen when its gain
/// is strictly positive and strictly beats returning home; ties between
/// candidates go to the smallest tag. Gains within `floor` of zero count as
/// zero.
pub(crate) fn choose<F>(
    home: u32,
    return_gain: f64,
    candidates: &[(u32, f64)],
    floor: f64,
    mut gain_of: F,
) -> Option<Decision>
where
    F: FnMut(u32, f64) -> f64,
{
    let mut best: Option<(u32, f64)> = None;
    for &(c, k_i_c) in candidates {
        if c == home {
            continue;
        }
        let g = gain_of(c, k_i_c);
        // candidates are sorted by tag, so `>` keeps the smallest tag on ties
        if best.map_or(true, |(_, bg)| g > bg) {
            best = Some((c, g));
        }
    }
    let (target, gain) = best?;
    let net = gain - return_gain;
    (gain > floor && net > floor).then_some(Decision { target, gain, net })
}

/// One pass over all nodes in ascending id order, moving each to the
/// neighbouring community with the largest positive modularity gain.
pub fn serial_local_move_sweep(g: &WeightedDigraph, s: &mut CommunityState) -> SweepStats {
    let mut stats = SweepStats::default();
    for i in 0..g.node_count() as u32 {
        let home = s.community_of(i);
        let nbrs = s.neighbor_communities(g, i);
        let k_home = nbrs.iter().find(|(c, _)| *c == home).map_or(0.0, |x| x.1);
        s.detach(g, i, k_home);
        let return_gain = if s.size(home) == 0 {
            0.0
        } else {
            s.insertion_gain(g, i, home, k_home)
        };
        let state = &*s;
        match choose(home, return_gain, &nbrs, gain_floor(g, i), |c, k| state.insertion_gain(g, i, c, k)) {
            Some(d) => {
                let k_target = nbrs.iter().find(|(c, _)| *c == d.target).map_or(0.0, |x| x.1);
                s.attach(g, i, d.target, k_target);
                stats.record(d.gain, d.net);
            }
            None => s.attach(g, i, home, k_home),
        }
    }
    stats
}

/// Moves `i` to `target` if that still beats staying put against the current
/// state. Returns whether it moved.
pub(crate) fn commit_move(g: &WeightedDigraph, s: &mut CommunityState, i: u32, target: u32) -> bool {
    let home = s.community_of(i);
    let nbrs = s.neighbor_communities(g, i);
    let weight_to = |t: u32| nbrs.iter().find(|(c, _)| *c == t).map_or(0.0, |x| x.1);
    let (k_home, k_target) = (weight_to(home), weight_to(target));
    s.detach(g, i, k_home);
    let return_gain = if s.size(home) == 0 {
        0.0
    } else {
        s.insertion_gain(g, i, home, k_home)
    };
    let gain = s.insertion_gain(g, i, target, k_target);
    let floor = gain_floor(g, i);
    if gain > floor && gain - return_gain > floor {
        s.attach(g, i, target, k_target);
        true
    } else {
        s.attach(g, i, home, k_home);
        false
    }
}
