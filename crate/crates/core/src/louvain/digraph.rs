use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Weighted directed graph prepared for community detection.
///
/// Besides the directed arcs it keeps a symmetric neighbour list (`A_ij + A_ji`,
/// self-loops excluded) used when evaluating moves, and the per-node factors of
/// the direction-corrected null model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDigraph {
    n: usize,
    arcs: Vec<(u32, u32, f64)>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    neighbor_weights: Vec<f64>,
    self_loop: Vec<f64>,
    k_in: Vec<f64>,
    k_out: Vec<f64>,
    delta: Vec<f64>,
    total: f64,
}

/// Flow-asymmetry factors `δ = (k_in − k_out) / k`.
pub fn delta_factors(k_in: &[f64], k_out: &[f64]) -> Result<Vec<f64>> {
    k_in.iter()
        .zip(k_out)
        .enumerate()
        .map(|(i, (&a, &b))| {
            let k = a + b;
            if k > 0.0 {
                Ok((a - b) / k)
            } else {
                Err(Error::InvalidInput(format!("node {i} has no incident weight; prune it before detection")))
            }
        })
        .collect()
}

impl WeightedDigraph {
    /// Builds the graph from directed arcs. Parallel arcs are summed and
    /// zero-weight arcs dropped. Every node must end up with positive weight.
    pub fn from_arcs(n: usize, arcs: &[(u32, u32, f64)]) -> Result<Self> {
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(arcs.len());
        for &(s, d, w) in arcs {
            if s as usize >= n || d as usize >= n {
                return Err(Error::InvalidInput(format!("arc {s}->{d} outside {n} nodes")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidInput(format!("arc {s}->{d} has invalid weight {w}")));
            }
            if w > 0.0 {
                merged.push((s, d, w));
            }
        }
        merged.sort_by_key(|&(s, d, _)| (s, d));
        merged.dedup_by(|next, kept| {
            if (next.0, next.1) == (kept.0, kept.1) {
                kept.2 += next.2;
                true
            } else {
                false
            }
        });

        let mut k_in = vec![0.0; n];
        let mut k_out = vec![0.0; n];
        let mut self_loop = vec![0.0; n];
        let mut degree = vec![0usize; n];
        for &(s, d, w) in &merged {
            k_out[s as usize] += w;
            k_in[d as usize] += w;
            if s == d {
                self_loop[s as usize] += w;
            } else {
                degree[s as usize] += 1;
                degree[d as usize] += 1;
            }
        }
        let delta = delta_factors(&k_in, &k_out)?;

        // symmetric CSR; both arc directions of a pair are folded into one entry
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut raw = vec![(0u32, 0.0f64); offsets[n]];
        for &(s, d, w) in merged.iter().filter(|a| a.0 != a.1) {
            raw[fill[s as usize]] = (d, w);
            fill[s as usize] += 1;
            raw[fill[d as usize]] = (s, w);
            fill[d as usize] += 1;
        }
        let mut neighbors = Vec::with_capacity(raw.len());
        let mut neighbor_weights = Vec::with_capacity(raw.len());
        let mut compact_offsets = vec![0usize; n + 1];
        for i in 0..n {
            let row = &mut raw[offsets[i]..offsets[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            for &(j, w) in row.iter() {
                if neighbors.len() > compact_offsets[i] && *neighbors.last().unwrap() == j {
                    *neighbor_weights.last_mut().unwrap() += w;
                } else {
                    neighbors.push(j);
                    neighbor_weights.push(w);
                }
            }
            compact_offsets[i + 1] = neighbors.len();
        }

        let total = merged.iter().map(|a| a.2).sum();
        Ok(WeightedDigraph {
            n,
            arcs: merged,
            offsets: compact_offsets,
            neighbors,
            neighbor_weights,
            self_loop,
            k_in,
            k_out,
            delta,
            total,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Merged directed arcs sorted by `(src, dst)`.
    pub fn arcs(&self) -> &[(u32, u32, f64)] {
        &self.arcs
    }

    /// Symmetric neighbours of `i` with weights `A_ij + A_ji`, self excluded.
    pub fn neighbors(&self, i: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let range = self.offsets[i as usize]..self.offsets[i as usize + 1];
        self.neighbors[range.clone()].iter().copied().zip(self.neighbor_weights[range].iter().copied())
    }

    pub fn self_loop(&self, i: u32) -> f64 {
        self.self_loop[i as usize]
    }

    pub fn k_in(&self, i: u32) -> f64 {
        self.k_in[i as usize]
    }

    pub fn k_out(&self, i: u32) -> f64 {
        self.k_out[i as usize]
    }

    /// Total incident weight `k = k_in + k_out`.
    pub fn k(&self, i: u32) -> f64 {
        self.k_in[i as usize] + self.k_out[i as usize]
    }

    pub fn delta(&self, i: u32) -> f64 {
        self.delta[i as usize]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }

    /// `e^{δ_i}·k_i`
    #[inline]
    pub fn k_plus(&self, i: u32) -> f64 {
        self.delta[i as usize].exp() * self.k(i)
    }

    /// `e^{−δ_i}·k_i`
    #[inline]
    pub fn k_minus(&self, i: u32) -> f64 {
        (-self.delta[i as usize]).exp() * self.k(i)
    }

    /// Sum of all arc weights, `Σ A_ij`.
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    /// `2m = Σ_i k_i`, the normalizer of the modularity.
    pub fn two_m(&self) -> f64 {
        2.0 * self.total
    }
}
