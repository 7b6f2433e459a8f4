//! Node and temporal corrections that turn primitive weights into final
//! edge weights.
//!
//! A node correction `σ` scales every edge by how prominent its endpoints are
//! (standardized money, count and degree). The temporal correction `θ`
//! strengthens edges that fit a fan-in-then-out pattern at the source (P1) or
//! a concentrated-in-then-fan-out pattern at the destination (P2):
//!
//! ```text
//! β  = (deg_in − deg_out) / deg
//! θ_s = exp(β_s · P_T / (T_sd − t̄_src^in))
//! θ_d = exp(β_d · P_T / (T_sd − t̄_dst^out))
//! ```
//!
//! `θ_s` applies when `β_s > 0`, `θ_d` when `β_d < 0`. Self-loops keep their
//! node-corrected weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{NodeStats, TransactionGraph};
use crate::ingest::{MergedEdge, PrimitiveWeightParams, TimeWindow};
use crate::stats::{check_ratios, exp_clamped, standardize, DEFAULT_EXPONENT_CLAMP};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub omega_money: f64,
    pub omega_count: f64,
    pub omega_node_money: f64,
    pub omega_node_count: f64,
    pub omega_node_degree: f64,
    pub exponent_clamp: f64,
    /// Smallest magnitude allowed for `T_sd − t̄`, in seconds.
    pub tau_epsilon: f64,
    pub log_money: bool,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            omega_money: 0.5,
            omega_count: 0.5,
            omega_node_money: 1.0 / 3.0,
            omega_node_count: 1.0 / 3.0,
            omega_node_degree: 1.0 / 3.0,
            exponent_clamp: DEFAULT_EXPONENT_CLAMP,
            tau_epsilon: 1.0,
            log_money: false,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        check_ratios("edge weight", &[self.omega_money, self.omega_count])?;
        check_ratios(
            "node correction",
            &[self.omega_node_money, self.omega_node_count, self.omega_node_degree],
        )?;
        if !(self.exponent_clamp > 0.0) {
            return Err(crate::Error::Config("exponent_clamp must be positive".into()));
        }
        if !(self.tau_epsilon > 0.0) {
            return Err(crate::Error::Config("tau_epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn primitive(&self) -> PrimitiveWeightParams {
        PrimitiveWeightParams {
            omega_money: self.omega_money,
            omega_count: self.omega_count,
            exponent_clamp: self.exponent_clamp,
            log_money: self.log_money,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCorrection {
    pub money_std: f64,
    pub count_std: f64,
    pub degree_std: f64,
    pub sigma: f64,
}

/// Node corrections, standardized over every node of `g`.
pub fn node_corrections(g: &TransactionGraph, cfg: &WeightConfig) -> Result<Vec<NodeCorrection>> {
    if g.is_empty() {
        return Ok(Vec::new());
    }
    let money: Vec<f64> = g.stats.iter().map(|s| s.total_money().as_f64()).collect();
    let count: Vec<f64> = g.stats.iter().map(|s| s.total_count() as f64).collect();
    let degree: Vec<f64> = g.stats.iter().map(|s| s.deg() as f64).collect();
    let (money, count, degree) = (standardize(&money)?, standardize(&count)?, standardize(&degree)?);
    Ok((0..g.node_count())
        .map(|i| NodeCorrection {
            money_std: money[i],
            count_std: count[i],
            degree_std: degree[i],
            sigma: exp_clamped(
                cfg.omega_node_money * money[i] + cfg.omega_node_count * count[i] + cfg.omega_node_degree * degree[i],
                cfg.exponent_clamp,
            ),
        })
        .collect())
}

/// `w_N = σ_src · σ_dst · w_B`.
pub fn apply_node_correction(edge: &mut MergedEdge, src: &NodeCorrection, dst: &NodeCorrection) {
    edge.w_n = src.sigma * dst.sigma * edge.w_b;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalCorrection {
    pub beta_s: f64,
    pub beta_d: f64,
    /// `None` when the source has no inbound transfers.
    pub tau_s_out: Option<f64>,
    /// `None` when the destination has no outbound transfers.
    pub tau_d_in: Option<f64>,
    pub theta_s: f64,
    pub theta_d: f64,
}

/// Direction imbalance `(deg_in − deg_out) / deg`.
pub fn beta(stats: &NodeStats) -> f64 {
    let deg = stats.deg();
    if deg == 0 {
        return 0.0;
    }
    (stats.deg_in as f64 - stats.deg_out as f64) / deg as f64
}

fn tau(window: &TimeWindow, gap: f64, eps: f64) -> f64 {
    let gap = if gap.abs() < eps {
        if gap < 0.0 {
            -eps
        } else {
            eps
        }
    } else {
        gap
    };
    window.duration() / gap
}

pub fn temporal_correction(
    edge: &MergedEdge,
    src: &NodeStats,
    dst: &NodeStats,
    window: &TimeWindow,
    cfg: &WeightConfig,
) -> TemporalCorrection {
    let beta_s = beta(src);
    let beta_d = beta(dst);
    let tau_s_out = src.t_in_mean.map(|t| tau(window, edge.mean_time - t, cfg.tau_epsilon));
    let tau_d_in = dst.t_out_mean.map(|t| tau(window, edge.mean_time - t, cfg.tau_epsilon));
    TemporalCorrection {
        beta_s,
        beta_d,
        tau_s_out,
        tau_d_in,
        theta_s: tau_s_out.map_or(1.0, |t| exp_clamped(beta_s * t, cfg.exponent_clamp)),
        theta_d: tau_d_in.map_or(1.0, |t| exp_clamped(beta_d * t, cfg.exponent_clamp)),
    }
}

/// Sets `w_e` from `w_n` and the temporal correction. A zero β falls on the
/// uncorrected side; self-loops are never corrected.
pub fn final_weight(edge: &mut MergedEdge, tc: &TemporalCorrection) {
    if edge.is_self_loop() {
        edge.w_e = edge.w_n;
        return;
    }
    let mut w = edge.w_n;
    if tc.beta_s > 0.0 {
        w *= tc.theta_s;
    }
    if tc.beta_d < 0.0 {
        w *= tc.theta_d;
    }
    edge.w_e = w;
}

/// Computes `w_n` and `w_e` for every edge of `g` in place. Assumes `w_b` is set.
pub fn apply_weights(g: &mut TransactionGraph, cfg: &WeightConfig) -> Result<()> {
    cfg.validate()?;
    let corrections = node_corrections(g, cfg)?;
    let TransactionGraph {
        window, stats, edges, ..
    } = g;
    let (window, stats) = (&*window, &*stats);
    edges.par_iter_mut().for_each(|e| {
        let (s, d) = (e.src as usize, e.dst as usize);
        apply_node_correction(e, &corrections[s], &corrections[d]);
        let tc = temporal_correction(e, &stats[s], &stats[d], window, cfg);
        final_weight(e, &tc);
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::ingest::{merge_edges, Amount, TransactionRecord};
    use proptest::prelude::*;

    fn stats(deg_in: u32, deg_out: u32, t_in: Option<f64>, t_out: Option<f64>) -> NodeStats {
        NodeStats {
            deg_in,
            deg_out,
            t_in_mean: t_in,
            t_out_mean: t_out,
            ..Default::default()
        }
    }

    fn edge(src: u32, dst: u32, t: f64, w_n: f64) -> MergedEdge {
        MergedEdge {
            src,
            dst,
            money: Amount(100),
            count: 1,
            time_sum: t as i128,
            mean_time: t,
            money_std: 0.0,
            count_std: 0.0,
            w_b: w_n,
            w_n,
            w_e: w_n,
        }
    }

    fn graph(rows: &[(&str, &str, i64, i64)], window: TimeWindow) -> TransactionGraph {
        let records: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, (s, d, a, t))| TransactionRecord {
                txn_id: i.to_string(),
                src: s.to_string(),
                dst: d.to_string(),
                amount: Amount(*a),
                timestamp: *t,
            })
            .collect();
        build_graph(merge_edges(&records), window).unwrap()
    }

    #[test]
    fn identical_nodes_have_unit_sigma() {
        let g = graph(&[("A", "B", 1, 1), ("B", "A", 1, 2)], TimeWindow::new(0, 10).unwrap());
        let c = node_corrections(&g, &WeightConfig::default()).unwrap();
        assert!(c.iter().all(|c| c.sigma == 1.0));
    }

    #[test]
    fn single_node_sigma_is_one() {
        let g = graph(&[("A", "A", 5, 1)], TimeWindow::new(0, 10).unwrap());
        let c = node_corrections(&g, &WeightConfig::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].sigma, 1.0);
    }

    #[test]
    fn sigma_formula() {
        let cfg = WeightConfig::default();
        let x = 3.0;
        let sigma = exp_clamped(cfg.omega_node_money * x + cfg.omega_node_count * x + cfg.omega_node_degree * x, 30.0);
        assert!((sigma - 3f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn node_correction_products() {
        let nc = |sigma| NodeCorrection {
            money_std: 0.0,
            count_std: 0.0,
            degree_std: 0.0,
            sigma,
        };
        let mut e = edge(0, 1, 0.0, 1.0);
        e.w_b = 5.0;
        apply_node_correction(&mut e, &nc(1.0), &nc(1.0));
        assert_eq!(e.w_n, 5.0);
        e.w_b = 1.0;
        apply_node_correction(&mut e, &nc(2.0), &nc(3.0));
        assert_eq!(e.w_n, 6.0);
        e.w_b = 4.0;
        apply_node_correction(&mut e, &nc(0.5), &nc(0.5));
        assert_eq!(e.w_n, 1.0);
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta(&stats(3, 1, None, None)), 0.5);
        assert_eq!(beta(&stats(2, 2, None, None)), 0.0);
        assert_eq!(beta(&stats(4, 0, None, None)), 1.0);
        assert_eq!(beta(&stats(0, 4, None, None)), -1.0);
    }

    #[test]
    fn one_week_window_theta() {
        // P_T = 7 days, edge one day after the source's mean inbound time, β_s = 0.5
        let window = TimeWindow::new(0, 604_800).unwrap();
        let src = stats(3, 1, Some(100_000.0), Some(186_400.0));
        let dst = stats(1, 0, Some(186_400.0), None);
        let tc = temporal_correction(&edge(0, 1, 186_400.0, 1.0), &src, &dst, &window, &WeightConfig::default());
        assert_eq!(tc.tau_s_out, Some(7.0));
        assert!((tc.theta_s - 3.5f64.exp()).abs() < 1e-9);
        assert!((tc.theta_s - 33.115).abs() < 1e-3);
        assert_eq!(tc.theta_d, 1.0);
    }

    #[test]
    fn balanced_node_is_neutral() {
        let window = TimeWindow::new(0, 100).unwrap();
        let src = stats(2, 2, Some(10.0), Some(20.0));
        let tc = temporal_correction(&edge(0, 1, 50.0, 1.0), &src, &src, &window, &WeightConfig::default());
        assert_eq!(tc.theta_s, 1.0);
    }

    #[test]
    fn tau_denominator_is_clamped() {
        let window = TimeWindow::new(0, 100).unwrap();
        let cfg = WeightConfig::default();
        let src = stats(3, 1, Some(50.0), None);
        let dst = stats(1, 0, None, None);
        let tc = temporal_correction(&edge(0, 1, 50.0, 1.0), &src, &dst, &window, &cfg);
        assert_eq!(tc.tau_s_out, Some(100.0));
        let tc = temporal_correction(&edge(0, 1, 49.5, 1.0), &src, &dst, &window, &cfg);
        assert_eq!(tc.tau_s_out, Some(-100.0));
        assert!(tc.theta_s <= 30f64.exp() && tc.theta_s >= (-30f64).exp());
    }

    #[test]
    fn final_weight_cases() {
        let tc = |beta_s, beta_d| TemporalCorrection {
            beta_s,
            beta_d,
            tau_s_out: None,
            tau_d_in: None,
            theta_s: 2.0,
            theta_d: 3.0,
        };
        let w = |t: TemporalCorrection| {
            let mut e = edge(0, 1, 0.0, 1.0);
            final_weight(&mut e, &t);
            e.w_e
        };
        assert_eq!(w(tc(0.5, -0.5)), 6.0);
        assert_eq!(w(tc(0.5, 0.5)), 2.0);
        assert_eq!(w(tc(-0.5, -0.5)), 3.0);
        assert_eq!(w(tc(-0.5, 0.5)), 1.0);
        assert_eq!(w(tc(0.0, 0.0)), 1.0);
        let mut looped = edge(1, 1, 0.0, 1.0);
        final_weight(&mut looped, &tc(0.5, -0.5));
        assert_eq!(looped.w_e, 1.0);
    }

    #[test]
    fn fan_in_fan_out_bridge_gets_both_factors() {
        // m* -> A early, A -> B mid window, B -> x* late
        let rows = [
            ("m1", "A", 100, 100),
            ("m2", "A", 100, 110),
            ("m3", "A", 100, 120),
            ("A", "B", 300, 500),
            ("B", "x1", 100, 900),
            ("B", "x2", 100, 910),
            ("B", "x3", 100, 920),
        ];
        let window = TimeWindow::new(0, 1000).unwrap();
        let g = graph(&rows, window);
        let cfg = WeightConfig::default();
        let a = g.accounts.iter().position(|n| n == "A").unwrap() as u32;
        let b = g.accounts.iter().position(|n| n == "B").unwrap() as u32;
        for e in &g.edges {
            let tc = temporal_correction(e, &g.stats[e.src as usize], &g.stats[e.dst as usize], &window, &cfg);
            let both = tc.beta_s > 0.0 && tc.beta_d < 0.0;
            assert_eq!(both, (e.src, e.dst) == (a, b));
            if both {
                assert!(tc.theta_s > 1.0 && tc.theta_d > 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn p1_timing_sign(deg_in in 2u32..10, deg_out in 1u32..2, t_in in 0.0f64..500.0, t_edge in 0.0f64..1000.0) {
            let window = TimeWindow::new(0, 1000).unwrap();
            let cfg = WeightConfig::default();
            prop_assume!((t_edge - t_in).abs() > 1e-6);
            let src = stats(deg_in, deg_out, Some(t_in), Some(t_edge));
            let dst = stats(1, 0, Some(t_edge), None);
            let tc = temporal_correction(&edge(0, 1, t_edge, 1.0), &src, &dst, &window, &cfg);
            prop_assert!(tc.beta_s > 0.0);
            if t_edge > t_in {
                prop_assert!(tc.theta_s > 1.0);
            } else {
                prop_assert!(tc.theta_s < 1.0);
            }
        }

        #[test]
        fn tighter_timing_means_larger_correction(gap_a in 1.0f64..500.0, gap_b in 1.0f64..500.0) {
            let window = TimeWindow::new(0, 1000).unwrap();
            let cfg = WeightConfig { exponent_clamp: 1e9, ..Default::default() };
            let src = stats(3, 1, Some(0.0), None);
            let dst = stats(1, 0, None, None);
            let ta = temporal_correction(&edge(0, 1, gap_a, 1.0), &src, &dst, &window, &cfg);
            let tb = temporal_correction(&edge(0, 1, gap_b, 1.0), &src, &dst, &window, &cfg);
            let (ea, eb) = ((ta.beta_s * ta.tau_s_out.unwrap()).abs(), (tb.beta_s * tb.tau_s_out.unwrap()).abs());
            if gap_a < gap_b { prop_assert!(ea >= eb) } else { prop_assert!(ea <= eb) }
        }

        #[test]
        fn weights_positive_and_bounded(rows in prop::collection::vec((0u8..12, 0u8..12, 1i64..1_000_000, 0i64..10_000), 1..60)) {
            let owned: Vec<(String, String, i64, i64)> =
                rows.into_iter().map(|(s, d, a, t)| (format!("n{s}"), format!("n{d}"), a, t)).collect();
            let refs: Vec<(&str, &str, i64, i64)> = owned.iter().map(|(s, d, a, t)| (s.as_str(), d.as_str(), *a, *t)).collect();
            let mut g = graph(&refs, TimeWindow::new(0, 10_000).unwrap());
            let cfg = WeightConfig::default();
            crate::ingest::compute_primitive_weights(&mut g.edges, &cfg.primitive()).unwrap();
            apply_weights(&mut g, &cfg).unwrap();
            let corr = node_corrections(&g, &cfg).unwrap();
            for c in &corr {
                prop_assert!(c.sigma >= (-30f64).exp() && c.sigma <= 30f64.exp());
            }
            for e in &g.edges {
                prop_assert!(e.w_e > 0.0 && e.w_e.is_finite());
                let tc = temporal_correction(e, &g.stats[e.src as usize], &g.stats[e.dst as usize], &g.window, &cfg);
                prop_assert!((-1.0..=1.0).contains(&tc.beta_s) && (-1.0..=1.0).contains(&tc.beta_d));
                prop_assert!(tc.theta_s >= (-30f64).exp() && tc.theta_s <= 30f64.exp());
                prop_assert!(tc.theta_d >= (-30f64).exp() && tc.theta_d <= 30f64.exp());
            }
        }
    }

    #[test]
    fn neutral_corrections_leave_primitive_weight() {
        let mut e = edge(0, 1, 10.0, 1.0);
        e.w_b = 2.5;
        let unit = NodeCorrection {
            money_std: 0.0,
            count_std: 0.0,
            degree_std: 0.0,
            sigma: 1.0,
        };
        apply_node_correction(&mut e, &unit, &unit);
        let tc = TemporalCorrection {
            beta_s: 0.0,
            beta_d: 0.0,
            tau_s_out: None,
            tau_d_in: None,
            theta_s: 1.0,
            theta_d: 1.0,
        };
        final_weight(&mut e, &tc);
        assert_eq!(e.w_e, 2.5);
    }
}
