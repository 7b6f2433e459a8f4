//! Community risk metrics, temporal entropy and percentile risk levels.

use serde::{Deserialize, Serialize};

use crate::graph::TransactionGraph;
use crate::ingest::TransactionRecord;
use crate::stats::{check_ratios, dot, exp_clamped, standardize, DEFAULT_EXPONENT_CLAMP};
use crate::thresholds::stable_index;
use crate::{Error, Result};

/// Shannon entropy (bits) of the spread of transfer times around their mean.
///
/// Absolute deviations `|t − T̄|` are split into `bins` equal-width bins over
/// `[0, max deviation]`. Binning runs on exact integers (`|n·t − Σt|`), so
/// the value is invariant under shifting all timestamps.
pub fn temporal_entropy(times: &[i64], bins: usize) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::InvalidInput("temporal entropy of no transactions".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidInput("bin_count must be at least 1".into()));
    }
    let n = times.len() as i128;
    let sum: i128 = times.iter().map(|&t| t as i128).sum();
    let dev: Vec<i128> = times.iter().map(|&t| (n * t as i128 - sum).abs()).collect();
    let max = dev.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Ok(0.0);
    }
    let mut counts = vec![0u64; bins];
    for d in dev {
        let b = ((d * bins as i128) / max).min(bins as i128 - 1) as usize;
        counts[b] += 1;
    }
    let total = times.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityMetrics {
    pub community: u32,
    pub mcs_id: u32,
    pub node_count: usize,
    pub edge_count: usize,
    /// Money moved on intra-community edges, in currency units.
    pub money: f64,
    /// `2·E / V` over intra-community edges.
    pub avg_degree: f64,
    pub entropy: f64,
    pub members: Vec<String>,
}

impl CommunityMetrics {
    fn raw(&self) -> [f64; 5] {
        [
            self.node_count as f64,
            self.edge_count as f64,
            self.money,
            self.avg_degree,
            self.entropy,
        ]
    }
}

/// Per-community metrics over intra-community edges and transfers.
///
/// `assignment` and `mcs_of` are indexed by node of `g`; community ids must be
/// dense. Raw records whose endpoints are not both in `g` are ignored.
pub fn community_metrics(
    g: &TransactionGraph,
    assignment: &[u32],
    mcs_of: &[u32],
    records: &[TransactionRecord],
    bin_count: usize,
) -> Result<Vec<CommunityMetrics>> {
    let n = g.node_count();
    if assignment.len() != n || mcs_of.len() != n {
        return Err(Error::InvalidInput(format!(
            "assignment ({}) / mcs labels ({}) do not cover the {n} graph nodes",
            assignment.len(),
            mcs_of.len()
        )));
    }
    let k = assignment.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut out: Vec<CommunityMetrics> = (0..k)
        .map(|c| CommunityMetrics {
            community: c as u32,
            mcs_id: 0,
            node_count: 0,
            edge_count: 0,
            money: 0.0,
            avg_degree: 0.0,
            entropy: 0.0,
            members: Vec::new(),
        })
        .collect();
    for (i, &c) in assignment.iter().enumerate() {
        let m = &mut out[c as usize];
        if m.node_count > 0 && m.mcs_id != mcs_of[i] {
            return Err(Error::Structural(format!("community {c} spans more than one MCS")));
        }
        m.mcs_id = mcs_of[i];
        m.node_count += 1;
        m.members.push(g.accounts[i].clone());
    }
    if let Some(empty) = out.iter().find(|m| m.node_count == 0) {
        return Err(Error::InvalidInput(format!("community id {} has no members", empty.community)));
    }

    let mut money_minor = vec![0i64; k];
    for e in &g.edges {
        let (cs, cd) = (assignment[e.src as usize], assignment[e.dst as usize]);
        if cs == cd {
            out[cs as usize].edge_count += 1;
            money_minor[cs as usize] += e.money.0;
        }
    }

    let lookup = |name: &str| g.accounts.binary_search_by(|a| a.as_str().cmp(name)).ok();
    let mut times: Vec<Vec<i64>> = vec![Vec::new(); k];
    for r in records {
        if let (Some(s), Some(d)) = (lookup(&r.src), lookup(&r.dst)) {
            let (cs, cd) = (assignment[s], assignment[d]);
            if cs == cd {
                times[cs as usize].push(r.timestamp);
            }
        }
    }

    for (m, (minor, ts)) in out.iter_mut().zip(money_minor.into_iter().zip(times)) {
        m.money = minor as f64 / 100.0;
        m.avg_degree = 2.0 * m.edge_count as f64 / m.node_count as f64;
        m.entropy = if ts.is_empty() { 0.0 } else { temporal_entropy(&ts, bin_count)? };
    }
    Ok(out)
}

/// Ratios of the five standardized metrics in the risk score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskWeights {
    pub nodes: f64,
    pub edges: f64,
    pub money: f64,
    pub degree: f64,
    pub entropy: f64,
}

impl Default for RiskWeights {
    fn default() -> Self {
        RiskWeights {
            nodes: 0.2,
            edges: 0.2,
            money: 0.2,
            degree: 0.2,
            entropy: 0.2,
        }
    }
}

impl RiskWeights {
    fn as_array(&self) -> [f64; 5] {
        [self.nodes, self.edges, self.money, self.degree, self.entropy]
    }

    pub fn validate(&self) -> Result<()> {
        check_ratios("risk score", &self.as_array())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCommunity {
    #[serde(flatten)]
    pub metrics: CommunityMetrics,
    /// Standardized `[V, E, M, D̄, H]`.
    pub standardized: [f64; 5],
    pub psi: f64,
    pub level: Option<u8>,
}

/// Risk score `ψ = exp(Σ ω·z)` over metrics standardized across communities.
/// The result is sorted by descending `ψ`, ties by community id.
pub fn risk_scores(metrics: Vec<CommunityMetrics>, weights: &RiskWeights, clamp: f64) -> Result<Vec<ScoredCommunity>> {
    weights.validate()?;
    if metrics.is_empty() {
        return Ok(Vec::new());
    }
    let columns: Vec<Vec<f64>> = (0..5)
        .map(|j| standardize(&metrics.iter().map(|m| m.raw()[j]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let w = weights.as_array();
    let mut scored: Vec<ScoredCommunity> = metrics
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let z = [columns[0][i], columns[1][i], columns[2][i], columns[3][i], columns[4][i]];
            ScoredCommunity {
                psi: exp_clamped(dot(&w, &z), clamp),
                standardized: z,
                metrics: m,
                level: None,
            }
        })
        .collect();
    scored.sort_by(|a, b| b.psi.total_cmp(&a.psi).then(a.metrics.community.cmp(&b.metrics.community)));
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelConfig {
    /// Descending percentile cuts; level `L` ends at the `L`-th cut.
    pub percentile_cuts: [f64; 3],
    /// An MCS is suspicious with at least this many communities at or below
    /// `level_threshold`.
    pub mcs_level_min: usize,
    pub level_threshold: u8,
}

impl Default for LevelConfig {
    fn default() -> Self {
        LevelConfig {
            percentile_cuts: [95.0, 90.0, 80.0],
            mcs_level_min: 1,
            level_threshold: 2,
        }
    }
}

impl LevelConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.percentile_cuts;
        if !(c[0] <= 100.0 && c[0] >= c[1] && c[1] >= c[2] && c[2] >= 0.0) {
            return Err(Error::Config(format!("percentile cuts must descend within [0, 100], got {c:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsSummary {
    pub mcs_id: u32,
    pub communities: usize,
    /// Communities at levels 1, 2 and 3.
    pub level_counts: [usize; 3],
    pub suspicious: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub modularity: f64,
    pub communities: Vec<ScoredCommunity>,
    pub mcs: Vec<McsSummary>,
    /// Rank after which the sorted score curve flattens; advisory only.
    pub knee_rank: Option<usize>,
}

impl RiskReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "community",
            "mcs_id",
            "level",
            "psi",
            "nodes",
            "edges",
            "money",
            "avg_degree",
            "entropy",
            "members",
        ])?;
        for c in &self.communities {
            let m = &c.metrics;
            w.write_record([
                m.community.to_string(),
                m.mcs_id.to_string(),
                c.level.map_or(String::new(), |l| l.to_string()),
                c.psi.to_string(),
                m.node_count.to_string(),
                m.edge_count.to_string(),
                m.money.to_string(),
                m.avg_degree.to_string(),
                m.entropy.to_string(),
                m.members.join(";"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Number of top-ranked entries covered by a percentile cut (ceiling rank).
fn cut_rank(n: usize, cut: f64) -> usize {
    let frac = (100.0 - cut) / 100.0;
    ((n as f64 * frac) - 1e-9).ceil().max(0.0) as usize
}

/// Assigns levels 1..=3 by descending-score percentile bands. Communities
/// tied with the last member of a band share that band.
pub fn assign_levels(mut scored: Vec<ScoredCommunity>, cfg: &LevelConfig, modularity: f64) -> Result<RiskReport> {
    cfg.validate()?;
    if scored.windows(2).any(|w| w[0].psi < w[1].psi) {
        return Err(Error::InvalidInput("scored communities must be sorted by descending psi".into()));
    }
    let n = scored.len();
    let mut start = 0;
    for (level, &cut) in cfg.percentile_cuts.iter().enumerate() {
        let mut end = cut_rank(n, cut).max(start).min(n);
        while end > start && end < n && scored[end].psi == scored[end - 1].psi {
            end += 1;
        }
        for c in &mut scored[start..end] {
            c.level = Some(level as u8 + 1);
        }
        start = end;
    }

    let mut mcs_ids: Vec<u32> = scored.iter().map(|c| c.metrics.mcs_id).collect();
    mcs_ids.sort_unstable();
    mcs_ids.dedup();
    let mcs = mcs_ids
        .into_iter()
        .map(|id| {
            let mut summary = McsSummary {
                mcs_id: id,
                communities: 0,
                level_counts: [0; 3],
                suspicious: false,
            };
            let mut flagged = 0;
            for c in scored.iter().filter(|c| c.metrics.mcs_id == id) {
                summary.communities += 1;
                if let Some(l) = c.level {
                    summary.level_counts[l as usize - 1] += 1;
                    if l <= cfg.level_threshold {
                        flagged += 1;
                    }
                }
            }
            summary.suspicious = flagged >= cfg.mcs_level_min;
            summary
        })
        .collect();

    let psi: Vec<f64> = scored.iter().map(|c| c.psi).collect();
    let slope: Vec<f64> = psi.windows(2).map(|w| w[1] - w[0]).collect();
    let knee_rank = stable_index(&slope, 0.01).ok();

    Ok(RiskReport {
        modularity,
        communities: scored,
        mcs,
        knee_rank,
    })
}

/// Metrics → scores → levels.
pub fn score_communities(
    metrics: Vec<CommunityMetrics>,
    weights: &RiskWeights,
    levels: &LevelConfig,
    modularity: f64,
) -> Result<RiskReport> {
    let scored = risk_scores(metrics, weights, DEFAULT_EXPONENT_CLAMP)?;
    assign_levels(scored, levels, modularity)
}
