//! Seeded synthetic transaction data with injected laundering gangs.

use std::io::Write;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{write_transactions, Amount, TimeWindow, TransactionRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    /// Mules fan in to the hubs, which later pay out to a few exits.
    P1,
    /// A few entries pay the hubs, which later fan out to mules.
    P2,
    /// A P1 gang whose hub feeds a P2 gang through one bridge transfer.
    Layered,
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Pattern::P1),
            "p2" => Ok(Pattern::P2),
            "layered" => Ok(Pattern::Layered),
            _ => Err(Error::Config(format!("unknown gang pattern {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GangSpec {
    pub pattern: Pattern,
    /// Fan width: accounts on the many-to-hub side.
    pub mule_count: usize,
    pub hub_count: usize,
    /// Accounts on the few-to-hub side.
    pub exit_count: usize,
    /// Gang amounts relative to the background mean amount.
    pub amount_scale: f64,
    /// Length in seconds of each activity phase.
    pub time_spread: i64,
    /// Seconds between the fan-in and fan-out phases.
    pub phase_gap: i64,
}

impl Default for GangSpec {
    fn default() -> Self {
        GangSpec {
            pattern: Pattern::P1,
            mule_count: 24,
            hub_count: 8,
            exit_count: 4,
            amount_scale: 5.0,
            time_spread: 86_400,
            phase_gap: 86_400,
        }
    }
}

impl GangSpec {
    pub fn with_pattern(pattern: Pattern) -> Self {
        GangSpec {
            pattern,
            ..GangSpec::default()
        }
    }

    fn phases(&self) -> i64 {
        match self.pattern {
            Pattern::P1 | Pattern::P2 => 2,
            Pattern::Layered => 3,
        }
    }

    /// Seconds from the first to the last gang transfer, at most.
    pub fn span(&self) -> i64 {
        self.phases() * self.time_spread + (self.phases() - 1) * self.phase_gap
    }

    /// Accounts the gang occupies.
    pub fn node_count(&self) -> usize {
        let one = self.mule_count + self.hub_count + self.exit_count;
        match self.pattern {
            Pattern::Layered => 2 * one,
            _ => one,
        }
    }

    fn validate(&self, window: &TimeWindow) -> Result<()> {
        if self.mule_count < 2 || self.hub_count < 1 || self.exit_count < 1 {
            return Err(Error::Config(
                "a gang needs at least 2 mules, 1 hub and 1 exit".into(),
            ));
        }
        if !(self.amount_scale > 0.0 && self.amount_scale.is_finite()) {
            return Err(Error::Config(format!("amount_scale must be positive, got {}", self.amount_scale)));
        }
        if self.time_spread < 1 || self.phase_gap < 0 {
            return Err(Error::Config("time_spread must be positive and phase_gap non-negative".into()));
        }
        if self.span() >= window.end - window.start {
            return Err(Error::Config(format!(
                "gang activity spans {} s, which does not fit the {} s window",
                self.span(),
                window.end - window.start
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub background_nodes: usize,
    /// Mean background transfers per node.
    pub background_txn_rate: f64,
    /// Fraction of background accounts that are merchants. Merchants never
    /// join gangs.
    pub merchant_fraction: f64,
    /// Fraction of background transfers paid to a merchant rather than a
    /// uniformly chosen peer.
    pub merchant_share: f64,
    /// Zipf exponent of merchant popularity.
    pub merchant_zipf: f64,
    pub window: TimeWindow,
    /// Log-normal parameters of background amounts (currency units).
    pub amount_mu: f64,
    pub amount_sigma: f64,
    pub gangs: Vec<GangSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            background_nodes: 2000,
            background_txn_rate: 1.0,
            merchant_fraction: 0.02,
            merchant_share: 0.9,
            merchant_zipf: 1.0,
            window: TimeWindow {
                start: 1_700_000_000,
                end: 1_700_000_000 + 30 * 86_400,
            },
            amount_mu: 5.0,
            amount_sigma: 1.0,
            gangs: vec![
                GangSpec::with_pattern(Pattern::P1),
                GangSpec::with_pattern(Pattern::P2),
                GangSpec::with_pattern(Pattern::Layered),
            ],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !(self.background_txn_rate >= 0.0 && self.background_txn_rate.is_finite()) {
            return Err(Error::Config("background_txn_rate must be non-negative".into()));
        }
        if self.background_txn_rate > 0.0 && self.background_nodes == 1 {
            return Err(Error::Config("background transfers need at least 2 background nodes".into()));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.merchant_fraction) || !unit.contains(&self.merchant_share) {
            return Err(Error::Config("merchant_fraction and merchant_share must lie in [0, 1]".into()));
        }
        if !(self.merchant_zipf >= 0.0 && self.merchant_zipf.is_finite()) {
            return Err(Error::Config("merchant_zipf must be non-negative".into()));
        }
        if !(self.amount_sigma >= 0.0 && self.amount_mu.is_finite() && self.amount_sigma.is_finite()) {
            return Err(Error::Config("invalid log-normal amount parameters".into()));
        }
        for g in &self.gangs {
            g.validate(&self.window)?;
        }
        let demand: usize = self.gangs.iter().map(GangSpec::node_count).sum();
        let customers = self.background_nodes - self.merchant_count();
        if demand > customers {
            return Err(Error::Config(format!(
                "gangs need {demand} accounts but only {customers} non-merchant accounts exist"
            )));
        }
        Ok(())
    }

    /// Merchants are accounts `0..merchant_count()`, most popular first.
    pub fn merchant_count(&self) -> usize {
        (self.merchant_fraction * self.background_nodes as f64).round() as usize
    }
}

/// Generated transfers plus each account's gang (`None` for background).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub records: Vec<TransactionRecord>,
    pub labels: Vec<(String, Option<usize>)>,
}

impl SynthDataset {
    pub fn gang_members(&self, gang: usize) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|(_, g)| *g == Some(gang))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn write_transactions(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_transactions(std::io::BufWriter::new(file), &self.records)
    }

    pub fn write_labels_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "gang_id"])?;
        for (node, gang) in &self.labels {
            let g = gang.map_or_else(|| "background".to_string(), |g| format!("gang{g}"));
            w.write_record([node.as_str(), g.as_str()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_labels(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_labels_to(std::io::BufWriter::new(file))
    }
}

pub fn account_name(i: usize) -> String {
    format!("acct{i:06}")
}

struct Emitter {
    rng: ChaCha8Rng,
    records: Vec<TransactionRecord>,
}

impl Emitter {
    fn push(&mut self, src: usize, dst: usize, cents: i64, timestamp: i64) {
        let txn_id = format!("t{:08}", self.records.len());
        self.records.push(TransactionRecord {
            txn_id,
            src: account_name(src),
            dst: account_name(dst),
            amount: Amount(cents.max(1)),
            timestamp,
        });
    }

    fn time_in(&mut self, start: i64, len: i64) -> i64 {
        start + self.rng.gen_range(0..len)
    }

    fn gang_cents(&mut self, mean: f64, scale: f64) -> i64 {
        (mean * scale * self.rng.gen_range(0.8..1.2) * 100.0).round() as i64
    }
}

/// Many-to-hub transfers in phase `a`, hub-to-few transfers in phase `b`
/// (or the mirror image for a fan-out gang).
#[allow(clippy::too_many_arguments)]
fn emit_fan(
    em: &mut Emitter,
    gs: &GangSpec,
    mules: &[usize],
    hubs: &[usize],
    exits: &[usize],
    fan_in: bool,
    starts: (i64, i64),
    mean: f64,
) {
    let spread = gs.time_spread;
    if fan_in {
        for &m in mules {
            for &h in hubs {
                let (c, t) = (em.gang_cents(mean, gs.amount_scale), em.time_in(starts.0, spread));
                em.push(m, h, c, t);
            }
        }
        for &h in hubs {
            for &x in exits {
                let scale = gs.amount_scale * mules.len() as f64 / exits.len() as f64;
                let (c, t) = (em.gang_cents(mean, scale), em.time_in(starts.1, spread));
                em.push(h, x, c, t);
            }
        }
    } else {
        for &x in exits {
            for &h in hubs {
                let scale = gs.amount_scale * mules.len() as f64 / exits.len() as f64;
                let (c, t) = (em.gang_cents(mean, scale), em.time_in(starts.0, spread));
                em.push(x, h, c, t);
            }
        }
        for &h in hubs {
            for &m in mules {
                let (c, t) = (em.gang_cents(mean, gs.amount_scale), em.time_in(starts.1, spread));
                em.push(h, m, c, t);
            }
        }
    }
}

/// Deterministic dataset for `cfg`; identical seeds give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut em = Emitter {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        records: Vec::new(),
    };
    let window = cfg.window;
    let duration = window.end - window.start;
    let amounts = LogNormal::new(cfg.amount_mu, cfg.amount_sigma)
        .map_err(|e| Error::Config(format!("invalid log-normal amount parameters: {e}")))?;
    let mean = (cfg.amount_mu + cfg.amount_sigma * cfg.amount_sigma / 2.0).exp();

    let n = cfg.background_nodes;
    let background = (cfg.background_txn_rate * n as f64).round() as usize;
    let merchants = cfg.merchant_count();
    let popularity = if merchants > 0 {
        let w = (1..=merchants).map(|r| (r as f64).powf(-cfg.merchant_zipf));
        Some(WeightedIndex::new(w).map_err(|e| Error::Config(format!("merchant popularity: {e}")))?)
    } else {
        None
    };
    for _ in 0..background {
        let src = em.rng.gen_range(0..n);
        let to_merchant = em.rng.gen_bool(cfg.merchant_share);
        let dst = match &popularity {
            Some(pop) if to_merchant && !(merchants == 1 && src == 0) => {
                let mut d = pop.sample(&mut em.rng);
                while d == src {
                    d = pop.sample(&mut em.rng);
                }
                d
            }
            _ => {
                let d = em.rng.gen_range(0..n - 1);
                if d >= src {
                    d + 1
                } else {
                    d
                }
            }
        };
        let cents = (amounts.sample(&mut em.rng) * 100.0).round() as i64;
        let t = em.time_in(window.start, duration);
        em.push(src, dst, cents, t);
    }

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let demand: usize = cfg.gangs.iter().map(GangSpec::node_count).sum();
    let mut pool = sample(&mut em.rng, n - merchants, demand)
        .into_iter()
        .map(|i| i + merchants)
        .collect::<Vec<_>>()
        .into_iter();
    for (gi, gs) in cfg.gangs.iter().enumerate() {
        let mut take = |k: usize| -> Vec<usize> {
            let v: Vec<usize> = pool.by_ref().take(k).collect();
            for &i in &v {
                labels[i] = Some(gi);
            }
            v
        };
        let (m, h, x) = (gs.mule_count, gs.hub_count, gs.exit_count);
        let step = gs.time_spread + gs.phase_gap;
        let start = em.time_in(window.start, duration - gs.span());
        match gs.pattern {
            Pattern::P1 | Pattern::P2 => {
                let (mules, hubs, exits) = (take(m), take(h), take(x));
                let fan_in = gs.pattern == Pattern::P1;
                emit_fan(&mut em, gs, &mules, &hubs, &exits, fan_in, (start, start + step), mean);
            }
            Pattern::Layered => {
                let (mules, hubs, exits) = (take(m), take(h), take(x));
                emit_fan(&mut em, gs, &mules, &hubs, &exits, true, (start, start + step), mean);
                let (mules2, hubs2, exits2) = (take(m), take(h), take(x));
                let c = em.gang_cents(mean, gs.amount_scale);
                let t = em.time_in(start + step, gs.time_spread);
                em.push(hubs[0], hubs2[0], c, t);
                emit_fan(&mut em, gs, &mules2, &hubs2, &exits2, false, (start + step, start + 2 * step), mean);
            }
        }
    }

    Ok(SynthDataset {
        records: em.records,
        labels: labels.into_iter().enumerate().map(|(i, g)| (account_name(i), g)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, filter_isolated_edges, weakly_connected_components};
    use crate::ingest::merge_edges;

    fn gang_only(gs: GangSpec) -> SynthConfig {
        SynthConfig {
            background_nodes: gs.node_count(),
            background_txn_rate: 0.0,
            merchant_fraction: 0.0,
            gangs: vec![gs],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn empty_config_gives_empty_dataset() {
        let cfg = SynthConfig {
            background_nodes: 0,
            gangs: vec![],
            ..SynthConfig::default()
        };
        let d = generate(&cfg).unwrap();
        assert!(d.records.is_empty() && d.labels.is_empty());
    }

    #[test]
    fn excess_gang_demand_is_a_config_error() {
        let mut cfg = gang_only(GangSpec::default());
        cfg.background_nodes -= 1;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let too_long = GangSpec {
            time_spread: 20 * 86_400,
            ..GangSpec::default()
        };
        assert!(generate(&gang_only(too_long)).is_err());
        assert!(generate(&gang_only(GangSpec { mule_count: 1, ..GangSpec::default() })).is_err());
    }

    #[test]
    fn p1_hub_is_a_sink_that_pays_out_late() {
        let gs = GangSpec {
            mule_count: 10,
            hub_count: 1,
            exit_count: 3,
            ..GangSpec::default()
        };
        let cfg = gang_only(gs);
        let d = generate(&cfg).unwrap();
        let g = build_graph(merge_edges(&d.records), cfg.window).unwrap();
        let hub = (0..g.node_count()).find(|&i| g.stats[i].deg() == 13).unwrap();
        let s = &g.stats[hub];
        let beta = (s.deg_in as f64 - s.deg_out as f64) / s.deg() as f64;
        assert_eq!(beta, 7.0 / 13.0);
        let t_in = s.t_in_mean.unwrap();
        for e in g.edges.iter().filter(|e| e.src as usize == hub) {
            assert!(e.mean_time > t_in);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig {
            background_nodes: 300,
            ..SynthConfig::default()
        };
        let csv = |d: &SynthDataset| {
            let mut buf = Vec::new();
            write_transactions(&mut buf, &d.records).unwrap();
            d.write_labels_to(&mut buf).unwrap();
            buf
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(csv(&a), csv(&generate(&cfg).unwrap()));
        let other = generate(&SynthConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(csv(&a), csv(&other));
    }

    #[test]
    fn gangs_are_connected_and_survive_pruning() {
        for pattern in [Pattern::P1, Pattern::P2, Pattern::Layered] {
            let cfg = gang_only(GangSpec::with_pattern(pattern));
            let d = generate(&cfg).unwrap();
            let g = build_graph(merge_edges(&d.records), cfg.window).unwrap();
            let pruned = filter_isolated_edges(&g, true);
            assert_eq!(pruned.edge_count(), g.edge_count());
            let comps = weakly_connected_components(&pruned);
            assert!(comps.iter().all(|&c| c == comps[0]));
            assert_eq!(pruned.node_count(), GangSpec::with_pattern(pattern).node_count());
        }
    }

    #[test]
    fn p1_hub_out_edges_follow_inbound_mean() {
        let cfg = gang_only(GangSpec::default());
        let d = generate(&cfg).unwrap();
        let g = build_graph(merge_edges(&d.records), cfg.window).unwrap();
        for (i, s) in g.stats.iter().enumerate() {
            if s.deg_in as usize == cfg.gangs[0].mule_count {
                for e in g.edges.iter().filter(|e| e.src as usize == i) {
                    assert!(e.mean_time > s.t_in_mean.unwrap());
                }
            }
        }
    }
}
