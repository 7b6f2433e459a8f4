//! Raw transaction parsing, edge merging and primitive edge weights.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats::{check_ratios, exp_clamped};
use crate::{Error, Result};

pub use crate::stats::standardize;

/// Dense node id assigned when accounts are interned.
pub type NodeId = u32;

pub const CSV_HEADER: [&str; 5] = ["txn_id", "src", "dst", "amount", "timestamp"];

/// Half-open observation window `[start, end)` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        let w = TimeWindow { start, end };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.end <= self.start {
            return Err(Error::Config(format!(
                "time window end ({}) must be after start ({})",
                self.end, self.start
            )));
        }
        Ok(())
    }

    /// Window length `P_T` in seconds.
    pub fn duration(&self) -> f64 {
        (self.end - self.start) as f64
    }

    pub fn contains(&self, t: i64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Money in integer minor units (cents).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Amount(pub i64);

impl Amount {
    pub fn minor_units(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Amount {
    type Err = Error;

    /// Accepts plain decimals with at most two fractional digits.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("invalid amount {s:?}"));
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if frac.len() > 2 || !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let mut cents: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        if frac.len() == 1 {
            cents *= 10;
        }
        let v = whole.checked_mul(100).and_then(|w| w.checked_add(cents)).ok_or_else(bad)?;
        Ok(Amount(if neg { -v } else { v }))
    }
}

/// One raw transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub txn_id: String,
    pub src: String,
    pub dst: String,
    pub amount: Amount,
    pub timestamp: i64,
}

/// Result of reading a transaction file.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<TransactionRecord>,
    pub total_rows: usize,
    pub malformed: usize,
    pub out_of_window: usize,
}

/// Reads transactions whose timestamp falls inside `window`.
///
/// Malformed rows are skipped and counted; the read fails only when more than
/// half of the rows are malformed.
pub fn parse_transactions(path: &Path, window: &TimeWindow) -> Result<ParseOutcome> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let out = parse_transactions_from_reader(file, window)?;
    info!(
        "parsed {}: {} rows, {} kept, {} outside window, {} malformed",
        path.display(),
        out.total_rows,
        out.records.len(),
        out.out_of_window,
        out.malformed
    );
    Ok(out)
}

pub fn parse_transactions_from_reader<R: Read>(reader: R, window: &TimeWindow) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(format!("cannot read header: {e}")))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Format(format!(
            "expected header {}, found {}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out = ParseOutcome::default();
    for row in rdr.records() {
        out.total_rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                out.malformed += 1;
                continue;
            }
        };
        match parse_row(&row) {
            Some(rec) if window.contains(rec.timestamp) => out.records.push(rec),
            Some(_) => out.out_of_window += 1,
            None => out.malformed += 1,
        }
    }
    if out.malformed > 0 {
        warn!("{} of {} rows malformed", out.malformed, out.total_rows);
    }
    if out.malformed * 2 > out.total_rows {
        return Err(Error::Format(format!(
            "{} of {} rows are malformed",
            out.malformed, out.total_rows
        )));
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord) -> Option<TransactionRecord> {
    if row.len() != CSV_HEADER.len() {
        return None;
    }
    let (src, dst) = (&row[1], &row[2]);
    if src.is_empty() || dst.is_empty() {
        return None;
    }
    let amount: Amount = row[3].parse().ok()?;
    if amount.0 < 0 {
        return None;
    }
    let timestamp: i64 = row[4].parse().ok()?;
    Some(TransactionRecord {
        txn_id: row[0].to_string(),
        src: src.to_string(),
        dst: dst.to_string(),
        amount,
        timestamp,
    })
}

/// Writes records in the ingest CSV format.
pub fn write_transactions<W: std::io::Write>(writer: W, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.txn_id.as_str(),
            r.src.as_str(),
            r.dst.as_str(),
            &r.amount.to_string(),
            &r.timestamp.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// All transfers between one ordered account pair, aggregated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    /// Total money `M`.
    pub money: Amount,
    /// Number of merged transfers `C`.
    pub count: u64,
    /// Sum of the merged timestamps; `mean_time = time_sum / count`.
    pub time_sum: i128,
    /// Mean transfer time point `T_sd`.
    pub mean_time: f64,
    pub money_std: f64,
    pub count_std: f64,
    /// Primitive weight.
    pub w_b: f64,
    /// Node-corrected weight.
    pub w_n: f64,
    /// Final weight after temporal correction.
    pub w_e: f64,
}

impl MergedEdge {
    pub fn is_self_loop(&self) -> bool {
        self.src == self.dst
    }
}

/// Merged edges together with the account table their ids index into.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergedEdges {
    /// Account ids sorted lexicographically; `NodeId` is the index.
    pub accounts: Vec<String>,
    /// One edge per ordered pair, sorted by `(src, dst)`.
    pub edges: Vec<MergedEdge>,
}

#[derive(Debug, Clone, Copy, Default)]
struct PairAgg {
    money: i64,
    count: u64,
    time_sum: i128,
}

impl PairAgg {
    fn absorb(&mut self, other: PairAgg) {
        self.money += other.money;
        self.count += other.count;
        self.time_sum += other.time_sum;
    }
}

/// Groups records by ordered `(src, dst)` pair, summing money and count and
/// averaging the timestamps.
///
/// All sums are exact integers, so the result does not depend on record order
/// or on how the work is split across threads.
pub fn merge_edges(records: &[TransactionRecord]) -> MergedEdges {
    let mut names: Vec<&str> = records
        .par_iter()
        .flat_map_iter(|r| [r.src.as_str(), r.dst.as_str()])
        .collect();
    names.par_sort_unstable();
    names.dedup();
    let index: HashMap<&str, NodeId> = names.iter().enumerate().map(|(i, n)| (*n, i as NodeId)).collect();

    let aggregated = records
        .par_iter()
        .fold(HashMap::<(NodeId, NodeId), PairAgg>::new, |mut acc, r| {
            let key = (index[r.src.as_str()], index[r.dst.as_str()]);
            acc.entry(key).or_default().absorb(PairAgg {
                money: r.amount.0,
                count: 1,
                time_sum: r.timestamp as i128,
            });
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                a.entry(k).or_default().absorb(v);
            }
            a
        });

    let mut edges: Vec<MergedEdge> = aggregated
        .into_iter()
        .map(|((src, dst), agg)| MergedEdge {
            src,
            dst,
            money: Amount(agg.money),
            count: agg.count,
            time_sum: agg.time_sum,
            mean_time: agg.time_sum as f64 / agg.count as f64,
            money_std: 0.0,
            count_std: 0.0,
            w_b: 1.0,
            w_n: 1.0,
            w_e: 1.0,
        })
        .collect();
    edges.par_sort_unstable_by_key(|e| (e.src, e.dst));

    MergedEdges {
        accounts: names.into_iter().map(str::to_owned).collect(),
        edges,
    }
}

/// Parameters of the primitive edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveWeightParams {
    pub omega_money: f64,
    pub omega_count: f64,
    pub exponent_clamp: f64,
    /// Apply `ln(1 + M)` before standardizing money.
    pub log_money: bool,
}

impl Default for PrimitiveWeightParams {
    fn default() -> Self {
        PrimitiveWeightParams {
            omega_money: 0.5,
            omega_count: 0.5,
            exponent_clamp: crate::stats::DEFAULT_EXPONENT_CLAMP,
            log_money: false,
        }
    }
}

/// Sets `money_std`, `count_std` and `w_b = exp(ω_m·M̄ + ω_c·C̄)` on every edge.
///
/// Standardization runs over all edges passed in.
pub fn compute_primitive_weights(edges: &mut [MergedEdge], params: &PrimitiveWeightParams) -> Result<()> {
    check_ratios("primitive weight", &[params.omega_money, params.omega_count])?;
    if edges.is_empty() {
        return Ok(());
    }
    let money: Vec<f64> = edges
        .iter()
        .map(|e| {
            let m = e.money.as_f64();
            if params.log_money {
                m.ln_1p()
            } else {
                m
            }
        })
        .collect();
    let count: Vec<f64> = edges.iter().map(|e| e.count as f64).collect();
    let money_std = standardize(&money)?;
    let count_std = standardize(&count)?;
    for ((e, m), c) in edges.iter_mut().zip(money_std).zip(count_std) {
        e.money_std = m;
        e.count_std = c;
        e.w_b = exp_clamped(params.omega_money * m + params.omega_count * c, params.exponent_clamp);
        e.w_n = e.w_b;
        e.w_e = e.w_b;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(src: &str, dst: &str, cents: i64, t: i64) -> TransactionRecord {
        TransactionRecord {
            txn_id: format!("{src}{dst}{t}"),
            src: src.into(),
            dst: dst.into(),
            amount: Amount(cents),
            timestamp: t,
        }
    }

    fn window() -> TimeWindow {
        TimeWindow::new(0, 1000).unwrap()
    }

    #[test]
    fn amount_parsing() {
        assert_eq!("12.34".parse::<Amount>().unwrap(), Amount(1234));
        assert_eq!("12.3".parse::<Amount>().unwrap(), Amount(1230));
        assert_eq!("12".parse::<Amount>().unwrap(), Amount(1200));
        assert_eq!(".5".parse::<Amount>().unwrap(), Amount(50));
        assert_eq!("-1.00".parse::<Amount>().unwrap(), Amount(-100));
        assert!("1.234".parse::<Amount>().is_err());
        assert!("abc".parse::<Amount>().is_err());
        assert!("".parse::<Amount>().is_err());
        assert!("1e5".parse::<Amount>().is_err());
        assert_eq!(Amount(1234).to_string(), "12.34");
        assert_eq!(Amount(5).to_string(), "0.05");
    }

    #[test]
    fn window_rejects_empty_interval() {
        assert!(TimeWindow::new(10, 10).is_err());
        assert!(TimeWindow::new(10, 5).is_err());
        assert_eq!(window().duration(), 1000.0);
    }

    #[test]
    fn header_only_file_is_empty() {
        let out = parse_transactions_from_reader("txn_id,src,dst,amount,timestamp\n".as_bytes(), &window()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.total_rows, 0);
    }

    #[test]
    fn rows_outside_window_are_dropped() {
        let csv = "txn_id,src,dst,amount,timestamp\n1,A,B,1.00,10\n2,B,C,2.00,999\n3,A,C,3.00,1000\n";
        let out = parse_transactions_from_reader(csv.as_bytes(), &window()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.out_of_window, 1);
        assert_eq!(out.malformed, 0);
    }

    #[test]
    fn negative_amount_is_malformed() {
        let csv = "txn_id,src,dst,amount,timestamp\n1,A,B,-1.00,10\n2,B,C,2.00,20\n3,A,C,3.00,30\n";
        let out = parse_transactions_from_reader(csv.as_bytes(), &window()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.malformed, 1);
    }

    #[test]
    fn mostly_malformed_file_is_fatal() {
        let csv = "txn_id,src,dst,amount,timestamp\n1,A,B,x,10\n2,B,C,2.00\n3,A,C,3.00,30\n";
        let err = parse_transactions_from_reader(csv.as_bytes(), &window()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn wrong_header_is_fatal() {
        let csv = "id,from,to,amount,ts\n1,A,B,1,10\n";
        assert!(parse_transactions_from_reader(csv.as_bytes(), &window()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_transactions(Path::new("/nonexistent/txns.csv"), &window()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn merge_sums_and_averages() {
        let merged = merge_edges(&[rec("A", "B", 1000, 100), rec("A", "B", 2000, 300)]);
        assert_eq!(merged.edges.len(), 1);
        let e = &merged.edges[0];
        assert_eq!(e.money, Amount(3000));
        assert_eq!(e.count, 2);
        assert_eq!(e.mean_time, 200.0);
    }

    #[test]
    fn merge_preserves_direction() {
        let merged = merge_edges(&[rec("A", "B", 1, 1), rec("B", "A", 1, 2)]);
        assert_eq!(merged.accounts, vec!["A", "B"]);
        let pairs: Vec<_> = merged.edges.iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn single_record_is_identity() {
        let merged = merge_edges(&[rec("X", "Y", 555, 42)]);
        let e = &merged.edges[0];
        assert_eq!((e.money, e.count, e.mean_time), (Amount(555), 1, 42.0));
    }

    #[test]
    fn neutral_edge_has_unit_weight() {
        let mut edges = merge_edges(&[rec("A", "B", 100, 1), rec("B", "C", 100, 2), rec("C", "A", 100, 3)]).edges;
        compute_primitive_weights(&mut edges, &PrimitiveWeightParams::default()).unwrap();
        assert!(edges.iter().all(|e| e.w_b == 1.0));
    }

    #[test]
    fn unit_standardized_values_give_e() {
        // two edges: (M,C) = (1,1) and (3,3) -> standardized -1 and +1
        let mut edges = merge_edges(&[
            rec("A", "B", 100, 1),
            rec("C", "D", 100, 1),
            rec("C", "D", 100, 1),
            rec("C", "D", 100, 1),
        ])
        .edges;
        compute_primitive_weights(&mut edges, &PrimitiveWeightParams::default()).unwrap();
        assert!((edges[1].money_std - 1.0).abs() < 1e-12);
        assert!((edges[1].count_std - 1.0).abs() < 1e-12);
        assert!((edges[1].w_b - std::f64::consts::E).abs() < 1e-12);
        assert!((edges[0].w_b - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_ratios_rejected() {
        let mut edges = merge_edges(&[rec("A", "B", 1, 1)]).edges;
        let params = PrimitiveWeightParams {
            omega_money: 0.7,
            omega_count: 0.7,
            ..Default::default()
        };
        assert!(matches!(compute_primitive_weights(&mut edges, &params), Err(Error::Config(_))));
    }

    #[test]
    fn weight_increases_with_money() {
        let base = vec![rec("A", "B", 100, 1), rec("C", "D", 500, 1), rec("E", "F", 900, 1)];
        let mut richer = base.clone();
        richer[0].amount = Amount(300);
        let mut lo = merge_edges(&base).edges;
        let mut hi = merge_edges(&richer).edges;
        let p = PrimitiveWeightParams::default();
        compute_primitive_weights(&mut lo, &p).unwrap();
        compute_primitive_weights(&mut hi, &p).unwrap();
        assert!(hi[0].w_b > lo[0].w_b);
    }

    fn arb_records() -> impl Strategy<Value = Vec<TransactionRecord>> {
        prop::collection::vec((0u8..8, 0u8..8, 0i64..100_000, 0i64..1000), 0..80).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (s, d, a, t))| TransactionRecord {
                    txn_id: i.to_string(),
                    src: format!("n{s}"),
                    dst: format!("n{d}"),
                    amount: Amount(a),
                    timestamp: t,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merge_conserves_totals_and_ignores_order(records in arb_records(), seed in any::<u64>()) {
            let merged = merge_edges(&records);
            let money: i64 = merged.edges.iter().map(|e| e.money.0).sum();
            let count: u64 = merged.edges.iter().map(|e| e.count).sum();
            prop_assert_eq!(money, records.iter().map(|r| r.amount.0).sum::<i64>());
            prop_assert_eq!(count, records.len() as u64);

            let mut shuffled = records.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(merge_edges(&shuffled), merged);
        }

        #[test]
        fn primitive_weights_are_bounded(records in arb_records()) {
            let mut edges = merge_edges(&records).edges;
            compute_primitive_weights(&mut edges, &PrimitiveWeightParams::default()).unwrap();
            for e in &edges {
                prop_assert!(e.w_b >= (-30f64).exp() && e.w_b <= 30f64.exp());
            }
        }
    }
}
