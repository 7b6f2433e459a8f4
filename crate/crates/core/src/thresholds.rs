//! Threshold tuning by curvature stability of filter sweep curves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::graph::{mcs_infos, FilterThresholds, McsInfo, TransactionGraph};
use crate::ingest::NodeId;
use crate::{Error, Result};

pub const MIN_SWEEP_SAMPLES: usize = 5;
pub const DEFAULT_STABILITY_FRACTION: f64 = 0.01;

/// Central second differences on a possibly non-uniform grid.
///
/// Entry `j` belongs to sample `j + 1`; the endpoints have none.
pub fn second_differences(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!("grid has {} samples but curve has {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidInput("second differences need at least 3 samples".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("sweep grid must be strictly increasing".into()));
    }
    Ok((1..xs.len() - 1)
        .map(|i| {
            let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
            2.0 * (h0 * ys[i + 1] - (h0 + h1) * ys[i] + h1 * ys[i - 1]) / (h0 * h1 * (h0 + h1))
        })
        .collect())
}

/// Smallest index from which every `|values[i..]|` stays within
/// `fraction · max |values|`.
pub fn stable_index(values: &[f64], fraction: f64) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::InvalidInput("stability of an empty series".into()));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!("stability fraction {fraction} outside [0, 1)")));
    }
    let eps = fraction * values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(values.iter().rposition(|v| v.abs() > eps).map_or(0, |i| i + 1))
}

/// Index of the smallest sample after which the curve's second difference
/// stays negligible.
pub fn suggest_from_curve(xs: &[f64], ys: &[f64], fraction: f64) -> Result<usize> {
    if xs.len() < MIN_SWEEP_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "threshold sweep needs at least {MIN_SWEEP_SAMPLES} samples, got {}",
            xs.len()
        )));
    }
    let d2 = second_differences(xs, ys)?;
    // rounding noise on an affine curve is not curvature
    let span = xs[xs.len() - 1] - xs[0];
    let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())) / (span * span);
    if d2.iter().all(|d| d.abs() <= 1e-9 * scale) {
        return Ok(0);
    }
    // the first stable second difference sits at sample j + 1, so everything
    // strictly after sample j is flat
    stable_index(&d2, fraction)
}

/// Candidate values for each threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub v_min: Vec<usize>,
    pub v_max: Vec<usize>,
    pub d_hub: Vec<u32>,
    pub n_hub: Vec<usize>,
    pub stability_fraction: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            v_min: (1..=50).collect(),
            v_max: (1..=50).map(|i| i * 100).collect(),
            d_hub: (1..=60).collect(),
            n_hub: (0..=30).collect(),
            stability_fraction: DEFAULT_STABILITY_FRACTION,
        }
    }
}

/// One sampled curve with its second differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    pub second_diff: Vec<f64>,
    pub suggested_index: usize,
}

impl Curve {
    fn new(name: &str, thresholds: Vec<f64>, values: Vec<f64>, fraction: f64) -> Result<Self> {
        let suggested_index = suggest_from_curve(&thresholds, &values, fraction)?;
        let second_diff = second_differences(&thresholds, &values)?;
        Ok(Curve {
            name: name.to_string(),
            thresholds,
            values,
            second_diff,
            suggested_index,
        })
    }

    pub fn suggestion(&self) -> f64 {
        self.thresholds[self.suggested_index]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurves {
    /// Vertices in MCSs larger than the lower bound.
    pub v_remain: Curve,
    /// MCSs larger than the lower bound.
    pub m_remain: Curve,
    /// Mean MCS size among those smaller than the upper bound.
    pub v_avg_r: Curve,
    /// Hub nodes at each degree threshold.
    pub hubs: Curve,
    /// MCSs (inside the suggested scale bounds) with more than `n` hubs.
    pub hub_mcs: Curve,
    pub suggested: FilterThresholds,
}

impl ThresholdCurves {
    pub fn curves(&self) -> [&Curve; 5] {
        [&self.v_remain, &self.m_remain, &self.v_avg_r, &self.hubs, &self.hub_mcs]
    }

    /// Long-format CSV: `curve,threshold,value,second_diff`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["curve", "threshold", "value", "second_diff"])?;
        for c in self.curves() {
            for (i, (x, y)) in c.thresholds.iter().zip(&c.values).enumerate() {
                let d2 = if i == 0 || i + 1 == c.thresholds.len() {
                    String::new()
                } else {
                    c.second_diff[i - 1].to_string()
                };
                w.write_record([c.name.clone(), x.to_string(), y.to_string(), d2])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn to_f64<T: Copy + Into<f64>>(v: &[T]) -> Vec<f64> {
    v.iter().map(|&x| x.into()).collect()
}

/// Sweeps the filter thresholds over `grid` and suggests each one at the
/// point where its curve's curvature settles.
///
/// `v_min` comes from the remaining-vertex curve, `v_max` from the mean MCS
/// size curve, `d_hub` from the hub-count curve and `n_hub_min` from the
/// count of hub-rich MCSs within the suggested scale bounds.
pub fn suggest_thresholds(g: &TransactionGraph, components: &[NodeId], grid: &SweepGrid) -> Result<ThresholdCurves> {
    if components.len() != g.node_count() {
        return Err(Error::InvalidInput("component labels do not cover the graph".into()));
    }
    let fraction = grid.stability_fraction;
    let (_, base) = mcs_infos(g, components, 0);
    let sizes: Vec<usize> = base.iter().map(|m| m.node_count).collect();

    let xs = to_f64(&grid.v_min.iter().map(|&v| v as u32).collect::<Vec<_>>());
    let kept = |v: usize| sizes.iter().filter(move |&&s| s > v);
    let v_remain = Curve::new(
        "v_remain",
        xs.clone(),
        grid.v_min.iter().map(|&v| kept(v).sum::<usize>() as f64).collect(),
        fraction,
    )?;
    let m_remain = Curve::new("m_remain", xs, grid.v_min.iter().map(|&v| kept(v).count() as f64).collect(), fraction)?;
    let v_min = grid.v_min[v_remain.suggested_index];

    let v_avg = grid
        .v_max
        .iter()
        .map(|&v| {
            let (total, count) = sizes
                .iter()
                .filter(|&&s| s > v_min && s < v)
                .fold((0usize, 0usize), |(t, c), &s| (t + s, c + 1));
            if count == 0 {
                0.0
            } else {
                total as f64 / count as f64
            }
        })
        .collect();
    let v_avg_r = Curve::new(
        "v_avg_r",
        to_f64(&grid.v_max.iter().map(|&v| v as u32).collect::<Vec<_>>()),
        v_avg,
        fraction,
    )?;
    let v_max = grid.v_max[v_avg_r.suggested_index].max(v_min + 1);

    let degrees: Vec<u32> = g.stats.iter().map(|s| s.deg()).collect();
    let hubs = Curve::new(
        "hubs",
        to_f64(&grid.d_hub),
        grid.d_hub.iter().map(|&d| degrees.iter().filter(|&&k| k > d).count() as f64).collect(),
        fraction,
    )?;
    let d_hub = grid.d_hub[hubs.suggested_index].max(1);

    let (_, infos) = mcs_infos(g, components, d_hub);
    let in_scale: Vec<&McsInfo> = infos.iter().filter(|m| m.node_count > v_min && m.node_count < v_max).collect();
    let hub_mcs = Curve::new(
        "hub_mcs",
        to_f64(&grid.n_hub.iter().map(|&v| v as u32).collect::<Vec<_>>()),
        grid.n_hub.iter().map(|&n| in_scale.iter().filter(|m| m.hub_count > n).count() as f64).collect(),
        fraction,
    )?;
    let n_hub_min = grid.n_hub[hub_mcs.suggested_index];

    let suggested = FilterThresholds {
        v_min,
        v_max,
        d_hub,
        n_hub_min,
    };
    suggested.validate()?;
    Ok(ThresholdCurves {
        v_remain,
        m_remain,
        v_avg_r,
        hubs,
        hub_mcs,
        suggested,
    })
}
