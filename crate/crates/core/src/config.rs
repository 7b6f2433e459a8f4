//! Pipeline configuration, loaded from JSON with every field defaulted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::FilterThresholds;
use crate::ingest::TimeWindow;
use crate::louvain::LouvainConfig;
use crate::risk::{LevelConfig, RiskWeights};
use crate::thresholds::SweepGrid;
use crate::weighting::WeightConfig;
use crate::{Error, Result};

pub const WORKERS_ENV: &str = "AMLGRAPH_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Analysis window; inferred from the input timestamps when absent.
    pub window: Option<TimeWindow>,
    pub weights: WeightConfig,
    pub filter: FilterThresholds,
    /// Repeat isolated-edge pruning until nothing changes.
    pub iterate_prune: bool,
    pub louvain: LouvainConfig,
    pub entropy_bins: usize,
    pub levels: LevelConfig,
    pub risk_weights: RiskWeights,
    /// Thread count for data-parallel stages; `None` uses all cores.
    pub worker_count: Option<usize>,
    pub seed: u64,
    pub sweep: SweepGrid,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: None,
            weights: WeightConfig::default(),
            filter: FilterThresholds::default(),
            iterate_prune: false,
            louvain: LouvainConfig::default(),
            entropy_bins: 10,
            levels: LevelConfig::default(),
            risk_weights: RiskWeights::default(),
            worker_count: None,
            seed: 42,
            sweep: SweepGrid::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.window {
            w.validate()?;
        }
        self.weights.validate()?;
        self.filter.validate()?;
        self.louvain.validate()?;
        self.levels.validate()?;
        self.risk_weights.validate()?;
        if self.entropy_bins == 0 {
            return Err(Error::Config("entropy_bins must be at least 1".into()));
        }
        if self.worker_count == Some(0) {
            return Err(Error::Config("worker_count must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies the worker override from the environment, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer")))?;
            if n == 0 {
                return Err(Error::Config(format!("{WORKERS_ENV} must be at least 1")));
            }
            self.worker_count = Some(n);
        }
        Ok(())
    }
}
