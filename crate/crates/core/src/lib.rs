//! Community detection and money-laundering risk scoring for transaction networks.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`ingest`] parses raw transfers, merges parallel edges and computes the
//!    primitive edge weight from standardized money and count.
//! 2. [`graph`] builds the directed transaction graph, prunes isolated edges,
//!    splits it into maximal connected subgraphs (MCSs) and filters them by
//!    scale and hub count.
//! 3. [`weighting`] applies node corrections and the temporal pattern
//!    corrections for fan-in/fan-out behaviour.
//! 4. [`louvain`] maximizes the direction-corrected modularity, serially or
//!    with a deterministic parallel engine over colored node classes.
//! 5. [`risk`] scores each community from its size, volume, density and
//!    temporal entropy and assigns percentile risk levels.
//!
//! [`synth`] generates labelled datasets with injected laundering gangs and
//! [`pipeline`] wires everything together for the command line.

pub mod config;
pub mod error;
pub mod export;
pub mod graph;
pub mod ingest;
pub mod louvain;
pub mod pipeline;
pub mod risk;
pub mod stats;
pub mod synth;
pub mod thresholds;
pub mod weighting;

pub use config::PipelineConfig;
pub use error::{Error, Result};
