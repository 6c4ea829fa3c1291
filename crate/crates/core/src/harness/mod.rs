//! Topology generation, experiment sweeps and result export.

pub mod experiment;
pub mod topology;

use thiserror::Error;

use crate::ack::AckError;
use crate::model::TopologyError;

pub use experiment::{
    export, run_experiment, ExperimentConfig, ExportFormat, OutputPaths, Protocol, SweepResult,
    SweepRow, TopologySource, CSV_COLUMNS,
};
pub use topology::{gen_topology, GenSpec, Generated, LabelMode, Shape};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid topology spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Ack(#[from] AckError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
