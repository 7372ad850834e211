//! Experiment sweeps over worlds, noise levels, collision weights,
//! algorithms and seeds, plus summaries of the resulting CSV files.

mod config;
mod summary;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

use crate::policies::PolicyError;
use crate::simulator::SimError;
use crate::world::WorldError;

pub use config::{NamedNoise, NoiseLevel, SweepConfig};
pub use summary::{mean_ci, summarize, summarize_rows, SummaryRow};
pub use sweep::{
    ablate, enumerate_cells, episode_seed, gen_worlds, partial_path, read_results, read_timing, run_cells, run_sweep,
    timing_path, world_id, world_seed, AblationAxis, Cell, CellKey, ResultRow, RowOutcome, SweepReport, TimingRow,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<PolicyError> for BenchError {
    fn from(e: PolicyError) -> Self {
        BenchError::InvalidConfig(e.to_string())
    }
}
