//! Simulation-study runner and command-line front end for `fpt-core`.

pub mod cli;
pub mod config;
pub mod grid;

use thiserror::Error;

pub use config::{Cell, ExperimentConfig, Grid};
pub use grid::{
    run_estimation_grid, run_estimation_grid_with, run_experiment, run_riae_grid, run_statistics_grid, Estimator,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fpt_core::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        use fpt_core::Error as E;
        match self {
            ExperimentError::Core(
                E::NoConvergence { .. }
                | E::NoSignChange { .. }
                | E::BracketFailure { .. }
                | E::Degenerate(_)
                | E::InsufficientData { .. },
            ) => 3,
            _ => 2,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of repetition `rep` in cell `cell` of a run seeded with `seed`.
pub fn cell_seed(seed: u64, cell: usize, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ cell as u64) ^ rep)
}
