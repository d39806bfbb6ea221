//! Experiment orchestration: FSM planning and continual runs, behavior
//! encapsulation and class-incremental MNIST.

use std::path::PathBuf;

pub mod config;
pub mod encap;
pub mod fsm;
pub mod metrics;
pub mod mnist;

pub use config::ExperimentConfig;
pub use metrics::Metrics;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Env(#[from] modeller::env::EnvError),
    #[error(transparent)]
    Model(#[from] modeller::ModelError),
    #[error(transparent)]
    Snapshot(#[from] modeller::snapshot::SnapshotError),
    #[error(transparent)]
    Encapsulation(#[from] modeller::encapsulation::EncapsulationError),
    #[error(transparent)]
    Data(#[from] vision::IdxError),
    #[error(transparent)]
    Spn(#[from] mnr::SpnError),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
}

/// Independent stream per (trial, purpose) under one seed.
pub fn trial_rng(seed: u64, trial: usize, purpose: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(trial as u64 * 16 + purpose);
    r
}
