//! Experiment orchestration: the evaluation protocol, score intervals, and
//! the train-and-evaluate ablation matrix with on-disk resume.

pub mod evaluate;
pub mod matrix;
pub mod stats;

pub use evaluate::{evaluate, evaluate_with, trial_seed, EvalReport, ObjectReport, TrialRecord};
pub use matrix::{
    ratio_cells, run_ablation_matrix, standard_cells, Cell, CellResult, CellSeedResult,
    MatrixReport, Method, Pipeline, SALT_COLLECT, SALT_REVERSE, SALT_SL,
};
pub use stats::wilson_ci;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no trials: interval undefined")]
    NoTrials,
    #[error("more successes ({successes}) than trials ({trials})")]
    BadCounts { successes: usize, trials: usize },
    #[error(transparent)]
    Rl(#[from] crate::rl::RlError),
    #[error(transparent)]
    Reversal(#[from] crate::reversal::ReversalError),
    #[error(transparent)]
    Pca(#[from] crate::sensors::pca::PcaError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Catalog(#[from] crate::env::CatalogError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad log file {0}: {1}")]
    BadLog(String, String),
}
