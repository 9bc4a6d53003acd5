use thiserror::Error;

use crate::apc::BasisError;
use crate::assess::AssessError;
use crate::grid::GridError;
use crate::ingest::IngestError;
use crate::pce::FitError;
use crate::pipeline::ConfigError;
use crate::ttc::TtcError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error; each module keeps its own enum.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ttc(#[from] TtcError),
    #[error(transparent)]
    Assess(#[from] AssessError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl Error {
    /// Process exit code: 1 usage/config, 2 numerical failure, 3 budget exhausted.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Assess(e) if e.is_input_problem() => 1,
            Error::Ingest(e) if e.is_input_problem() => 1,
            Error::Grid(e) if e.is_input_problem() => 1,
            Error::Ttc(e) if e.is_input_problem() => 1,
            Error::Fit(FitError::BudgetExhausted { .. }) => 3,
            Error::Fit(FitError::Evaluator(e)) => e.exit_code(),
            Error::Fit(FitError::InvalidConfig(_)) => 1,
            Error::Fit(FitError::Ingest(e)) if e.is_input_problem() => 1,
            _ => 2,
        }
    }
}
