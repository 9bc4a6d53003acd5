//! Sparse polynomial chaos expansion: truncated multi-index sets, least
//! squares with leave-one-out diagnostics, least-angle regression and the
//! adaptive enrichment driver.

mod fit;
mod index;
mod lar;
mod model;
mod regression;

pub use fit::{fit_round, fit_sparse_pce, FitConfig, FitOutcome, FnSource, PoolSource, ResponseModel, RoundLog, SampleSource};
pub use index::{generate_index_set, IndexSet, MultiIndex};
pub use lar::{lar_path, lar_select, LarSelection};
pub use model::{assemble_design_matrix, eval_multivariate, evaluate_model, model_moments, PceModel, MODEL_FORMAT_VERSION};
pub use regression::{correction_factor, corrected_loo, least_squares, loo_error, ols_fit, LeastSquaresFit, MAX_GRAM_CONDITION};

use thiserror::Error;

use crate::apc::BasisError;
use crate::ingest::IngestError;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("normal equations are singular (condition {condition:.3e}); basis too rich for the sample size")]
    SingularNormalEquations { condition: f64 },
    #[error("{samples} samples cannot support {terms} expansion terms")]
    InsufficientSamples { terms: usize, samples: usize },
    #[error("responses have zero variance but the fit leaves residuals")]
    ZeroVariance,
    #[error("design matrix has {rows} rows but {responses} responses were given")]
    LengthMismatch { rows: usize, responses: usize },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("budget of {max_mp} training samples exhausted with e_cloo = {e_cloo:.4e} (target {e_stop:.4e})")]
    BudgetExhausted { best: Box<FitOutcome>, e_cloo: f64, e_stop: f64, max_mp: usize },
    #[error("response evaluation failed: {0}")]
    Evaluator(Box<crate::Error>),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}
