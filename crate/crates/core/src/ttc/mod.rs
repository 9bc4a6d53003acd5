//! Total transfer capability of one network realization: the largest
//! transfer along a load-generation direction that keeps the power flow
//! solvable and within limits, minimized over the base case and every
//! contingency.

mod direction;
mod limits;
mod transfer;

pub use direction::{build_direction, DirectionEntry, Participant, Transaction, TransferDirection};
pub use limits::{check_limits, LimitKind, LimitOverrides, LimitSet, Violation};
pub use transfer::{
    max_transfer, ttc_overall, CaseOutcome, ContingencyCase, IslandingPolicy, TransferResult, TransferStudy, TtcEvaluator,
    TtcOptions, TtcOutcome,
};

use thiserror::Error;

use crate::grid::GridError;

#[derive(Debug, Error)]
pub enum TtcError {
    #[error("transaction has no {0} buses")]
    EmptySide(&'static str),
    #[error("transaction {side} shares must be positive and sum to 1 (sum {sum})")]
    InvalidShares { side: &'static str, sum: f64 },
    #[error("transaction references unknown bus {0}")]
    UnknownBus(u32),
    #[error("sink power factor must lie in (0, 1], got {0}")]
    InvalidPowerFactor(f64),
    #[error("no limit binds below {0} MW; the transfer is unbounded")]
    Unbounded(f64),
    #[error("invalid transfer options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl TtcError {
    pub(crate) fn is_input_problem(&self) -> bool {
        match self {
            TtcError::Unbounded(_) => false,
            TtcError::Grid(e) => e.is_input_problem(),
            _ => true,
        }
    }
}
