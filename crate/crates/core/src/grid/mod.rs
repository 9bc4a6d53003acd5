//! Network model, stochastic injections and AC power flow.
//!
//! Networks are MATPOWER-like tables serialized as JSON (see
//! `data/network.schema.json`). Quantities in the tables are in MW, MVAr,
//! per unit and degrees; the solver works in per unit on `base_mva`.

mod curves;
pub(crate) mod network;
mod powerflow;
mod sample;
mod topology;

pub use curves::{solar_power, wind_power};
pub use network::{load_network, Branch, Bus, BusKind, Generator, Network, SolarPlant, Ultc, WindFarm};
pub use powerflow::{mismatch, solve_power_flow, solve_power_flow_from, PfOptions, PowerFlowSolution};
pub use sample::{apply_sample, InputColumn, InputMapping, InputRole};
pub use topology::{check_connectivity, Islands};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read network file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("sample row has {found} entries but the input mapping has {expected}")]
    MappingMismatch { expected: usize, found: usize },
    #[error("column '{column}' must hold 0 or 1, found {value}")]
    InvalidIndicator { column: String, value: f64 },
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("network splits into {islands} islands")]
    Islanded { islands: usize },
}

impl GridError {
    /// Errors caused by the user's files rather than by numerics.
    pub(crate) fn is_input_problem(&self) -> bool {
        !matches!(self, GridError::Diverged { .. } | GridError::Islanded { .. })
    }
}
