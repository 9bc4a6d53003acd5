//! Data-driven sparse polynomial chaos surrogates for probabilistic total
//! transfer capability (TTC) and available transfer capability (ATC).
//!
//! The crate is organized bottom-up:
//!
//! - [`ingest`]: sample matrices, standardization and PCA decorrelation.
//! - [`apc`]: moment-based (arbitrary) orthonormal polynomial bases.
//! - [`pce`]: multi-index sets, least squares, least-angle regression,
//!   leave-one-out errors and the adaptive fitting driver.
//! - [`grid`]: network model, renewable power curves, Newton power flow.
//! - [`ttc`]: transfer directions, limit checks and maximum transfer search.
//! - [`assess`]: Monte Carlo evaluation, distribution summaries, TRM/ATC.
//! - [`pipeline`]: file-driven fit / mcs / evaluate / atc commands.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is on and plain iterators otherwise.

pub mod apc;
pub mod assess;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod par;
pub mod pce;
pub mod pipeline;
pub mod synth;
pub mod ttc;

pub use error::{Error, Result};
pub use par::Parallelism;
