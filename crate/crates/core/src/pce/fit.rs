//! Adaptive fitting driver: decorrelate, build bases, truncate, select terms
//! by LAR, check `e_cloo`, and enlarge the training set until the target is
//! met or the sample budget runs out.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::index::generate_index_set;
use super::lar::lar_select;
use super::model::{assemble_design_matrix, PceModel, MODEL_FORMAT_VERSION};
use super::FitError;
use crate::apc::{build_univariate_basis, support_count, BasisError, UnivariateBasis};
use crate::ingest::{apply_pca, fit_pca, sample_covariance, ColumnAffine, PcaTransform, SampleMatrix};
use crate::par::Parallelism;

/// Fitting controls. `None` sizes default to multiples of the input count N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Maximum polynomial degree H.
    pub degree: usize,
    /// Hyperbolic truncation exponent, `0 < q <= 1`.
    pub q_norm: f64,
    /// Stop once `e_cloo` falls below this.
    pub e_stop: f64,
    /// Initial training size (default 5N).
    pub initial_mp: Option<usize>,
    /// Samples added per enrichment round (default N).
    pub delta_mp: Option<usize>,
    /// Training-size budget (default 20N).
    pub max_mp: Option<usize>,
    /// PCA components kept (default N).
    pub retained: Option<usize>,
    /// Rotate inputs onto principal components before building bases. Off
    /// means the inputs are treated as independent and used as they are.
    pub decorrelate: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degree: 2,
            q_norm: 0.75,
            e_stop: 0.02,
            initial_mp: None,
            delta_mp: None,
            max_mp: None,
            retained: None,
            decorrelate: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.q_norm > 0.0 && self.q_norm <= 1.0) {
            return Err(FitError::InvalidConfig(format!("q_norm must lie in (0, 1], got {}", self.q_norm)));
        }
        if !(self.e_stop > 0.0) {
            return Err(FitError::InvalidConfig(format!("e_stop must be positive, got {}", self.e_stop)));
        }
        if self.delta_mp == Some(0) {
            return Err(FitError::InvalidConfig("delta_mp must be at least 1".into()));
        }
        Ok(())
    }

    pub fn initial_mp_for(&self, n: usize) -> usize {
        self.initial_mp.unwrap_or(5 * n)
    }

    pub fn delta_mp_for(&self, n: usize) -> usize {
        self.delta_mp.unwrap_or(n).max(1)
    }

    pub fn max_mp_for(&self, n: usize) -> usize {
        self.max_mp.unwrap_or(20 * n)
    }
}

/// Black-box response `U -> Y` evaluated once per training sample.
pub trait ResponseModel: Sync {
    fn evaluate(&self, row: &[f64]) -> crate::Result<f64>;
}

impl<F> ResponseModel for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, row: &[f64]) -> crate::Result<f64> {
        Ok(self(row))
    }
}

/// Supplier of additional input realizations for enrichment rounds.
pub trait SampleSource {
    /// `None` once the source cannot supply `count` more rows.
    fn draw(&mut self, count: usize) -> Option<SampleMatrix>;
}

/// Draws without replacement from a fixed pool, in a seeded random order.
pub struct PoolSource {
    pool: SampleMatrix,
    order: Vec<usize>,
    next: usize,
}

impl PoolSource {
    pub fn new(pool: SampleMatrix, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..pool.nrows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        PoolSource { pool, order, next: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.order.len() - self.next
    }
}

impl SampleSource for PoolSource {
    fn draw(&mut self, count: usize) -> Option<SampleMatrix> {
        if count == 0 || self.remaining() < count {
            return None;
        }
        let idx = &self.order[self.next..self.next + count];
        self.next += count;
        self.pool.select_rows(idx).ok()
    }
}

/// Adapter for generator closures (e.g. sampling from assumed distributions).
pub struct FnSource<F>(pub F);

impl<F: FnMut(usize) -> Option<SampleMatrix>> SampleSource for FnSource<F> {
    fn draw(&mut self, count: usize) -> Option<SampleMatrix> {
        (self.0)(count)
    }
}

/// Diagnostics of one fitting round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub training_size: usize,
    pub e_cloo: f64,
    pub e_loo: f64,
    pub active_terms: usize,
    pub candidate_terms: usize,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: PceModel,
    pub rounds: Vec<RoundLog>,
    pub evaluator_calls: usize,
    pub samples: SampleMatrix,
    pub responses: Vec<f64>,
}

fn latent_basis(column: &[f64], degree: usize, spread_floor: f64) -> Result<UnivariateBasis, BasisError> {
    let mean = column.iter().sum::<f64>() / column.len() as f64;
    let rms = (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / column.len() as f64).sqrt();
    if rms <= spread_floor {
        return Ok(UnivariateBasis::constant(ColumnAffine::fit(column)));
    }
    let capped = degree.min(support_count(column).saturating_sub(1));
    build_univariate_basis(column, capped)
}

/// One pass: PCA, per-coordinate bases, truncated index set, LAR selection.
pub fn fit_round(
    samples: &SampleMatrix,
    responses: &[f64],
    cfg: &FitConfig,
    par: Parallelism,
) -> Result<PceModel, FitError> {
    if samples.nrows() != responses.len() {
        return Err(FitError::LengthMismatch { rows: samples.nrows(), responses: responses.len() });
    }
    let n = samples.ncols();
    let pca = if cfg.decorrelate {
        fit_pca(samples)?
    } else {
        let (_, cov) = sample_covariance(samples);
        PcaTransform { eigenvalues: cov.diagonal().iter().copied().collect(), ..PcaTransform::identity(n) }
    };
    let pca = pca.with_retained(cfg.retained.unwrap_or(n));
    let latent = apply_pca(&pca, samples)?;
    // Coordinates whose spread is round-off relative to the leading component carry no information.
    let spread_floor = 1e-9 * pca.eigenvalues.iter().copied().fold(0.0, f64::max).sqrt();
    let bases: Vec<UnivariateBasis> =
        par.try_map(latent.ncols(), |i| latent_basis(&latent.column(i), cfg.degree, spread_floor))?;
    let caps: Vec<usize> = bases.iter().map(|b| b.degree).collect();
    let index_set = generate_index_set(latent.ncols(), cfg.degree, cfg.q_norm).capped(&caps);
    let psi = assemble_design_matrix(&bases, &index_set, &latent, par)?;
    let sel = lar_select(&psi, responses)?;
    Ok(PceModel {
        format_version: MODEL_FORMAT_VERSION,
        input_names: samples.column_names().to_vec(),
        pca,
        bases,
        active_indices: sel.active.iter().map(|&j| index_set.indices[j].clone()).collect(),
        coefficients: sel.coefficients,
        e_cloo: sel.e_cloo,
        e_loo: sel.e_loo,
        training_size: samples.nrows(),
        candidate_terms: index_set.len(),
        config: cfg.clone(),
    })
}

fn evaluate_rows(evaluator: &dyn ResponseModel, rows: &SampleMatrix, par: Parallelism) -> Result<Vec<f64>, FitError> {
    par.try_map(rows.nrows(), |i| evaluator.evaluate(rows.row(i)).map_err(|e| FitError::Evaluator(Box::new(e))))
}

/// Fit, check `e_cloo < e_stop`, enlarge by `delta_mp` evaluator calls, repeat.
///
/// PCA and bases are refit from scratch every round. When the budget is
/// exhausted the round with the smallest `e_cloo` is returned inside
/// [`FitError::BudgetExhausted`].
pub fn fit_sparse_pce(
    evaluator: &dyn ResponseModel,
    initial_samples: SampleMatrix,
    initial_responses: Option<Vec<f64>>,
    source: &mut dyn SampleSource,
    cfg: &FitConfig,
    par: Parallelism,
) -> Result<FitOutcome, FitError> {
    cfg.validate()?;
    let n = initial_samples.ncols();
    let delta = cfg.delta_mp_for(n);
    let max_mp = cfg.max_mp_for(n).max(initial_samples.nrows());

    let mut calls = 0;
    let mut samples = initial_samples;
    let mut responses = match initial_responses {
        Some(r) => r,
        None => {
            calls += samples.nrows();
            evaluate_rows(evaluator, &samples, par)?
        }
    };
    let mut rounds = Vec::new();
    let mut best: Option<PceModel> = None;
    loop {
        let model = fit_round(&samples, &responses, cfg, par)?;
        rounds.push(RoundLog {
            round: rounds.len() + 1,
            training_size: samples.nrows(),
            e_cloo: model.e_cloo,
            e_loo: model.e_loo,
            active_terms: model.active_indices.len(),
            candidate_terms: model.candidate_terms,
        });
        if model.e_cloo < cfg.e_stop {
            return Ok(FitOutcome { model, rounds, evaluator_calls: calls, samples, responses });
        }
        if best.as_ref().is_none_or(|b| model.e_cloo < b.e_cloo) {
            best = Some(model);
        }
        let extra = if samples.nrows() + delta <= max_mp { source.draw(delta) } else { None };
        let Some(extra) = extra else {
            let model = best.expect("at least one round ran");
            let e_cloo = model.e_cloo;
            let outcome = FitOutcome { model, rounds, evaluator_calls: calls, samples, responses };
            return Err(FitError::BudgetExhausted { best: Box::new(outcome), e_cloo, e_stop: cfg.e_stop, max_mp });
        };
        let y = evaluate_rows(evaluator, &extra, par)?;
        calls += extra.nrows();
        samples.append(&extra)?;
        responses.extend(y);
    }
}
