//! File-to-file workflow behind the `ddspce` subcommands: fit a surrogate of
//! the transfer capability, run the Monte Carlo baseline, evaluate the
//! surrogate on a large sample set, and turn summaries into margin reports.
//!
//! Every step reads and writes plain files in the run's output directory, so
//! `fit`, `evaluate` and `atc` compose without hidden state.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::{atc_document, mcs_evaluate, summarize, values_csv, AtcDocument, DistributionSummary, Progress};
use crate::grid::{load_network, InputMapping, Network};
use crate::ingest::{fmt_real, load_samples, SampleMatrix};
use crate::pce::{
    evaluate_model, fit_sparse_pce, FitConfig, FitError, FitOutcome, FnSource, PceModel, PoolSource, RoundLog,
    SampleSource,
};
use crate::synth::{SynthError, SynthSpec};
use crate::ttc::{build_direction, ContingencyCase, LimitOverrides, Transaction, TtcEvaluator, TtcOptions};
use crate::Parallelism;

pub const RUN_CONFIG_FORMAT_VERSION: u32 = 1;
pub const FIT_LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("cannot write {}: {message}", path.display())]
    Write { path: PathBuf, message: String },
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("malformed {}: {message}", path.display())]
    ParseFile { path: PathBuf, message: String },
    #[error("invalid run configuration: {0}")]
    Invalid(String),
    #[error("model has {found} inputs {found_names:?}, the run maps {expected} columns {expected_names:?}")]
    ModelMismatch { expected: usize, found: usize, expected_names: Vec<String>, found_names: Vec<String> },
    #[error(transparent)]
    Synth(#[from] SynthError),
}

fn default_levels() -> Vec<f64> {
    vec![99.0, 98.0, 95.0, 90.0, 80.0]
}

fn default_bins() -> usize {
    50
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One study. Relative paths are resolved against the config file's folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one")]
    pub format_version: u32,
    pub network: PathBuf,
    /// Training pool; the fit draws its initial and enrichment rows from it.
    pub samples: PathBuf,
    /// Large set for surrogate evaluation; defaults to `samples`.
    #[serde(default)]
    pub eval_samples: Option<PathBuf>,
    /// Monte Carlo set; defaults to `eval_samples`.
    #[serde(default)]
    pub mcs_samples: Option<PathBuf>,
    /// Sample-column roles; defaults to the network file's own mapping.
    #[serde(default)]
    pub inputs: Option<InputMapping>,
    pub transaction: Transaction,
    #[serde(default)]
    pub contingencies: Vec<ContingencyCase>,
    #[serde(default)]
    pub limits: LimitOverrides,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub ttc: TtcOptions,
    /// Percent, each strictly between 0 and 100.
    #[serde(default = "default_levels")]
    pub confidence_levels: Vec<f64>,
    #[serde(default)]
    pub etc: f64,
    #[serde(default)]
    pub cbm: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Seeds the training-pool order and synthetic sampling. Replaces `fit.seed`.
    #[serde(default)]
    pub seed: u64,
    /// Generator for the `sample` subcommand.
    #[serde(default)]
    pub synth: Option<SynthSpec>,
}

fn one() -> u32 {
    1
}

/// Command-line replacements for individual config fields. Paths here are
/// taken as given (relative to the working directory).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub network: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub eval_samples: Option<PathBuf>,
    pub mcs_samples: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub degree: Option<usize>,
    pub q_norm: Option<f64>,
    pub e_stop: Option<f64>,
    pub max_mp: Option<usize>,
    pub confidence_levels: Option<Vec<f64>>,
    pub etc: Option<f64>,
    pub cbm: Option<f64>,
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn write_text(path: &Path, text: &str) -> Result<(), ConfigError> {
    fs::write(path, text).map_err(|e| ConfigError::Write { path: path.to_path_buf(), message: e.to_string() })
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Parse, resolve relative paths against the file's folder, then apply
    /// `ov` and validate the scalar fields.
    pub fn load(path: impl AsRef<Path>, ov: &Overrides) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut cfg: RunConfig = serde_json::from_str(&read_text(path)?)
            .map_err(|e| ConfigError::ParseFile { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.apply(ov);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.network);
        join(&mut self.samples);
        join(&mut self.output_dir);
        self.eval_samples.as_mut().map(join);
        self.mcs_samples.as_mut().map(join);
    }

    pub fn apply(&mut self, ov: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &ov.$field {
                    self.$field = v.clone();
                }
            )*};
        }
        set!(network, samples, output_dir, seed, confidence_levels, etc, cbm);
        if ov.eval_samples.is_some() {
            self.eval_samples.clone_from(&ov.eval_samples);
        }
        if ov.mcs_samples.is_some() {
            self.mcs_samples.clone_from(&ov.mcs_samples);
        }
        if let Some(d) = ov.degree {
            self.fit.degree = d;
        }
        if let Some(q) = ov.q_norm {
            self.fit.q_norm = q;
        }
        if let Some(e) = ov.e_stop {
            self.fit.e_stop = e;
        }
        if ov.max_mp.is_some() {
            self.fit.max_mp = ov.max_mp;
        }
        self.fit.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.format_version != RUN_CONFIG_FORMAT_VERSION {
            return invalid(format!("unsupported format_version {}", self.format_version));
        }
        if self.confidence_levels.is_empty() {
            return invalid("confidence_levels is empty".into());
        }
        if let Some(p) = self.confidence_levels.iter().find(|p| !(**p > 0.0 && **p < 100.0)) {
            return invalid(format!("confidence level {p} is outside (0, 100)"));
        }
        if !(self.etc.is_finite() && self.cbm.is_finite()) {
            return invalid("etc and cbm must be finite".into());
        }
        if self.bins == 0 {
            return invalid("bins must be at least 1".into());
        }
        self.fit.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ttc.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn eval_path(&self) -> &Path {
        self.eval_samples.as_deref().unwrap_or(&self.samples)
    }

    pub fn mcs_path(&self) -> &Path {
        self.mcs_samples.as_deref().unwrap_or_else(|| self.eval_path())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn ensure_output_dir(&self) -> Result<(), ConfigError> {
        fs::create_dir_all(&self.output_dir)
            .map_err(|e| ConfigError::Write { path: self.output_dir.clone(), message: e.to_string() })
    }
}

/// Network, mapping and evaluator assembled from a config.
pub struct Study {
    pub network: Network,
    pub evaluator: TtcEvaluator,
}

impl Study {
    pub fn mapping(&self) -> &InputMapping {
        &self.network.inputs
    }

    /// Load a sample file and require its header to match the mapping.
    pub fn load_samples(&self, path: &Path) -> crate::Result<SampleMatrix> {
        let s = load_samples(path)?;
        self.mapping().check_columns(s.column_names())?;
        Ok(s)
    }
}

pub fn build_study(cfg: &RunConfig) -> crate::Result<Study> {
    let mut network = load_network(&cfg.network)?;
    if let Some(m) = &cfg.inputs {
        network.inputs = m.clone();
        network.validate()?;
    }
    if network.inputs.is_empty() {
        return Err(ConfigError::Invalid("no input columns are mapped".into()).into());
    }
    for c in &cfg.contingencies {
        network.with_outages(&c.outages)?;
    }
    let direction = build_direction(&cfg.transaction, &network)?;
    let evaluator = TtcEvaluator {
        net: network.clone(),
        direction,
        overrides: cfg.limits.clone(),
        contingencies: cfg.contingencies.clone(),
        options: cfg.ttc.clone(),
    };
    Ok(Study { network, evaluator })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLog {
    pub format_version: u32,
    pub converged: bool,
    pub e_stop: f64,
    pub e_cloo: f64,
    pub evaluator_calls: usize,
    pub input_count: usize,
    pub rounds: Vec<RoundLog>,
}

#[derive(Debug)]
pub struct FitReport {
    pub model_path: PathBuf,
    pub log: FitLog,
}

fn write_fit_outputs(cfg: &RunConfig, out: &FitOutcome, converged: bool) -> crate::Result<FitReport> {
    cfg.ensure_output_dir()?;
    let model_path = cfg.out("model.json");
    write_text(&model_path, &out.model.to_json())?;
    let log = FitLog {
        format_version: FIT_LOG_FORMAT_VERSION,
        converged,
        e_stop: cfg.fit.e_stop,
        e_cloo: out.model.e_cloo,
        evaluator_calls: out.evaluator_calls,
        input_count: out.samples.ncols(),
        rounds: out.rounds.clone(),
    };
    write_text(&cfg.out("fit_log.json"), &serde_json::to_string_pretty(&log).expect("log serializes"))?;
    let mut training = out.samples.column_names().join(",") + ",ttc\n";
    for (row, y) in out.samples.rows_iter().zip(&out.responses) {
        for v in row {
            training.push_str(&fmt_real(*v));
            training.push(',');
        }
        training.push_str(&fmt_real(*y));
        training.push('\n');
    }
    write_text(&cfg.out("fit_training.csv"), &training)?;
    Ok(FitReport { model_path, log })
}

/// Fit the surrogate from the training pool. The first `initial_mp` rows
/// start the fit; enrichment rows come from the rest in seeded order.
///
/// On budget exhaustion the best model and log are still written and the
/// [`FitError::BudgetExhausted`] error is returned.
pub fn cmd_fit(cfg: &RunConfig, par: Parallelism) -> crate::Result<FitReport> {
    let study = build_study(cfg)?;
    let pool = study.load_samples(&cfg.samples)?;
    let n = pool.ncols();
    let m0 = cfg.fit.initial_mp_for(n);
    if pool.nrows() < m0 {
        return Err(ConfigError::Invalid(format!(
            "training pool {} has {} rows, the first round needs {m0}",
            cfg.samples.display(),
            pool.nrows()
        ))
        .into());
    }
    let initial = pool.slice_rows(0, m0)?;
    let mut rest = match pool.nrows() > m0 {
        true => Some(PoolSource::new(pool.slice_rows(m0, pool.nrows())?, cfg.seed)),
        false => None,
    };
    let source: &mut dyn SampleSource = match rest.as_mut() {
        Some(p) => p,
        None => &mut FnSource(|_: usize| -> Option<SampleMatrix> { None }),
    };
    match fit_sparse_pce(&study.evaluator, initial, None, source, &cfg.fit, par) {
        Ok(out) => write_fit_outputs(cfg, &out, true),
        Err(FitError::BudgetExhausted { best, e_cloo, e_stop, max_mp }) => {
            write_fit_outputs(cfg, &best, false)?;
            Err(FitError::BudgetExhausted { best, e_cloo, e_stop, max_mp }.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug)]
pub struct SampleReport {
    pub prefix: String,
    pub values: Vec<f64>,
    pub summary: DistributionSummary,
}

fn write_distribution(cfg: &RunConfig, prefix: &str, values: Vec<f64>) -> crate::Result<SampleReport> {
    let summary = summarize(&values, cfg.bins)?;
    cfg.ensure_output_dir()?;
    write_text(&cfg.out(&format!("{prefix}_ttc.csv")), &values_csv("ttc", &values))?;
    write_text(&cfg.out(&format!("{prefix}_summary.json")), &summary.to_json())?;
    write_text(&cfg.out(&format!("{prefix}_histogram.csv")), &summary.histogram_csv())?;
    write_text(&cfg.out(&format!("{prefix}_cdf.csv")), &summary.cdf_csv())?;
    Ok(SampleReport { prefix: prefix.to_owned(), values, summary })
}

/// Monte Carlo baseline: the full transfer-capability computation per row.
pub fn cmd_mcs(cfg: &RunConfig, par: Parallelism, progress: Option<Progress<'_>>) -> crate::Result<SampleReport> {
    let study = build_study(cfg)?;
    let samples = study.load_samples(cfg.mcs_path())?;
    let values = mcs_evaluate(&study.evaluator, &samples, par, progress)?;
    write_distribution(cfg, "mcs", values)
}

pub fn load_model(path: &Path) -> Result<PceModel, ConfigError> {
    let text = read_text(path)?;
    PceModel::from_json(&text).map_err(|e| ConfigError::ParseFile { path: path.to_path_buf(), message: e.to_string() })
}

/// The model must take exactly the mapped columns, in order.
pub fn check_model(model: &PceModel, mapping: &InputMapping) -> Result<(), ConfigError> {
    let expected = mapping.names();
    if model.input_dim() != expected.len() || model.input_names != expected {
        return Err(ConfigError::ModelMismatch {
            expected: expected.len(),
            found: model.input_dim(),
            expected_names: expected,
            found_names: model.input_names.clone(),
        });
    }
    Ok(())
}

/// Surrogate predictions on the evaluation set.
pub fn cmd_evaluate(cfg: &RunConfig, model_path: &Path, par: Parallelism) -> crate::Result<SampleReport> {
    let study = build_study(cfg)?;
    let model = load_model(model_path)?;
    check_model(&model, study.mapping())?;
    let samples = study.load_samples(cfg.eval_path())?;
    let values = evaluate_model(&model, &samples, par)?;
    write_distribution(cfg, "surrogate", values)
}

pub fn load_summary(path: &Path) -> crate::Result<DistributionSummary> {
    DistributionSummary::from_json(&read_text(path)?).map_err(|e| match e {
        crate::Error::Config(ConfigError::Parse(message)) => ConfigError::ParseFile { path: path.to_path_buf(), message }.into(),
        other => other,
    })
}

/// Margin report over the given summaries; MCS comes first so the
/// surrogate's deltas are measured against it.
pub fn cmd_atc(
    cfg: &RunConfig,
    mcs: Option<&DistributionSummary>,
    surrogate: Option<&DistributionSummary>,
) -> crate::Result<AtcDocument> {
    let methods: Vec<(&str, &DistributionSummary)> =
        [("MCS", mcs), ("DDSPCE", surrogate)].into_iter().filter_map(|(n, s)| s.map(|s| (n, s))).collect();
    if methods.is_empty() {
        return Err(ConfigError::Invalid("atc needs at least one summary".into()).into());
    }
    let doc = atc_document(&methods, &cfg.confidence_levels, cfg.etc, cfg.cbm)?;
    cfg.ensure_output_dir()?;
    write_text(&cfg.out("atc_report.json"), &doc.to_json())?;
    write_text(&cfg.out("atc_report.txt"), &doc.to_text())?;
    Ok(doc)
}

/// Evaluate the surrogate, then report margins, including the MCS summary
/// when one is given.
pub fn cmd_report(
    cfg: &RunConfig,
    model_path: &Path,
    mcs: Option<&DistributionSummary>,
    par: Parallelism,
) -> crate::Result<(SampleReport, AtcDocument)> {
    let eval = cmd_evaluate(cfg, model_path, par)?;
    let doc = cmd_atc(cfg, mcs, Some(&eval.summary))?;
    Ok((eval, doc))
}

/// Draw `rows` synthetic realizations with the config's generator and seed.
pub fn cmd_sample(cfg: &RunConfig, rows: usize, seed: u64, path: &Path) -> crate::Result<SampleMatrix> {
    let Some(spec) = &cfg.synth else {
        return Err(ConfigError::Invalid("config has no synth section".into()).into());
    };
    let s = spec.generate(rows, seed).map_err(ConfigError::from)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ConfigError::Write { path: dir.to_path_buf(), message: e.to_string() })?;
    }
    write_text(path, &s.to_csv_string())?;
    Ok(s)
}
