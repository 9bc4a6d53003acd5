//! Probabilistic outputs: Monte Carlo over TTC samples, distribution
//! summaries, and the reliability-margin / available-capability arithmetic.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{fmt_real, SampleMatrix};
use crate::pce::ResponseModel;
use crate::Parallelism;

pub const SUMMARY_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("cannot summarize an empty list of values")]
    EmptyInput,
    #[error("value {index} is not finite")]
    NonFinite { index: usize },
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error("confidence level must lie strictly between 0 and 100, got {0}")]
    InvalidConfidence(f64),
    #[error("unsupported summary format version {0}")]
    UnsupportedVersion(u32),
}

impl AssessError {
    pub(crate) fn is_input_problem(&self) -> bool {
        !matches!(self, AssessError::NonFinite { .. })
    }
}

/// Called with (completed, total) after each evaluated row.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Evaluate every row; outputs follow row order regardless of parallelism.
pub fn mcs_evaluate(
    evaluator: &dyn ResponseModel,
    samples: &SampleMatrix,
    par: Parallelism,
    progress: Option<Progress<'_>>,
) -> crate::Result<Vec<f64>> {
    let total = samples.nrows();
    let done = AtomicUsize::new(0);
    par.try_map(total, |i| {
        let v = evaluator.evaluate(samples.row(i));
        if let Some(report) = progress {
            report(done.fetch_add(1, Ordering::Relaxed) + 1, total);
        }
        v
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` equal-width edges from min to max.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Empirical statistics of a scalar sample. The sorted sample is kept so
/// quantiles can be recomputed from a saved summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub format_version: u32,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
    pub sorted: Vec<f64>,
}

impl DistributionSummary {
    /// Linear interpolation between order statistics at `(n − 1)·p`.
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.sorted, p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let s: DistributionSummary =
            serde_json::from_str(text).map_err(|e| crate::pipeline::ConfigError::Parse(e.to_string()))?;
        if s.format_version != SUMMARY_FORMAT_VERSION {
            return Err(AssessError::UnsupportedVersion(s.format_version).into());
        }
        if s.sorted.is_empty() {
            return Err(AssessError::EmptyInput.into());
        }
        Ok(s)
    }

    /// `bin_center,count` rows.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_center,count\n");
        for (c, n) in self.histogram.centers().iter().zip(&self.histogram.counts) {
            let _ = writeln!(out, "{},{n}", fmt_real(*c));
        }
        out
    }

    /// Empirical CDF as `value,cum_prob` at every order statistic.
    pub fn cdf_csv(&self) -> String {
        let n = self.sorted.len() as f64;
        let mut out = String::from("value,cum_prob\n");
        for (i, v) in self.sorted.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_real(*v), fmt_real((i + 1) as f64 / n));
        }
        out
    }
}

/// Type-7 quantile of an ascending slice; `p` is clamped to [0, 1].
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn summarize(values: &[f64], bins: usize) -> Result<DistributionSummary, AssessError> {
    if values.is_empty() {
        return Err(AssessError::EmptyInput);
    }
    if bins == 0 {
        return Err(AssessError::ZeroBins);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(AssessError::NonFinite { index });
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[n - 1]);
    let mean = (values.iter().sum::<f64>() / n as f64).clamp(min, max);
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };

    let width = (max - min) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { max } else { min + k as f64 * width }).collect();
    let mut counts = vec![0usize; bins];
    for &v in &sorted {
        let k = if width > 0.0 { (((v - min) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }

    Ok(DistributionSummary {
        format_version: SUMMARY_FORMAT_VERSION,
        count: n,
        mean,
        std,
        min,
        max,
        histogram: Histogram { edges, counts },
        sorted,
    })
}

/// Margins at one confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtcReport {
    pub expected_ttc: f64,
    /// Percent.
    pub confidence_level: f64,
    pub trm: f64,
    pub etc: f64,
    pub cbm: f64,
    pub atc: f64,
}

/// TRM is the distance from the mean down to the `(1 − P_cl)` quantile;
/// ATC subtracts TRM, ETC and CBM from the mean.
pub fn compute_trm_atc(s: &DistributionSummary, p_cl: f64, etc: f64, cbm: f64) -> Result<AtcReport, AssessError> {
    if !(p_cl > 0.0 && p_cl < 100.0) {
        return Err(AssessError::InvalidConfidence(p_cl));
    }
    let expected_ttc = s.mean;
    let trm = expected_ttc - s.quantile(1.0 - p_cl / 100.0);
    let atc = expected_ttc - trm - etc - cbm;
    Ok(AtcReport { expected_ttc, confidence_level: p_cl, trm, etc, cbm, atc })
}

/// Relative deviations of one method from the reference, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub mean_pct: f64,
    pub std_pct: f64,
}

pub fn deltas(reference: &DistributionSummary, other: &DistributionSummary) -> Deltas {
    Deltas {
        mean_pct: 100.0 * (other.mean - reference.mean) / reference.mean,
        std_pct: 100.0 * (other.std - reference.std) / reference.std,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBlock {
    pub method: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    /// Against the first method of the document; absent for that method.
    pub deltas: Option<Deltas>,
    pub levels: Vec<AtcReport>,
}

/// Full report: one block per method, one entry per confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtcDocument {
    pub format_version: u32,
    pub methods: Vec<MethodBlock>,
}

/// The first method is the reference for the deltas (normally MCS).
pub fn atc_document(
    methods: &[(&str, &DistributionSummary)],
    levels: &[f64],
    etc: f64,
    cbm: f64,
) -> Result<AtcDocument, AssessError> {
    let Some(&(_, reference)) = methods.first() else {
        return Err(AssessError::EmptyInput);
    };
    let blocks = methods
        .iter()
        .enumerate()
        .map(|(i, &(name, s))| {
            let levels = levels.iter().map(|&p| compute_trm_atc(s, p, etc, cbm)).collect::<Result<Vec<_>, _>>()?;
            Ok(MethodBlock {
                method: name.to_owned(),
                count: s.count,
                mean: s.mean,
                std: s.std,
                deltas: (i > 0).then(|| deltas(reference, s)),
                levels,
            })
        })
        .collect::<Result<Vec<_>, AssessError>>()?;
    Ok(AtcDocument { format_version: REPORT_FORMAT_VERSION, methods: blocks })
}

impl AtcDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Statistics table followed by a TRM/ATC table per confidence level.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>8} {:>12} {:>12} {:>10} {:>10}", "method", "samples", "mean MW", "std MW", "dmu/mu %", "dsd/sd %");
        for m in &self.methods {
            let (dm, ds) = match m.deltas {
                Some(d) => (format!("{:.2}", d.mean_pct), format!("{:.2}", d.std_pct)),
                None => ("-".to_owned(), "-".to_owned()),
            };
            let _ = writeln!(out, "{:<12} {:>8} {:>12.4} {:>12.4} {:>10} {:>10}", m.method, m.count, m.mean, m.std, dm, ds);
        }
        let Some(first) = self.methods.first() else {
            return out;
        };
        let _ = writeln!(out);
        let mut header = format!("{:<8}", "P_cl %");
        for m in &self.methods {
            let _ = write!(header, " {:>14} {:>14}", format!("TRM {}", m.method), format!("ATC {}", m.method));
        }
        let _ = writeln!(out, "{header}");
        for (k, level) in first.levels.iter().enumerate() {
            let _ = write!(out, "{:<8}", level.confidence_level);
            for m in &self.methods {
                let r = &m.levels[k];
                let _ = write!(out, " {:>14.4} {:>14.4}", r.trm, r.atc);
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "\nETC = {} MW, CBM = {} MW", first.levels.first().map_or(0.0, |r| r.etc), first.levels.first().map_or(0.0, |r| r.cbm));
        out
    }
}

/// One value per line under a `ttc` header, 17 significant digits.
pub fn values_csv(header: &str, values: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for v in values {
        let _ = writeln!(out, "{}", fmt_real(*v));
    }
    out
}
