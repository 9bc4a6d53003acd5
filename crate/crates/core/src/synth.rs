//! Seeded synthetic input samples: Weibull wind speeds, Beta radiation,
//! normal loads (optionally correlated) and Bernoulli outage indicators.
//!
//! Used to produce the bundled sample files and the large evaluation sets;
//! the fitting pipeline itself only ever sees the resulting CSV.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Normal, StandardNormal, Uniform, Weibull};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SampleMatrix;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("column {column:?}: {message}")]
    InvalidParameter { column: String, message: String },
    #[error("correlation matrix must be {n}x{n} symmetric positive definite with unit diagonal")]
    InvalidCorrelation { n: usize },
    #[error("nothing to sample: {0}")]
    Empty(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    /// `scale · Weibull(shape)`, e.g. wind speed in m/s.
    Weibull { shape: f64, scale: f64 },
    /// `scale · Beta(alpha, beta)`, e.g. radiation in W/m².
    Beta { alpha: f64, beta: f64, scale: f64 },
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    /// 1 with probability `p`.
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthColumn {
    pub name: String,
    #[serde(flatten)]
    pub marginal: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub columns: Vec<SynthColumn>,
    /// Correlation among the normal columns, in column order.
    #[serde(default)]
    pub normal_correlation: Option<Vec<Vec<f64>>>,
}

enum Sampler {
    Weibull(Weibull<f64>, f64),
    Beta(Beta<f64>, f64),
    Normal(f64, f64),
    Uniform(Uniform<f64>),
    Bernoulli(Bernoulli),
}

fn bad(column: &str, message: impl ToString) -> SynthError {
    SynthError::InvalidParameter { column: column.to_owned(), message: message.to_string() }
}

fn sampler(c: &SynthColumn) -> Result<Sampler, SynthError> {
    let n = &c.name;
    Ok(match c.marginal {
        Marginal::Weibull { shape, scale } => Sampler::Weibull(Weibull::new(1.0, shape).map_err(|e| bad(n, e))?, check_scale(n, scale)?),
        Marginal::Beta { alpha, beta, scale } => Sampler::Beta(Beta::new(alpha, beta).map_err(|e| bad(n, e))?, check_scale(n, scale)?),
        Marginal::Normal { mean, std } => {
            Normal::new(mean, std).map_err(|e| bad(n, e))?;
            Sampler::Normal(mean, std)
        }
        Marginal::Uniform { low, high } => Sampler::Uniform(Uniform::new(low, high).map_err(|e| bad(n, e))?),
        Marginal::Bernoulli { p } => Sampler::Bernoulli(Bernoulli::new(p).map_err(|e| bad(n, e))?),
    })
}

fn check_scale(column: &str, scale: f64) -> Result<f64, SynthError> {
    if scale > 0.0 && scale.is_finite() {
        Ok(scale)
    } else {
        Err(bad(column, format!("scale must be positive, got {scale}")))
    }
}

impl SynthSpec {
    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    fn correlation_factor(&self) -> Result<Option<DMatrix<f64>>, SynthError> {
        let k = self.columns.iter().filter(|c| matches!(c.marginal, Marginal::Normal { .. })).count();
        let Some(rows) = &self.normal_correlation else {
            return Ok(None);
        };
        let err = SynthError::InvalidCorrelation { n: k };
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(err);
        }
        let m = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        let symmetric = (0..k).all(|i| (m[(i, i)] - 1.0).abs() < 1e-12 && (0..k).all(|j| m[(i, j)] == m[(j, i)]));
        match m.cholesky() {
            Some(c) if symmetric => Ok(Some(c.l())),
            _ => Err(err),
        }
    }

    /// `rows` realizations drawn row by row from one ChaCha8 stream.
    pub fn generate(&self, rows: usize, seed: u64) -> Result<SampleMatrix, SynthError> {
        if self.columns.is_empty() {
            return Err(SynthError::Empty("no columns"));
        }
        if rows == 0 {
            return Err(SynthError::Empty("zero rows"));
        }
        let samplers = self.columns.iter().map(sampler).collect::<Result<Vec<_>, _>>()?;
        let factor = self.correlation_factor()?;
        let normal_cols: Vec<usize> =
            samplers.iter().enumerate().filter(|(_, s)| matches!(s, Sampler::Normal(..))).map(|(j, _)| j).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = samplers.len();
        let mut values = Vec::with_capacity(rows * cols);
        let mut white = vec![0.0; normal_cols.len()];
        for _ in 0..rows {
            for w in white.iter_mut() {
                *w = StandardNormal.sample(&mut rng);
            }
            let mixed: Vec<f64> = match &factor {
                Some(l) => (0..white.len()).map(|i| (0..=i).map(|j| l[(i, j)] * white[j]).sum()).collect(),
                None => white.clone(),
            };
            let mut k = 0;
            for s in &samplers {
                let v = match s {
                    Sampler::Weibull(d, scale) => scale * d.sample(&mut rng),
                    Sampler::Beta(d, scale) => scale * d.sample(&mut rng),
                    Sampler::Normal(mean, std) => {
                        k += 1;
                        mean + std * mixed[k - 1]
                    }
                    Sampler::Uniform(d) => d.sample(&mut rng),
                    Sampler::Bernoulli(d) => f64::from(u8::from(d.sample(&mut rng))),
                };
                values.push(v);
            }
        }
        SampleMatrix::new(self.names(), rows, values).map_err(|e| bad("*", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(corr: Option<Vec<Vec<f64>>>) -> SynthSpec {
        let col = |name: &str, marginal| SynthColumn { name: name.into(), marginal };
        SynthSpec {
            columns: vec![
                col("w", Marginal::Weibull { shape: 2.0, scale: 8.0 }),
                col("l1", Marginal::Normal { mean: 100.0, std: 10.0 }),
                col("r", Marginal::Beta { alpha: 2.0, beta: 2.0, scale: 1000.0 }),
                col("l2", Marginal::Normal { mean: 50.0, std: 5.0 }),
                col("s", Marginal::Bernoulli { p: 0.1 }),
            ],
            normal_correlation: corr,
        }
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn marginal_means() {
        let s = spec(None).generate(40_000, 3).unwrap();
        // Weibull(k = 2, λ = 8) has mean 8·Γ(1.5) = 4·sqrt(π).
        assert!((mean(&s.column(0)) - 4.0 * std::f64::consts::PI.sqrt()).abs() < 0.1);
        assert!((mean(&s.column(1)) - 100.0).abs() < 0.3);
        assert!((mean(&s.column(2)) - 500.0).abs() < 5.0);
        assert!((mean(&s.column(4)) - 0.1).abs() < 0.01);
        assert!(s.column(4).iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn correlated_normals() {
        let s = spec(Some(vec![vec![1.0, 0.8], vec![0.8, 1.0]])).generate(20_000, 5).unwrap();
        let (a, b) = (s.column(1), s.column(3));
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64;
        assert!((cov / 50.0 - 0.8).abs() < 0.02);
    }

    #[test]
    fn seeded_and_validated() {
        assert_eq!(spec(None).generate(10, 9).unwrap(), spec(None).generate(10, 9).unwrap());
        assert_ne!(spec(None).generate(10, 9).unwrap(), spec(None).generate(10, 10).unwrap());
        assert!(spec(Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]])).generate(5, 0).is_err());
        let mut s = spec(None);
        s.columns[4].marginal = Marginal::Bernoulli { p: 1.5 };
        assert!(s.generate(5, 0).is_err());
        let json = r#"{"columns":[{"name":"w","dist":"weibull","shape":2,"scale":8}]}"#;
        let parsed: SynthSpec = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.columns[0].marginal, Marginal::Weibull { shape: 2.0, scale: 8.0 });
    }
}
