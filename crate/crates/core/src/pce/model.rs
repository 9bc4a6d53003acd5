use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fit::FitConfig;
use super::index::{IndexSet, MultiIndex};
use crate::apc::{BasisError, UnivariateBasis};
use crate::ingest::{IngestError, PcaTransform, SampleMatrix};
use crate::par::Parallelism;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Fitted surrogate `Y(u) = sum_k c_k Phi_k(T_pca(u))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceModel {
    pub format_version: u32,
    /// Physical input names, in sample-column order.
    pub input_names: Vec<String>,
    pub pca: PcaTransform,
    /// One basis per retained PCA coordinate.
    pub bases: Vec<UnivariateBasis>,
    pub active_indices: Vec<MultiIndex>,
    pub coefficients: Vec<f64>,
    pub e_cloo: f64,
    pub e_loo: f64,
    pub training_size: usize,
    /// Size of the truncated candidate set LAR chose from.
    pub candidate_terms: usize,
    pub config: FitConfig,
}

impl PceModel {
    /// Number of physical inputs.
    pub fn input_dim(&self) -> usize {
        self.pca.dim()
    }

    /// Number of decorrelated coordinates the bases live on.
    pub fn latent_dim(&self) -> usize {
        self.bases.len()
    }

    /// Evaluate at one point of the decorrelated coordinates.
    pub fn evaluate_latent(&self, z: &[f64]) -> f64 {
        let psi = univariate_table(&self.bases, z);
        self.active_indices
            .iter()
            .zip(&self.coefficients)
            .map(|(idx, c)| c * idx.0.iter().enumerate().map(|(i, &a)| psi[i][a as usize]).product::<f64>())
            .sum()
    }

    /// Evaluate at one physical row.
    pub fn evaluate_row(&self, row: &[f64]) -> Result<f64, IngestError> {
        if row.len() != self.input_dim() {
            return Err(IngestError::DimensionMismatch { expected: self.input_dim(), found: row.len() });
        }
        let mut z = vec![0.0; self.pca.retained];
        self.pca.apply_row(row, &mut z);
        Ok(self.evaluate_latent(&z))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

fn univariate_table(bases: &[UnivariateBasis], z: &[f64]) -> Vec<Vec<f64>> {
    bases
        .iter()
        .zip(z)
        .map(|(b, x)| {
            let mut v = vec![0.0; b.degree + 1];
            b.eval_all(*x, &mut v);
            v
        })
        .collect()
}

/// `prod_i psi_i^(alpha_i)(point_i)`.
pub fn eval_multivariate(bases: &[UnivariateBasis], idx: &MultiIndex, point: &[f64]) -> Result<f64, BasisError> {
    idx.0
        .iter()
        .zip(bases)
        .zip(point)
        .try_fold(1.0, |acc, ((&a, b), &x)| Ok(acc * b.eval(a as usize, x)?))
}

/// `Psi[i][j] = Phi_j(sample_i)`.
pub fn assemble_design_matrix(
    bases: &[UnivariateBasis],
    index_set: &IndexSet,
    samples: &SampleMatrix,
    par: Parallelism,
) -> Result<DMatrix<f64>, crate::pce::FitError> {
    if samples.ncols() != bases.len() {
        return Err(IngestError::DimensionMismatch { expected: bases.len(), found: samples.ncols() }.into());
    }
    for idx in &index_set.indices {
        for (&a, b) in idx.0.iter().zip(bases) {
            if a as usize > b.degree {
                return Err(BasisError::DegreeOutOfRange { requested: a as usize, max: b.degree }.into());
            }
        }
    }
    let m = index_set.len();
    let rows: Vec<Vec<f64>> = par.map(samples.nrows(), |r| {
        let psi = univariate_table(bases, samples.row(r));
        index_set
            .indices
            .iter()
            .map(|idx| idx.0.iter().enumerate().map(|(i, &a)| psi[i][a as usize]).product())
            .collect()
    });
    Ok(DMatrix::from_fn(samples.nrows(), m, |i, j| rows[i][j]))
}

/// Surrogate values for physical rows, in row order.
pub fn evaluate_model(model: &PceModel, samples: &SampleMatrix, par: Parallelism) -> Result<Vec<f64>, IngestError> {
    if samples.ncols() != model.input_dim() {
        return Err(IngestError::DimensionMismatch { expected: model.input_dim(), found: samples.ncols() });
    }
    Ok(par.map(samples.nrows(), |i| model.evaluate_row(samples.row(i)).expect("dimension checked")))
}

/// Mean (zero-index coefficient) and variance (sum of squared others).
pub fn model_moments(model: &PceModel) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (idx, c) in model.active_indices.iter().zip(&model.coefficients) {
        if idx.is_zero() {
            mean += c;
        } else {
            var += c * c;
        }
    }
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apc::RawMoments;
    use crate::ingest::ColumnAffine;
    use approx::assert_abs_diff_eq;

    fn hermite_bases(n: usize) -> Vec<UnivariateBasis> {
        let m = RawMoments::analytic(vec![1.0, 0.0, 1.0, 0.0, 3.0]);
        (0..n).map(|_| UnivariateBasis::from_moments(&m, 2, ColumnAffine::IDENTITY).unwrap()).collect()
    }

    fn toy_model(coeffs: Vec<f64>, indices: Vec<Vec<u32>>) -> PceModel {
        PceModel {
            format_version: MODEL_FORMAT_VERSION,
            input_names: vec!["a".into(), "b".into()],
            pca: PcaTransform::identity(2),
            bases: hermite_bases(2),
            active_indices: indices.into_iter().map(MultiIndex).collect(),
            coefficients: coeffs,
            e_cloo: 0.0,
            e_loo: 0.0,
            training_size: 0,
            candidate_terms: 6,
            config: FitConfig::default(),
        }
    }

    #[test]
    fn multivariate_values() {
        let b = hermite_bases(2);
        assert_eq!(eval_multivariate(&b, &MultiIndex(vec![0, 0]), &[3.0, -2.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(eval_multivariate(&b, &MultiIndex(vec![1, 1]), &[1.0, 1.0]).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            eval_multivariate(&b, &MultiIndex(vec![2, 0]), &[0.0, 9.0]).unwrap(),
            -1.0 / 2f64.sqrt(),
            epsilon = 1e-14
        );
        assert!(matches!(
            eval_multivariate(&b, &MultiIndex(vec![3, 0]), &[0.0, 0.0]),
            Err(BasisError::DegreeOutOfRange { .. })
        ));
    }

    #[test]
    fn design_shapes() {
        let b = hermite_bases(2);
        let set = crate::pce::generate_index_set(2, 2, 1.0);
        let one = SampleMatrix::from_rows(&[vec![0.3, -0.2]]).unwrap();
        let psi = assemble_design_matrix(&b, &set, &one, Parallelism::Sequential).unwrap();
        assert_eq!(psi.shape(), (1, 6));
        assert_eq!(psi[(0, 0)], 1.0);
        let constant = crate::pce::generate_index_set(2, 0, 1.0);
        let psi = assemble_design_matrix(&b, &constant, &one, Parallelism::Sequential).unwrap();
        assert_eq!(psi.shape(), (1, 1));
    }

    #[test]
    fn moments_from_coefficients() {
        let m = toy_model(vec![5.0], vec![vec![0, 0]]);
        assert_eq!(model_moments(&m), (5.0, 0.0));
        let rows = SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        assert_eq!(evaluate_model(&m, &rows, Parallelism::Sequential).unwrap(), vec![5.0, 5.0]);
        let m = toy_model(vec![1.0, 2.0], vec![vec![0, 0], vec![1, 0]]);
        assert_eq!(model_moments(&m), (1.0, 4.0));
    }

    #[test]
    fn json_round_trip_is_bit_faithful() {
        let m = toy_model(vec![0.1 + 0.2, 1.0 / 3.0, -2.0e-300], vec![vec![0, 0], vec![1, 0], vec![1, 1]]);
        let back = PceModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.coefficients.iter().zip(&m.coefficients) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_dimension_rejected() {
        let m = toy_model(vec![1.0], vec![vec![0, 0]]);
        let rows = SampleMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(evaluate_model(&m, &rows, Parallelism::Sequential), Err(IngestError::DimensionMismatch { .. })));
    }
}
