//! Moment-based orthonormal polynomial bases.
//!
//! For one input coordinate, the monic polynomial of degree `l` is the one
//! orthogonal to `1, z, ..., z^(l-1)` under the (empirical) measure. Its
//! coefficients solve a bordered Hankel system built from raw moments; the
//! norm follows from the same moments. No distribution family is assumed:
//! continuous, discrete and mixed data all go through the same path.
//!
//! Each column is standardized before moments are taken so that the Hankel
//! matrix stays well conditioned in physical units. The standardization is
//! stored in the basis and re-applied at evaluation time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ColumnAffine;

/// Largest condition number accepted for the moment system.
pub const MAX_MOMENT_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("column has {support} distinct values; degree {degree} needs more than {degree}")]
    InsufficientSupport { support: usize, degree: usize },
    #[error("moment matrix for degree {degree} is numerically singular (condition {condition:.3e})")]
    DegenerateSupport { degree: usize, condition: f64 },
    #[error("norm of degree-{degree} polynomial evaluated to {value:e}")]
    NonPositiveNorm { degree: usize, value: f64 },
    #[error("degree {requested} requested from a basis of degree {max}")]
    DegreeOutOfRange { requested: usize, max: usize },
    #[error("degree {degree} needs raw moments up to order {required}, only {available} supplied")]
    MissingMoments { degree: usize, required: usize, available: usize },
    #[error("cannot build a basis from an empty column")]
    EmptyColumn,
}

/// Raw moments `mu[j] = E[z^j]` of one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMoments {
    pub mu: Vec<f64>,
    /// Distinct sample values; `None` for analytically supplied moments.
    pub source_support_count: Option<usize>,
}

impl RawMoments {
    /// Externally supplied moments (e.g. from a known distribution).
    pub fn analytic(mu: Vec<f64>) -> Self {
        RawMoments { mu, source_support_count: None }
    }

    pub fn max_order(&self) -> usize {
        self.mu.len().saturating_sub(1)
    }
}

/// Moments `(1/M) sum z^j` for `j = 0..=max_order`.
pub fn estimate_raw_moments(column: &[f64], max_order: usize) -> RawMoments {
    let m = column.len();
    let mut mu = vec![0.0; max_order + 1];
    mu[0] = 1.0;
    if m > 0 && max_order > 0 {
        for &x in column {
            let mut p = 1.0;
            for mu_j in mu.iter_mut().skip(1) {
                p *= x;
                *mu_j += p;
            }
        }
        for mu_j in mu.iter_mut().skip(1) {
            *mu_j /= m as f64;
        }
    }
    RawMoments { mu, source_support_count: Some(support_count(column)) }
}

/// Number of distinct values (exact comparison).
pub fn support_count(column: &[f64]) -> usize {
    let mut v: Vec<f64> = column.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Coefficients `p[0..=l]` (ascending powers) of the monic orthogonal
/// polynomial of degree `l`.
///
/// Rows `0..l` of the system enforce `sum_k p[k] mu[k + j] = 0`; the last row
/// pins `p[l] = 1`.
pub fn solve_monic_coefficients(m: &RawMoments, l: usize) -> Result<Vec<f64>, BasisError> {
    if l == 0 {
        return Ok(vec![1.0]);
    }
    let required = 2 * l - 1;
    if m.max_order() < required {
        return Err(BasisError::MissingMoments { degree: l, required, available: m.max_order() });
    }
    let n = l + 1;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 0..l {
        for k in 0..n {
            a[(j, k)] = m.mu[j + k];
        }
    }
    a[(l, l)] = 1.0;
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[l] = 1.0;

    let condition = condition_number(&a);
    if !(condition <= MAX_MOMENT_CONDITION) {
        return Err(BasisError::DegenerateSupport { degree: l, condition });
    }
    let p = a.clone().lu().solve(&rhs).ok_or(BasisError::DegenerateSupport { degree: l, condition })?;

    let residual = (&a * &p - &rhs).amax();
    let scale = a.amax() * p.amax();
    if !(residual <= 1e-8 * scale.max(1.0)) {
        return Err(BasisError::DegenerateSupport { degree: l, condition });
    }
    let mut out: Vec<f64> = p.iter().copied().collect();
    out[l] = 1.0;
    Ok(out)
}

/// `sqrt(sum_k sum_j p[k] p[j] mu[k + j])`.
pub fn polynomial_norm(p: &[f64], m: &RawMoments) -> Result<f64, BasisError> {
    let l = p.len() - 1;
    if m.max_order() < 2 * l {
        return Err(BasisError::MissingMoments { degree: l, required: 2 * l, available: m.max_order() });
    }
    let mut sum = 0.0;
    let mut magnitude = 0.0;
    for (k, pk) in p.iter().enumerate() {
        for (j, pj) in p.iter().enumerate() {
            let t = pk * pj * m.mu[k + j];
            sum += t;
            magnitude += t.abs();
        }
    }
    // Cancellation down to round-off level means the polynomial vanishes on the support.
    if !(sum > 64.0 * f64::EPSILON * magnitude) {
        return Err(BasisError::NonPositiveNorm { degree: l, value: sum });
    }
    Ok(sum.sqrt())
}

/// Orthonormal polynomials `psi^(0..=degree)` for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateBasis {
    pub degree: usize,
    /// `monic_coeffs[l][k]` is the coefficient of `z^k` in the degree-`l` polynomial.
    pub monic_coeffs: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// Map from the physical coordinate to the one the moments were taken in.
    pub standardization: ColumnAffine,
    #[serde(default)]
    pub support_count: Option<usize>,
}

impl UnivariateBasis {
    /// Build from moments of the already-standardized coordinate.
    pub fn from_moments(m: &RawMoments, degree: usize, standardization: ColumnAffine) -> Result<Self, BasisError> {
        if let Some(support) = m.source_support_count {
            if support <= degree {
                return Err(BasisError::InsufficientSupport { support, degree });
            }
        }
        let mut monic_coeffs = Vec::with_capacity(degree + 1);
        let mut norms = Vec::with_capacity(degree + 1);
        for l in 0..=degree {
            let p = solve_monic_coefficients(m, l)?;
            norms.push(polynomial_norm(&p, m)?);
            monic_coeffs.push(p);
        }
        Ok(UnivariateBasis { degree, monic_coeffs, norms, standardization, support_count: m.source_support_count })
    }

    /// Degree-0 basis (`psi^(0) = 1`) for a coordinate that carries no variation.
    pub fn constant(standardization: ColumnAffine) -> Self {
        UnivariateBasis {
            degree: 0,
            monic_coeffs: vec![vec![1.0]],
            norms: vec![1.0],
            standardization,
            support_count: Some(1),
        }
    }

    /// `psi^(l)(x)` at a point in physical coordinates.
    pub fn eval(&self, l: usize, x: f64) -> Result<f64, BasisError> {
        if l > self.degree {
            return Err(BasisError::DegreeOutOfRange { requested: l, max: self.degree });
        }
        let z = self.standardization.apply(x);
        let p = &self.monic_coeffs[l];
        let v = p.iter().rev().fold(0.0, |acc, c| acc * z + c);
        Ok(v / self.norms[l])
    }

    /// All of `psi^(0..=degree)(x)` into `out`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        let z = self.standardization.apply(x);
        for (l, o) in out.iter_mut().enumerate().take(self.degree + 1) {
            let v = self.monic_coeffs[l].iter().rev().fold(0.0, |acc, c| acc * z + c);
            *o = v / self.norms[l];
        }
    }

    /// `G[a][b] = (1/M) sum psi^(a)(x_m) psi^(b)(x_m)` over `column`.
    pub fn empirical_gram(&self, column: &[f64]) -> DMatrix<f64> {
        let n = self.degree + 1;
        let mut g = DMatrix::<f64>::zeros(n, n);
        let mut v = vec![0.0; n];
        for &x in column {
            self.eval_all(x, &mut v);
            for a in 0..n {
                for b in 0..n {
                    g[(a, b)] += v[a] * v[b];
                }
            }
        }
        g / column.len() as f64
    }
}

/// Standardize the column, estimate moments to order `2 * degree` and build
/// the orthonormal basis.
pub fn build_univariate_basis(column: &[f64], degree: usize) -> Result<UnivariateBasis, BasisError> {
    if column.is_empty() {
        return Err(BasisError::EmptyColumn);
    }
    let support = support_count(column);
    if support <= degree {
        return Err(BasisError::InsufficientSupport { support, degree });
    }
    let affine = ColumnAffine::fit(column);
    let z: Vec<f64> = column.iter().map(|x| affine.apply(*x)).collect();
    let mut moments = estimate_raw_moments(&z, 2 * degree);
    moments.source_support_count = Some(support);
    UnivariateBasis::from_moments(&moments, degree, affine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const NORMAL: [f64; 5] = [1.0, 0.0, 1.0, 0.0, 3.0];

    #[test]
    fn moments_of_small_columns() {
        let m = estimate_raw_moments(&[1.0, 1.0, 1.0], 4);
        assert_eq!(m.mu, vec![1.0; 5]);
        assert_eq!(m.source_support_count, Some(1));
        assert_eq!(estimate_raw_moments(&[-1.0, 1.0], 3).mu, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(estimate_raw_moments(&[0.0, 1.0], 2).mu, vec![1.0, 0.5, 0.5]);
    }

    #[test]
    fn monic_base_case_and_hermite() {
        let m = RawMoments::analytic(NORMAL.to_vec());
        assert_eq!(solve_monic_coefficients(&m, 0).unwrap(), vec![1.0]);
        let p2 = solve_monic_coefficients(&m, 2).unwrap();
        assert_abs_diff_eq!(p2[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p2[1], 0.0, epsilon = 1e-14);
        assert_eq!(p2[2], 1.0);
        assert_abs_diff_eq!(polynomial_norm(&p2, &m).unwrap(), 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn bernoulli_half() {
        let m = RawMoments::analytic(vec![1.0, 0.5, 0.5]);
        let p1 = solve_monic_coefficients(&m, 1).unwrap();
        assert_abs_diff_eq!(p1[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(polynomial_norm(&p1, &m).unwrap(), 0.5, epsilon = 1e-15);
        let b = UnivariateBasis::from_moments(&m, 1, ColumnAffine::IDENTITY).unwrap();
        assert_abs_diff_eq!(b.eval(1, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.eval(1, 0.0).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_of_constant_is_one() {
        let m = RawMoments::analytic(vec![1.0, 7.0, 3.0]);
        assert_eq!(polynomial_norm(&[1.0], &m).unwrap(), 1.0);
    }

    #[test]
    fn hermite_value_at_origin() {
        let b = UnivariateBasis::from_moments(&RawMoments::analytic(NORMAL.to_vec()), 2, ColumnAffine::IDENTITY)
            .unwrap();
        assert_abs_diff_eq!(b.eval(2, 0.0).unwrap(), -1.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(b.eval(0, 123.0).unwrap(), 1.0);
        assert!(matches!(b.eval(3, 0.0), Err(BasisError::DegreeOutOfRange { requested: 3, max: 2 })));
    }

    #[test]
    fn two_point_column_rejects_degree_two() {
        let col: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        assert!(matches!(
            build_univariate_basis(&col, 2),
            Err(BasisError::InsufficientSupport { support: 2, degree: 2 })
        ));
        let b = build_univariate_basis(&col, 1).unwrap();
        assert_abs_diff_eq!(b.eval(1, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.eval(1, 0.0).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn degree_zero_basis_for_any_column() {
        let b = build_univariate_basis(&[4.0, 4.0, 4.0], 0).unwrap();
        assert_eq!(b.degree, 0);
        assert_eq!(b.eval(0, -10.0).unwrap(), 1.0);
    }

    #[test]
    fn missing_moments_reported() {
        let m = RawMoments::analytic(vec![1.0, 0.0]);
        assert!(matches!(solve_monic_coefficients(&m, 2), Err(BasisError::MissingMoments { .. })));
    }

    #[test]
    fn singular_moment_system_is_degenerate() {
        // Point mass: every moment equals one, so the Hankel block is rank one.
        let m = RawMoments::analytic(vec![1.0; 5]);
        assert!(matches!(solve_monic_coefficients(&m, 2), Err(BasisError::DegenerateSupport { .. })));
    }

    #[test]
    fn empirical_orthonormality_on_skewed_data() {
        let col: Vec<f64> = (1..=500).map(|i| ((i as f64) * 0.618).fract().powi(3) * 40.0 + 2.0).collect();
        let b = build_univariate_basis(&col, 4).unwrap();
        let g = b.empirical_gram(&col);
        let dev = (g - DMatrix::<f64>::identity(5, 5)).amax();
        assert!(dev < 1e-8, "gram deviation {dev}");
        for l in 0..=4 {
            assert_eq!(b.monic_coeffs[l][l], 1.0);
        }
    }
}
