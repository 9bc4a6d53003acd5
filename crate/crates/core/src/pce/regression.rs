//! Least squares through a thin QR factorization, with the quantities the
//! leave-one-out error needs: hat-matrix diagonal and `tr[(Psi^T Psi)^-1]`.

use nalgebra::{DMatrix, DVector};

use super::FitError;

/// Largest accepted condition number of `Psi^T Psi`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Diagonal of `Psi (Psi^T Psi)^-1 Psi^T`.
    pub hat_diag: Vec<f64>,
    /// `tr[(Psi^T Psi)^-1]`.
    pub trace_inv_gram: f64,
    /// Condition number of `Psi^T Psi`.
    pub condition: f64,
}

impl LeastSquaresFit {
    /// Hat-matrix leave-one-out error of this fit.
    pub fn e_loo(&self, y: &[f64]) -> Result<f64, FitError> {
        loo_from_parts(y, &self.fitted, &self.hat_diag)
    }

    /// Corrected leave-one-out error of this fit.
    pub fn e_cloo(&self, y: &[f64]) -> Result<f64, FitError> {
        corrected_loo(self.e_loo(y)?, self.coefficients.len(), y.len(), self.trace_inv_gram)
    }
}

/// Minimize `|y - Psi c|^2`.
pub fn least_squares(psi: &DMatrix<f64>, y: &[f64]) -> Result<LeastSquaresFit, FitError> {
    let (rows, cols) = psi.shape();
    if rows != y.len() {
        return Err(FitError::LengthMismatch { rows, responses: y.len() });
    }
    if rows < cols || cols == 0 {
        return Err(FitError::InsufficientSamples { terms: cols, samples: rows });
    }
    let qr = psi.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(FitError::SingularNormalEquations { condition });
    }
    let q = qr.q();
    let yv = DVector::from_column_slice(y);
    let qty = q.tr_mul(&yv);
    let c = r
        .solve_upper_triangular(&qty)
        .ok_or(FitError::SingularNormalEquations { condition })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(FitError::SingularNormalEquations { condition })?;
    let trace_inv_gram = r_inv.iter().map(|v| v * v).sum();
    let hat_diag = q.row_iter().map(|row| row.iter().map(|v| v * v).sum()).collect();
    let fitted = (psi * &c).iter().copied().collect();
    Ok(LeastSquaresFit { coefficients: c.iter().copied().collect(), fitted, hat_diag, trace_inv_gram, condition })
}

/// Ordinary least-squares coefficients `(Psi^T Psi)^-1 Psi^T y`.
pub fn ols_fit(psi: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>, FitError> {
    least_squares(psi, y).map(|f| f.coefficients)
}

fn loo_from_parts(y: &[f64], fitted: &[f64], hat: &[f64]) -> Result<f64, FitError> {
    let m = y.len() as f64;
    let mean = y.iter().sum::<f64>() / m;
    let mut num = 0.0;
    for ((yi, fi), hi) in y.iter().zip(fitted).zip(hat) {
        let denom = 1.0 - hi;
        if denom <= 1e-12 {
            return Ok(f64::INFINITY);
        }
        num += ((yi - fi) / denom).powi(2);
    }
    let den: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let energy: f64 = y.iter().map(|v| v * v).sum();
    if den <= 1e-24 * energy || den == 0.0 {
        return if num <= 1e-20 * energy.max(f64::MIN_POSITIVE) { Ok(0.0) } else { Err(FitError::ZeroVariance) };
    }
    Ok(num / den)
}

/// Leave-one-out error from the hat-matrix diagonal, relative to the
/// response variance around the sample mean.
pub fn loo_error(psi: &DMatrix<f64>, y: &[f64], c: &[f64]) -> Result<f64, FitError> {
    let fit = least_squares(psi, y)?;
    let cv = DVector::from_column_slice(c);
    let fitted: Vec<f64> = (psi * cv).iter().copied().collect();
    loo_from_parts(y, &fitted, &fit.hat_diag)
}

/// `M_p / (M_p - M) * (1 + tr[(Psi^T Psi)^-1])`.
pub fn correction_factor(terms: usize, samples: usize, trace_inv_gram: f64) -> Result<f64, FitError> {
    if samples <= terms {
        return Err(FitError::InsufficientSamples { terms, samples });
    }
    Ok(samples as f64 / (samples - terms) as f64 * (1.0 + trace_inv_gram))
}

/// `e_cloo = T(M, M_p) * e_loo`.
pub fn corrected_loo(e_loo: f64, terms: usize, samples: usize, trace_inv_gram: f64) -> Result<f64, FitError> {
    Ok(correction_factor(terms, samples, trace_inv_gram)? * e_loo)
}
