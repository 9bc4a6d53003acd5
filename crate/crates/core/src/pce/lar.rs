//! Least-angle regression with per-step OLS refit ("hybrid" LAR).
//!
//! LAR only orders the candidate terms. Every prefix of that order, together
//! with the constant term, is refit by least squares on the raw columns and
//! scored by the corrected leave-one-out error; the best prefix wins.

use nalgebra::{DMatrix, DVector};

use super::regression::least_squares;
use super::FitError;

/// Result of [`lar_select`]; `active` indexes columns of the design matrix.
#[derive(Debug, Clone)]
pub struct LarSelection {
    pub active: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub e_loo: f64,
    pub e_cloo: f64,
    /// `(active-set size, e_cloo)` for every prefix that could be fitted.
    pub path_errors: Vec<(usize, f64)>,
}

/// Order in which LAR brings candidate columns `1..M` into the model.
///
/// Column 0 is the constant term and is never a candidate. At most
/// `max_terms` candidates are returned.
pub fn lar_path(psi: &DMatrix<f64>, y: &[f64], max_terms: usize) -> Vec<usize> {
    let (m_p, m) = psi.shape();
    let mut cols: Vec<Option<DVector<f64>>> = vec![None; m];
    for (j, slot) in cols.iter_mut().enumerate().skip(1) {
        let c = psi.column(j);
        let mean = c.mean();
        let centered = c.map(|v| v - mean);
        let norm = centered.norm();
        let scale = c.amax() * (m_p as f64).sqrt();
        if norm > 1e-10 * scale && norm > 0.0 {
            *slot = Some(centered / norm);
        }
    }
    let ymean = y.iter().sum::<f64>() / m_p as f64;
    let mut r = DVector::from_iterator(m_p, y.iter().map(|v| v - ymean));
    let r0 = r.norm();
    if r0 == 0.0 {
        return Vec::new();
    }

    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut excluded = vec![false; m];
    loop {
        if active.len() >= max_terms {
            break;
        }
        let corr: Vec<f64> = (0..m)
            .map(|j| cols[j].as_ref().map_or(0.0, |x| x.dot(&r)))
            .collect();
        let inactive = |j: usize, active: &[usize]| cols[j].is_some() && !excluded[j] && !active.contains(&j);
        let mut best: Option<(usize, f64)> = None;
        for j in (1..m).filter(|&j| inactive(j, &active)) {
            if best.is_none_or(|(_, b)| corr[j].abs() > b) {
                best = Some((j, corr[j].abs()));
            }
        }
        let Some((j_new, c_max)) = best else { break };
        if c_max <= 1e-13 * r0 {
            break;
        }
        active.push(j_new);
        signs.push(corr[j_new].signum());

        let k = active.len();
        let xa = DMatrix::from_fn(m_p, k, |i, a| signs[a] * cols[active[a]].as_ref().unwrap()[i]);
        let gram = xa.tr_mul(&xa);
        let ones = DVector::from_element(k, 1.0);
        let Some(chol) = gram.cholesky() else {
            // Collinear with the current active set: never a candidate again.
            active.pop();
            signs.pop();
            excluded[j_new] = true;
            continue;
        };
        let g_inv_1 = chol.solve(&ones);
        let s = ones.dot(&g_inv_1);
        if !(s > 0.0) {
            active.pop();
            signs.pop();
            excluded[j_new] = true;
            continue;
        }
        let a_a = 1.0 / s.sqrt();
        let w = g_inv_1 * a_a;
        let u = &xa * w;
        let c_big = active.iter().map(|&j| corr[j].abs()).fold(0.0, f64::max);
        let mut gamma = c_big / a_a;
        for j in (1..m).filter(|&j| inactive(j, &active)) {
            let aj = cols[j].as_ref().unwrap().dot(&u);
            for g in [(c_big - corr[j]) / (a_a - aj), (c_big + corr[j]) / (a_a + aj)] {
                if g > 1e-15 && g < gamma {
                    gamma = g;
                }
            }
        }
        r -= u * gamma;
    }
    active
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - (1e-12 * incumbent.abs() + 1e-15)
}

/// Select the LAR prefix with the smallest corrected leave-one-out error.
///
/// Column 0 of `psi` must be the constant term; it is part of every model.
/// Ties (within round-off) go to the smaller model, then to the earlier one.
pub fn lar_select(psi: &DMatrix<f64>, y: &[f64]) -> Result<LarSelection, FitError> {
    let (m_p, m) = psi.shape();
    if m_p != y.len() {
        return Err(FitError::LengthMismatch { rows: m_p, responses: y.len() });
    }
    if m_p < 2 {
        return Err(FitError::InsufficientSamples { terms: 1, samples: m_p });
    }
    let max_terms = (m - 1).min(m_p.saturating_sub(2));
    let order = lar_path(psi, y, max_terms);

    let mut best: Option<LarSelection> = None;
    let mut path_errors = Vec::new();
    for k in 0..=order.len() {
        let mut active = Vec::with_capacity(k + 1);
        active.push(0);
        active.extend_from_slice(&order[..k]);
        let sub = psi.select_columns(&active);
        let Ok(fit) = least_squares(&sub, y) else { continue };
        let Ok(e_loo) = fit.e_loo(y) else { continue };
        let Ok(e_cloo) = fit.e_cloo(y) else { continue };
        if !e_cloo.is_finite() {
            continue;
        }
        path_errors.push((active.len(), e_cloo));
        if best.as_ref().is_none_or(|b| better(e_cloo, b.e_cloo)) {
            best = Some(LarSelection { active, coefficients: fit.coefficients, e_loo, e_cloo, path_errors: Vec::new() });
        }
    }
    let mut sel = match best {
        Some(sel) => sel,
        None => {
            // Constant-only fallback.
            let mean = y.iter().sum::<f64>() / m_p as f64;
            LarSelection { active: vec![0], coefficients: vec![mean], e_loo: f64::INFINITY, e_cloo: f64::INFINITY, path_errors: Vec::new() }
        }
    };
    sel.path_errors = path_errors;
    Ok(sel)
}
