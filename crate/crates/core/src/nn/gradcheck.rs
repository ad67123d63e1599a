//! Central finite-difference gradient checking.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Entries whose analytic/numeric difference was within the roundoff
    /// bound of the difference quotient and so scored zero.
    pub below_noise: usize,
    /// Largest `|a − n|` over all checked entries.
    pub max_abs_diff: f64,
}

/// Roundoff allowance of one function evaluation, in units of machine
/// epsilon times the function magnitude.
pub const ROUNDOFF_ULPS: f64 = 32.0;

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` at every scalar
/// of `params`.
pub fn grad_check(f: impl FnMut(&[f64]) -> f64, params: &[f64], analytic: &[f64], eps: f64) -> Result<GradCheckReport> {
    let all: Vec<usize> = (0..params.len()).collect();
    grad_check_indices(f, params, analytic, eps, &all)
}

/// Like [`grad_check`] but only at the listed parameter indices.
pub fn grad_check_indices(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    indices: &[usize],
) -> Result<GradCheckReport> {
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let first = f(params);
    let second = f(params);
    if first.to_bits() != second.to_bits() {
        return Err(Error::InvalidInput(format!(
            "function is not deterministic: {first} vs {second}"
        )));
    }

    let mut x = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        below_noise: 0,
        max_abs_diff: 0.0,
    };
    for &i in indices {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        // A central difference cannot resolve anything below this, and the
        // fixed 1e-8 floor of the relative error would turn that noise into
        // a spurious failure wherever the true gradient is zero.
        let noise = ROUNDOFF_ULPS * f64::EPSILON * plus.abs().max(minus.abs()).max(1.0) / (2.0 * eps);
        let diff = (analytic[i] - numeric).abs();
        report.max_abs_diff = report.max_abs_diff.max(diff);
        let err = if diff <= noise {
            report.below_noise += 1;
            0.0
        } else {
            relative_error(analytic[i], numeric)
        };
        if report.checked == 0 || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}
