//! Central finite differences, the independent gradient oracle used
//! throughout the test suites.

use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function of a parameter vector.
///
/// Evaluates `(f(p + step·eᵢ) − f(p − step·eᵢ)) / (2·step)` coordinate by
/// coordinate. Kept deliberately independent of the graph engine so it can
/// vouch for it.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    p: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if step <= 0.0 {
        return Err(Error::invalid(format!("finite differences: step {step} must be > 0")));
    }
    let mut work = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = work[i];
        work[i] = orig + step;
        let fp = f(&work)?;
        work[i] = orig - step;
        let fm = f(&work)?;
        work[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::non_finite(format!(
                "finite differences at coordinate {i}"
            )));
        }
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}

/// Relative error with a floored denominator, the comparison rule used by
/// every gradient check in this crate.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-8)
}

/// Largest elementwise [`rel_err`] between two gradient vectors.
pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter()
        .zip(want)
        .map(|(&g, &w)| rel_err(g, w))
        .fold(0.0, f64::max)
}
