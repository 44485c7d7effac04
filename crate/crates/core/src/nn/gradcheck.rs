//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

/// Gradient magnitudes below this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Coordinate where the maximum occurred.
    pub worst_index: usize,
}

/// Relative error `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `f`'s analytic gradient at `point` with central differences of
/// step `step` in every coordinate. `f` returns `(value, gradient)`.
pub fn check_gradients<F>(mut f: F, point: &[f64], step: f64) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let (value, analytic) = f(point)?;
    if !value.is_finite() || analytic.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("analytic value or gradient".into()));
    }
    if analytic.len() != point.len() {
        return Err(Error::shape("gradient length differs from point length"));
    }
    let mut x = point.to_vec();
    let mut worst = GradCheck {
        max_relative_error: 0.0,
        worst_index: 0,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let (plus, _) = f(&x)?;
        x[i] = orig - step;
        let (minus, _) = f(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("function value near coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst.max_relative_error {
            worst = GradCheck {
                max_relative_error: err,
                worst_index: i,
            };
        }
    }
    Ok(worst)
}
