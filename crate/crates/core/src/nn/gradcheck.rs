//! Central finite-difference gradient checking.

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compare an analytic gradient against central finite differences.
///
/// `f` evaluates the scalar loss at the current parameter vector; `params`
/// is perturbed in place and restored. Relative error per coordinate is
/// `|a - fd| / max(|a|, |fd|, 1e-8)`; the maximum over all coordinates is
/// returned.
pub fn grad_check<F>(mut f: F, params: &mut [f64], analytic: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![params.len()],
            got: vec![analytic.len()],
            context: "grad_check".into(),
        });
    }
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let saved = params[i];
        params[i] = saved + step;
        let plus = f(params)?;
        params[i] = saved - step;
        let minus = f(params)?;
        params[i] = saved;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("grad_check at coordinate {i}")));
        }
        let fd = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        if !a.is_finite() {
            return Err(Error::NonFinite(format!(
                "analytic gradient at coordinate {i}"
            )));
        }
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}
