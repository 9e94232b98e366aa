//! Dedekind eta on the imaginary axis: η(iτ) = e^{-πτ/12} ∏ (1 - e^{-2πkτ}).

use crate::error::{FkError, Result};
use crate::exact::SeriesAccuracy;
use std::f64::consts::PI;

pub fn dedekind_eta(tau: f64, acc: SeriesAccuracy) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(FkError::Domain(format!("eta argument must be positive, got {tau}")));
    }
    let q = (-2.0 * PI * tau).exp();
    let mut product = 1.0;
    let mut qk = q;
    let mut k = 0;
    while qk > acc.tol {
        product *= 1.0 - qk;
        qk *= q;
        k += 1;
        if k > acc.max_terms {
            return Err(FkError::Accuracy(format!(
                "eta product did not converge within {} terms at tau={tau}",
                acc.max_terms
            )));
        }
    }
    Ok((-PI * tau / 12.0).exp() * product)
}
