//! The two log-space regression losses and their analytic gradients.
//!
//! Both compare predictions and targets after a `ln(1 + ·)` transform,
//! which keeps millisecond-scale targets spanning several orders of
//! magnitude on a comparable footing. Logarithms are natural.

use crate::error::{Error, Result};

fn check_lengths(y_hat: &[f64], y: &[f64]) -> Result<usize> {
    if y_hat.len() != y.len() {
        return Err(Error::Validation(format!(
            "prediction/target length mismatch: {} vs {}",
            y_hat.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Validation("loss over empty vectors".into()));
    }
    Ok(y.len())
}

/// Mean absolute percentage logarithmic error:
/// `mean |(ln(1+ŷ) - ln(1+y)) / ln(1+y)|`.
///
/// Targets must be strictly positive (the denominator vanishes at zero);
/// predictions must exceed -1. The subgradient of `|·|` at zero is taken
/// as 0. Returns the loss and `dL/dŷ`.
pub fn maple_loss(y_hat: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = check_lengths(y_hat, y)?;
    let n_f = n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&hat, &target) in y_hat.iter().zip(y) {
        if !(target > 0.0) {
            return Err(Error::Domain(format!(
                "MAPLE requires strictly positive targets, got {target}"
            )));
        }
        if !(hat > -1.0) {
            return Err(Error::Domain(format!(
                "MAPLE requires predictions > -1, got {hat}"
            )));
        }
        let log_target = target.ln_1p();
        let diff = hat.ln_1p() - log_target;
        loss += (diff / log_target).abs();
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.push(sign / (n_f * log_target * (1.0 + hat)));
    }
    Ok((loss / n_f, grad))
}

/// Mean squared logarithmic error: `mean (ln(1+ŷ) - ln(1+y))²`.
///
/// Targets must be nonnegative; predictions must exceed -1. Returns the
/// loss and `dL/dŷ`.
pub fn msle_loss(y_hat: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = check_lengths(y_hat, y)?;
    let n_f = n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&hat, &target) in y_hat.iter().zip(y) {
        if !(target >= 0.0) {
            return Err(Error::Domain(format!(
                "MSLE requires nonnegative targets, got {target}"
            )));
        }
        if !(hat > -1.0) {
            return Err(Error::Domain(format!(
                "MSLE requires predictions > -1, got {hat}"
            )));
        }
        let diff = hat.ln_1p() - target.ln_1p();
        loss += diff * diff;
        grad.push(2.0 * diff / (n_f * (1.0 + hat)));
    }
    Ok((loss / n_f, grad))
}
