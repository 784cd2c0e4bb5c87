//! Poisson negative log-likelihood in the raw score `F = ln λ`.
//!
//! Up to the `ln r!` constant, `-ln P(r | λ) = λ - r ln λ = exp(F) - r F`,
//! with gradient `exp(F) - r` and Hessian `exp(F)`.

use super::GbrtError;

/// Stabilizer for every denominator and the rate floor in the base score.
pub const EPS: f64 = 1e-9;

pub fn poisson_loss(target: f64, raw: f64) -> Result<f64, GbrtError> {
    if !target.is_finite() || !raw.is_finite() {
        return Err(GbrtError::NonFinite);
    }
    let loss = raw.exp() - target * raw;
    if !loss.is_finite() {
        return Err(GbrtError::Overflow(raw));
    }
    Ok(loss)
}

pub fn grad_hess(target: f64, raw: f64) -> Result<(f64, f64), GbrtError> {
    if !target.is_finite() || !raw.is_finite() {
        return Err(GbrtError::NonFinite);
    }
    let lambda = raw.exp();
    if !lambda.is_finite() {
        return Err(GbrtError::Overflow(raw));
    }
    Ok((lambda - target, lambda))
}

/// Newton step `-G / (H + ε)` clamped to `±cap`.
pub fn leaf_value(sum_grad: f64, sum_hess: f64, cap: f64) -> f64 {
    (-sum_grad / (sum_hess + EPS)).clamp(-cap, cap)
}

/// Optimal constant raw score: `ln(mean(r) + ε)`.
pub fn base_score(targets: &[f64]) -> f64 {
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    (mean + EPS).ln()
}

/// Summed training loss; the terms are added in row order.
pub(crate) fn total_loss(targets: &[f64], raw: &[f64]) -> f64 {
    targets
        .iter()
        .zip(raw)
        .map(|(r, f)| f.exp() - r * f)
        .sum()
}
