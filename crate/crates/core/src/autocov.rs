//! Closed-form stationary autocovariances of the top layer for one- and
//! two-layer models.

use crate::error::{Error, Result};
use crate::system::DEGENERACY_GAP;

/// Stationary autocovariance of an OU process, `σ²/(2α) · e^{−α·lag}`.
pub fn ou_autocovariance(alpha: f64, sigma: f64, lag: f64) -> f64 {
    sigma * sigma / (2.0 * alpha) * (-alpha * lag).exp()
}

/// Stationary autocovariance of the top layer of a two-layer tracking model,
/// `cov(X₁(0), X₁(lag))`.
///
/// The pulls must differ by more than [`DEGENERACY_GAP`] relative.
pub fn two_layer_autocovariance(a1: f64, a2: f64, s1: f64, s2: f64, lag: f64) -> Result<f64> {
    if (a1 - a2).abs() <= DEGENERACY_GAP * a1.abs().max(a2.abs()) {
        return Err(Error::DegenerateEigensystem {
            a: a1,
            b: a2,
            gap: DEGENERACY_GAP,
        });
    }
    let e1 = (-a1 * lag).exp();
    let e2 = (-a2 * lag).exp();
    Ok(s1 * s1 / (2.0 * a1) * e1
        + s2 * s2 * a1 * a1 / (a1 * a1 - a2 * a2) * (e2 / (2.0 * a2) - e1 / (2.0 * a1)))
}
