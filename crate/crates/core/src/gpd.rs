//! Generalized Pareto density, distribution and quantile kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude of the shape the exponential limit is used.
pub const XI_SWITCH: f64 = 1e-8;

/// Model shapes must lie in the open interval `(-XI_BOUND, XI_BOUND)`.
pub const XI_BOUND: f64 = 0.5;

/// A `(shape, scale)` pair with positive scale and finite shape.
///
/// The kernels accept any finite shape; the model restricts shapes to
/// `(-0.5, 0.5)`, which [`GpdPoint::admissible`] enforces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdPoint {
    xi: f64,
    sigma: f64,
}

impl GpdPoint {
    pub fn new(xi: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("scale must be positive, got {sigma}")));
        }
        if !xi.is_finite() {
            return Err(Error::Domain(format!("shape must be finite, got {xi}")));
        }
        Ok(Self { xi, sigma })
    }

    /// Like [`GpdPoint::new`], additionally requiring `|xi| < 0.5`.
    pub fn admissible(xi: f64, sigma: f64) -> Result<Self> {
        if !(xi.abs() < XI_BOUND) {
            return Err(Error::Domain(format!("shape {xi} outside (-0.5, 0.5)")));
        }
        Self::new(xi, sigma)
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Right end of the support, finite only for negative shape.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.xi <= -XI_SWITCH).then(|| self.sigma / -self.xi)
    }
}

/// Negative log density without argument validation.
///
/// Returns `+inf` whenever the scale is not positive, the shape is outside
/// `(-0.5, 0.5)`, or `y` lies outside the support. This is the loss used by
/// the optimizer, where infeasible assignments are infinitely expensive.
#[inline]
pub fn neg_log_density(y: f64, xi: f64, sigma: f64) -> f64 {
    if !(xi.abs() < XI_BOUND) {
        return f64::INFINITY;
    }
    neg_log_density_any_shape(y, xi, sigma)
}

#[inline]
fn neg_log_density_any_shape(y: f64, xi: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::INFINITY;
    }
    if xi.abs() < XI_SWITCH {
        return sigma.ln() + y / sigma;
    }
    let z = xi * y / sigma;
    if !(z > -1.0) {
        return f64::INFINITY;
    }
    sigma.ln() + (1.0 / xi + 1.0) * z.ln_1p()
}

/// Log density at `y > 0`; `-inf` outside the support.
pub fn gpd_logpdf(y: f64, p: &GpdPoint) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("excess must be positive, got {y}")));
    }
    Ok(-neg_log_density_any_shape(y, p.xi, p.sigma))
}

/// Distribution function at `y >= 0`; clamps to 1 beyond the upper endpoint.
pub fn gpd_cdf(y: f64, p: &GpdPoint) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("cdf argument must be >= 0, got {y}")));
    }
    if p.xi.abs() < XI_SWITCH {
        return Ok(-(-y / p.sigma).exp_m1());
    }
    let z = p.xi * y / p.sigma;
    if z <= -1.0 {
        return Ok(1.0);
    }
    Ok(-(-z.ln_1p() / p.xi).exp_m1())
}

/// Quantile function for `u` in `[0, 1)`.
pub fn gpd_quantile(u: f64, p: &GpdPoint) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!("probability {u} outside [0, 1)")));
    }
    let log_survival = (-u).ln_1p();
    if p.xi.abs() < XI_SWITCH {
        return Ok(-p.sigma * log_survival);
    }
    Ok(p.sigma / p.xi * (-p.xi * log_survival).exp_m1())
}
