//! Per-regime affine models for the GPD shape and scale.
//!
//! Regime `k` maps a covariate vector `u` to
//! `xi_k(u) = xi_k0 + sum_p xi_kp u_p` and `sigma_k(u) = sigma_k0 + sum_p sigma_kp u_p`.
//! No link function is applied; positivity of the scale and the shape bounds
//! are constraints checked against the observed covariate vectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data_model::{CovariatePanel, ExcessPanel, TimeIndex};
use crate::error::{Error, Result};
use crate::gpd::XI_BOUND;
use crate::objective::SwitchingPath;

/// Coefficients of one regime; index 0 holds the offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCoefficients {
    pub xi: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl RegimeCoefficients {
    /// Offset-only coefficients with all `n_covariates` slopes at zero.
    pub fn offsets(xi0: f64, sigma0: f64, n_covariates: usize) -> Self {
        let mut xi = vec![0.0; n_covariates + 1];
        let mut sigma = vec![0.0; n_covariates + 1];
        xi[0] = xi0;
        sigma[0] = sigma0;
        Self { xi, sigma }
    }

    pub fn n_covariates(&self) -> usize {
        self.xi.len() - 1
    }

    /// Shape and scale at `u`. The caller guarantees `u.len() == P`.
    #[inline]
    pub fn eval(&self, u: &[f64]) -> (f64, f64) {
        debug_assert_eq!(u.len() + 1, self.xi.len());
        let mut xi = self.xi[0];
        let mut sigma = self.sigma[0];
        for ((&a, &b), &x) in self.xi[1..].iter().zip(&self.sigma[1..]).zip(u) {
            xi += a * x;
            sigma += b * x;
        }
        (xi, sigma)
    }

    /// `sum |xi_kp| + |sigma_kp|`, optionally skipping the two offsets.
    pub fn l1_norm(&self, include_offsets: bool) -> f64 {
        let skip = usize::from(!include_offsets);
        self.xi.iter().skip(skip).map(|c| c.abs()).sum::<f64>()
            + self.sigma.iter().skip(skip).map(|c| c.abs()).sum::<f64>()
    }

    /// Flattened `[xi_0..xi_P, sigma_0..sigma_P]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.xi.iter().chain(&self.sigma).copied().collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let half = v.len() / 2;
        Self {
            xi: v[..half].to_vec(),
            sigma: v[half..].to_vec(),
        }
    }
}

/// `xi` and `sigma` of one regime at `u`, unvalidated.
pub fn eval_params(theta_k: &RegimeCoefficients, u: &[f64]) -> Result<(f64, f64)> {
    if u.len() != theta_k.n_covariates() {
        return Err(Error::DimensionMismatch {
            expected: theta_k.n_covariates(),
            got: u.len(),
        });
    }
    Ok(theta_k.eval(u))
}

/// Coefficients of all `K` regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeParameters {
    regimes: Vec<RegimeCoefficients>,
}

impl RegimeParameters {
    pub fn new(regimes: Vec<RegimeCoefficients>) -> Result<Self> {
        let Some(first) = regimes.first() else {
            return Err(Error::InvalidConfig("at least one regime is required".into()));
        };
        let len = first.xi.len();
        if len == 0 {
            return Err(Error::InvalidConfig("coefficient vectors must hold an offset".into()));
        }
        for r in &regimes {
            for v in [&r.xi, &r.sigma] {
                if v.len() != len {
                    return Err(Error::DimensionMismatch {
                        expected: len,
                        got: v.len(),
                    });
                }
            }
        }
        Ok(Self { regimes })
    }

    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.regimes[0].n_covariates()
    }

    /// Number of free coefficients, `K * 2 * (P + 1)`.
    pub fn n_coefficients(&self) -> usize {
        self.n_regimes() * 2 * (self.n_covariates() + 1)
    }

    pub fn regime(&self, k: usize) -> &RegimeCoefficients {
        &self.regimes[k]
    }

    pub fn regimes(&self) -> &[RegimeCoefficients] {
        &self.regimes
    }

    pub(crate) fn set_regime(&mut self, k: usize, coefficients: RegimeCoefficients) {
        debug_assert_eq!(coefficients.xi.len(), self.regimes[k].xi.len());
        self.regimes[k] = coefficients;
    }

    pub fn eval_params(&self, k: usize, u: &[f64]) -> Result<(f64, f64)> {
        eval_params(&self.regimes[k], u)
    }

    pub fn l1_norm(&self, include_offsets: bool) -> f64 {
        self.regimes.iter().map(|r| r.l1_norm(include_offsets)).sum()
    }

    /// Reorders regimes so that new regime `i` is old regime `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            regimes: order.iter().map(|&k| self.regimes[k].clone()).collect(),
        }
    }
}

/// Which of the three parameter constraints failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    /// `xi` outside `(-0.5, 0.5)`.
    XiRange,
    /// `sigma <= 0`.
    ScalePositive,
    /// `1 + xi y / sigma <= 0`.
    Support,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::XiRange => "xi range",
            Constraint::ScalePositive => "scale",
            Constraint::Support => "support",
        })
    }
}

/// First constraint violated by `(y, xi, sigma)`, checked in the order
/// shape range, scale, support.
#[inline]
pub fn check_point(y: f64, xi: f64, sigma: f64) -> Option<Constraint> {
    if !(xi.abs() < XI_BOUND) {
        Some(Constraint::XiRange)
    } else if !(sigma > 0.0) {
        Some(Constraint::ScalePositive)
    } else if !(1.0 + xi * y / sigma > 0.0) {
        Some(Constraint::Support)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub time: TimeIndex,
    pub regime: usize,
    pub constraint: Constraint,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated by regime {} at location {}, t={}",
            self.constraint, self.regime, self.location, self.time
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    Violated(Violation),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Feasibility::Feasible => None,
            Feasibility::Violated(v) => Some(v),
        }
    }
}

/// Checks the shape, scale and support constraints at every observed point.
///
/// Without an assignment every regime is checked at every point; with one,
/// each point is checked only under its assigned regime. Panels must be
/// aligned. Reports the first violation in location, time, regime order.
pub fn feasibility_check(
    theta: &RegimeParameters,
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    assignment: Option<&SwitchingPath>,
) -> Feasibility {
    for (s, loc) in panel.locations().iter().enumerate() {
        for (j, (&time, &y)) in loc.times.iter().zip(&loc.excesses).enumerate() {
            let u = covs.row(s, j);
            let regimes = match assignment {
                Some(path) => {
                    let k = path.label(s, j);
                    k..k + 1
                }
                None => 0..theta.n_regimes(),
            };
            for k in regimes {
                let (xi, sigma) = theta.regime(k).eval(u);
                if let Some(constraint) = check_point(y, xi, sigma) {
                    return Feasibility::Violated(Violation {
                        location: loc.location.clone(),
                        time,
                        regime: k,
                        constraint,
                    });
                }
            }
        }
    }
    Feasibility::Feasible
}
