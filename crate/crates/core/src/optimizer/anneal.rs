//! Gradient-free coefficient search at fixed switching paths.
//!
//! The objective separates over regimes: each regime's coefficients only
//! see the points assigned to it, plus their own L1 term. Every regime is
//! searched independently by a componentwise Gaussian random walk with
//! Metropolis acceptance under a geometrically cooled temperature, followed
//! by a compass (pattern) search around the best point visited.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{CovariatePanel, ExcessPanel};
use crate::error::{Error, Result};
use crate::gpd::neg_log_density;
use crate::objective::{penalty, weighted_nll, SwitchingPath};
use crate::regression::{RegimeCoefficients, RegimeParameters};
use crate::rng::derive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealerSettings {
    /// Random-walk proposals per regime and coefficient step.
    pub n_steps: usize,
    /// Initial proposal standard deviation; relative to the mean excess for
    /// scale coefficients.
    pub initial_step_scale: f64,
    pub temperature_init: f64,
    pub temperature_decay: f64,
    /// Proposals per coefficient between two step-size adaptations.
    pub adapt_interval: usize,
    pub target_acceptance: f64,
    /// Lower bound of the shape-coefficient step.
    pub xi_step_floor: f64,
    /// Lower bound of the scale-coefficient step, relative to the mean excess.
    pub sigma_step_floor: f64,
    /// Objective evaluations allowed for the final compass search; 0 disables it.
    pub polish_evaluations: usize,
}

impl Default for AnnealerSettings {
    fn default() -> Self {
        Self {
            n_steps: 2000,
            initial_step_scale: 0.1,
            temperature_init: 1.0,
            temperature_decay: 0.999,
            adapt_interval: 20,
            target_acceptance: 0.3,
            xi_step_floor: 1e-6,
            sigma_step_floor: 1e-6,
            polish_evaluations: 2000,
        }
    }
}

impl AnnealerSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step_scale", self.initial_step_scale),
            ("temperature_init", self.temperature_init),
            ("xi_step_floor", self.xi_step_floor),
            ("sigma_step_floor", self.sigma_step_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.temperature_decay > 0.0 && self.temperature_decay < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature_decay must lie in (0, 1), got {}",
                self.temperature_decay
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target_acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if self.n_steps == 0 || self.adapt_interval == 0 {
            return Err(Error::InvalidConfig(
                "n_steps and adapt_interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Points assigned to one regime, gathered contiguously.
pub(crate) struct RegimeData {
    pub ys: Vec<f64>,
    /// Row-major `n x P`.
    pub us: Vec<f64>,
    pub p: usize,
}

impl RegimeData {
    pub fn gather(panel: &ExcessPanel, covs: &CovariatePanel, paths: &SwitchingPath, k: usize) -> Self {
        let p = covs.n_covariates();
        let mut ys = Vec::new();
        let mut us = Vec::new();
        for (s, loc) in panel.locations().iter().enumerate() {
            for (j, (&y, &label)) in loc.excesses.iter().zip(paths.labels(s)).enumerate() {
                if label == k {
                    ys.push(y);
                    us.extend_from_slice(covs.row(s, j));
                }
            }
        }
        Self { ys, us, p }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    /// NLL of the regime's points under flattened coefficients `c`.
    pub fn nll(&self, c: &[f64]) -> f64 {
        let p = self.p;
        let (xi_c, sigma_c) = c.split_at(p + 1);
        let mut total = 0.0;
        for (j, &y) in self.ys.iter().enumerate() {
            let u = &self.us[j * p..(j + 1) * p];
            let mut xi = xi_c[0];
            let mut sigma = sigma_c[0];
            for q in 0..p {
                xi += xi_c[q + 1] * u[q];
                sigma += sigma_c[q + 1] * u[q];
            }
            let v = neg_log_density(y, xi, sigma);
            if v == f64::INFINITY {
                return v;
            }
            total += v;
        }
        total
    }

    fn mean(&self) -> f64 {
        self.ys.iter().sum::<f64>() / self.ys.len() as f64
    }
}

/// Draws offset-only coefficients from the feasible box
/// `sigma0 in (0.5 median, 2 mean)`, `xi0 in (-0.4, 0.4)` with the lower
/// shape bound tightened so that the largest excess stays in the support.
pub(crate) fn draw_offsets<R: Rng + ?Sized>(ys: &[f64], n_covariates: usize, rng: &mut R) -> RegimeCoefficients {
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = crate::data_model::quantile_sorted(&sorted, 0.5);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let y_max = *sorted.last().unwrap();
    let sigma0 = rng.random_range(0.5 * median..2.0 * mean);
    let xi_lo = (-0.4f64).max(-0.99 * sigma0 / y_max);
    let xi0 = rng.random_range(xi_lo..0.4);
    RegimeCoefficients::offsets(xi0, sigma0, n_covariates)
}

const FALLBACK_ATTEMPTS: usize = 100;

fn regime_objective(data: &RegimeData, c: &[f64], lambda: f64, include_offsets: bool) -> f64 {
    let nll = data.nll(c);
    if lambda == 0.0 || nll == f64::INFINITY {
        return nll;
    }
    let p1 = data.p + 1;
    let l1: f64 = c
        .iter()
        .enumerate()
        .filter(|(i, _)| include_offsets || i % p1 != 0)
        .map(|(_, v)| v.abs())
        .sum();
    nll + lambda * l1
}

/// Searches one regime's coefficients; returns the best point visited.
fn anneal_regime<R: Rng + ?Sized>(
    data: &RegimeData,
    warm: &RegimeCoefficients,
    regime: usize,
    lambda: f64,
    include_offsets: bool,
    settings: &AnnealerSettings,
    rng: &mut R,
) -> Result<RegimeCoefficients> {
    let objective = |c: &[f64]| regime_objective(data, c, lambda, include_offsets);
    let mut current = warm.to_vec();
    let mut f_current = objective(&current);
    if !f_current.is_finite() {
        let mut found = false;
        for _ in 0..FALLBACK_ATTEMPTS {
            let candidate = draw_offsets(&data.ys, data.p, rng).to_vec();
            let f = objective(&candidate);
            if f.is_finite() {
                current = candidate;
                f_current = f;
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::NoFeasibleStart {
                regime,
                attempts: FALLBACK_ATTEMPTS,
            });
        }
    }

    let dim = current.len();
    let p1 = data.p + 1;
    let y_scale = data.mean();
    let floors: Vec<f64> = (0..dim)
        .map(|i| {
            if i < p1 {
                settings.xi_step_floor
            } else {
                settings.sigma_step_floor * y_scale
            }
        })
        .collect();
    let mut steps: Vec<f64> = (0..dim)
        .map(|i| {
            let base = if i < p1 { 1.0 } else { y_scale };
            (settings.initial_step_scale * base).max(floors[i])
        })
        .collect();

    let mut best = current.clone();
    let mut f_best = f_current;
    let mut accepted = vec![0usize; dim];
    let mut tried = vec![0usize; dim];
    let mut temperature = settings.temperature_init;
    for step in 0..settings.n_steps {
        let i = step % dim;
        let old = current[i];
        let z: f64 = rng.sample(StandardNormal);
        current[i] = old + steps[i] * z;
        let f_new = objective(&current);
        let accept = f_new.is_finite()
            && (f_new <= f_current || rng.random::<f64>() < (-(f_new - f_current) / temperature).exp());
        if accept {
            f_current = f_new;
            accepted[i] += 1;
            if f_new < f_best {
                f_best = f_new;
                best.copy_from_slice(&current);
            }
        } else {
            current[i] = old;
        }
        tried[i] += 1;
        if tried[i] == settings.adapt_interval {
            let rate = accepted[i] as f64 / tried[i] as f64;
            steps[i] = (steps[i] * (2.0 * (rate - settings.target_acceptance)).exp()).max(floors[i]);
            accepted[i] = 0;
            tried[i] = 0;
        }
        temperature *= settings.temperature_decay;
    }

    // Compass search: try +/- step along each axis, halve on failure.
    let mut evaluations = 0;
    while evaluations < settings.polish_evaluations && steps.iter().zip(&floors).any(|(s, f)| s >= f) {
        for i in 0..dim {
            if steps[i] < floors[i] {
                continue;
            }
            let mut improved = false;
            for sign in [1.0, -1.0] {
                let old = best[i];
                best[i] = old + sign * steps[i];
                let f_new = objective(&best);
                evaluations += 1;
                if f_new < f_best {
                    f_best = f_new;
                    improved = true;
                    break;
                }
                best[i] = old;
            }
            if !improved {
                steps[i] *= 0.5;
            }
        }
    }

    Ok(RegimeCoefficients::from_slice(&best))
}

/// Minimises the penalized NLL over the coefficients at fixed `paths`.
///
/// Starts from `warm_start`; a regime whose warm start is infeasible on its
/// assigned points is restarted from a random offset-only point. Regimes
/// without assigned points keep their coefficients. The returned parameters
/// never have a larger penalized NLL than the warm start (when the warm start
/// is feasible).
#[allow(clippy::too_many_arguments)]
pub fn theta_step<R: Rng + ?Sized>(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    paths: &SwitchingPath,
    lambda: f64,
    include_offsets: bool,
    warm_start: &RegimeParameters,
    settings: &AnnealerSettings,
    rng: &mut R,
) -> Result<RegimeParameters> {
    let stream_seed: u64 = rng.random();
    let updated: Vec<Result<Option<RegimeCoefficients>>> = (0..warm_start.n_regimes())
        .into_par_iter()
        .map(|k| {
            let data = RegimeData::gather(panel, covs, paths, k);
            if data.len() == 0 {
                return Ok(None);
            }
            let mut regime_rng = derive(stream_seed, &[k as u64]);
            anneal_regime(
                &data,
                warm_start.regime(k),
                k,
                lambda,
                include_offsets,
                settings,
                &mut regime_rng,
            )
            .map(Some)
        })
        .collect();
    let mut theta = warm_start.clone();
    for (k, r) in updated.into_iter().enumerate() {
        if let Some(coefficients) = r? {
            theta.set_regime(k, coefficients);
        }
    }

    // Per-regime sums are accumulated in a different order than the panel
    // objective; guard against round-off making the result worse.
    let objective = |t: &RegimeParameters| weighted_nll(panel, covs, t, paths) + penalty(t, lambda, include_offsets);
    let before = objective(warm_start);
    if before.is_finite() && objective(&theta) > before {
        return Ok(warm_start.clone());
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{LocationExcesses, TimeIndex};
    use crate::gpd::{gpd_quantile, GpdPoint};
    use crate::rng::derive;

    fn sample_panel(xi: f64, sigma: f64, n: usize, seed: u64) -> ExcessPanel {
        let mut rng = derive(seed, &[]);
        let p = GpdPoint::new(xi, sigma).unwrap();
        let points = (0..n)
            .map(|i| {
                let y = loop {
                    let y = gpd_quantile(rng.random::<f64>(), &p).unwrap();
                    if y > 0.0 {
                        break y;
                    }
                };
                (i as TimeIndex, y)
            })
            .collect();
        ExcessPanel::new(vec![LocationExcesses::new("A", points)]).unwrap()
    }

    #[test]
    fn never_worse_than_warm_start() {
        let panel = sample_panel(0.1, 2.0, 300, 4);
        let covs = CovariatePanel::empty_like(&panel);
        let paths = SwitchingPath::constant(&panel, 0, 1);
        let warm = RegimeParameters::new(vec![RegimeCoefficients::offsets(0.1, 2.0, 0)]).unwrap();
        let mut rng = derive(1, &[]);
        let settings = AnnealerSettings {
            n_steps: 50,
            ..Default::default()
        };
        let out = theta_step(&panel, &covs, &paths, 0.0, true, &warm, &settings, &mut rng).unwrap();
        let f = |t: &RegimeParameters| weighted_nll(&panel, &covs, t, &paths);
        assert!(f(&out) <= f(&warm));
    }

    #[test]
    fn empty_regime_is_frozen() {
        let panel = sample_panel(0.0, 1.0, 100, 2);
        let covs = CovariatePanel::empty_like(&panel);
        let paths = SwitchingPath::constant(&panel, 0, 2);
        let frozen = RegimeCoefficients::offsets(0.33, 7.5, 0);
        let warm = RegimeParameters::new(vec![RegimeCoefficients::offsets(0.0, 1.0, 0), frozen.clone()]).unwrap();
        let mut rng = derive(1, &[]);
        let out = theta_step(
            &panel,
            &covs,
            &paths,
            0.0,
            true,
            &warm,
            &AnnealerSettings::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.regime(1), &frozen);
        assert_ne!(out.regime(0), warm.regime(0));
    }

    #[test]
    fn infeasible_warm_start_falls_back() {
        let panel = sample_panel(0.0, 1.0, 200, 3);
        let covs = CovariatePanel::empty_like(&panel);
        let paths = SwitchingPath::constant(&panel, 0, 1);
        // sigma0 < 0 is infeasible everywhere.
        let warm = RegimeParameters::new(vec![RegimeCoefficients::offsets(0.0, -1.0, 0)]).unwrap();
        let mut rng = derive(1, &[]);
        let out = theta_step(
            &panel,
            &covs,
            &paths,
            0.0,
            true,
            &warm,
            &AnnealerSettings::default(),
            &mut rng,
        )
        .unwrap();
        assert!(weighted_nll(&panel, &covs, &out, &paths).is_finite());
    }

    #[test]
    fn validates_settings() {
        assert!(AnnealerSettings::default().validate().is_ok());
        let bad = AnnealerSettings {
            temperature_decay: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AnnealerSettings {
            n_steps: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
