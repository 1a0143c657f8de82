//! The `fit.json` document: fitted coefficients keyed by covariate name plus
//! the objective and convergence record.

use anyhow::{bail, Result};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use fembv_gpd::data_model::Scaling;
use fembv_gpd::objective::penalty;
use fembv_gpd::{
    aicc, count_parameters, CovariateKind, CovariatePanel, ExcessPanel, FitResult, ModelConfig, RegimeCoefficients,
    RegimeParameters, SwitchingPath,
};

use crate::io::InputError;

/// Version of the on-disk formats written by this tool.
pub const FORMAT_VERSION: u32 = 1;

/// Key of the constant term in the coefficient maps.
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateInfo {
    pub name: String,
    pub kind: CovariateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEntry {
    /// Numbered from 1.
    pub regime: usize,
    pub n_points: usize,
    pub xi: IndexMap<String, f64>,
    pub sigma: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub nll: f64,
    pub penalized_nll: f64,
    pub penalty: f64,
    pub n: usize,
    pub p: usize,
    /// Absent when the sample is too small for the correction.
    pub aicc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub ao_iterations: usize,
    pub restart_index_of_best: usize,
    pub history: Vec<f64>,
    /// Final objective per restart; `null` for restarts that failed.
    pub restart_objectives: Vec<Option<f64>>,
    pub total_switches: usize,
    pub max_switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub format_version: u32,
    pub covariates: Vec<CovariateInfo>,
    pub scaling: Vec<Scaling>,
    pub regimes: Vec<RegimeEntry>,
    pub objective: Objective,
    pub convergence: Convergence,
    pub config: ModelConfig,
}

fn keyed(values: &[f64], names: &[String]) -> IndexMap<String, f64> {
    std::iter::once(INTERCEPT.to_string())
        .chain(names.iter().cloned())
        .zip(values.iter().copied())
        .collect()
}

fn unkeyed(map: &IndexMap<String, f64>, names: &[String], regime: usize, part: &str) -> Result<Vec<f64>> {
    let expected: Vec<&str> = std::iter::once(INTERCEPT)
        .chain(names.iter().map(String::as_str))
        .collect();
    let found: Vec<&str> = map.keys().map(String::as_str).collect();
    if found != expected {
        bail!(InputError(format!(
            "fit.json regime {regime} {part}: coefficients {found:?} do not match covariates {expected:?}"
        )));
    }
    Ok(map.values().copied().collect())
}

impl FitFile {
    pub fn from_fit(fit: &FitResult, panel: &ExcessPanel, covs: &CovariatePanel) -> Self {
        let names = covs.names();
        let counts = fit.paths.counts();
        let regimes = fit
            .theta
            .regimes()
            .iter()
            .enumerate()
            .map(|(k, c)| RegimeEntry {
                regime: k + 1,
                n_points: counts[k],
                xi: keyed(&c.xi, names),
                sigma: keyed(&c.sigma, names),
            })
            .collect();
        let n = panel.total_len();
        let p = count_parameters(fit);
        Self {
            format_version: FORMAT_VERSION,
            covariates: names
                .iter()
                .zip(covs.kinds())
                .map(|(name, &kind)| CovariateInfo {
                    name: name.clone(),
                    kind,
                })
                .collect(),
            scaling: covs.scaling().to_vec(),
            regimes,
            objective: Objective {
                nll: fit.nll,
                penalized_nll: fit.penalized_nll,
                penalty: penalty(&fit.theta, fit.config.lambda, fit.config.penalize_offsets),
                n,
                p,
                aicc: aicc(fit.nll, p, n).ok(),
            },
            convergence: Convergence {
                converged: fit.converged,
                ao_iterations: fit.ao_iterations,
                restart_index_of_best: fit.restart_index_of_best,
                history: fit.history.clone(),
                restart_objectives: fit
                    .restart_objectives
                    .iter()
                    .map(|v| v.is_finite().then_some(*v))
                    .collect(),
                total_switches: fit.paths.total_switches(),
                max_switches: fit.paths.max_switches(),
            },
            config: fit.config.clone(),
        }
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    pub fn global_names(&self) -> Vec<String> {
        self.covariates
            .iter()
            .filter(|c| c.kind == CovariateKind::Global)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn theta(&self) -> Result<RegimeParameters> {
        let names = self.covariate_names();
        let regimes = self
            .regimes
            .iter()
            .map(|r| {
                Ok(RegimeCoefficients {
                    xi: unkeyed(&r.xi, &names, r.regime, "xi")?,
                    sigma: unkeyed(&r.sigma, &names, r.regime, "sigma")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegimeParameters::new(regimes)?)
    }

    /// Rebuilds the fit result around externally stored `paths`.
    pub fn to_fit(&self, paths: SwitchingPath) -> Result<FitResult> {
        Ok(FitResult {
            theta: self.theta()?,
            paths,
            nll: self.objective.nll,
            penalized_nll: self.objective.penalized_nll,
            config: self.config.clone(),
            seed: self.config.seed,
            ao_iterations: self.convergence.ao_iterations,
            restart_index_of_best: self.convergence.restart_index_of_best,
            converged: self.convergence.converged,
            history: self.convergence.history.clone(),
            restart_objectives: self
                .convergence
                .restart_objectives
                .iter()
                .map(|v| v.unwrap_or(f64::INFINITY))
                .collect(),
        })
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: Self =
            serde_json::from_slice(bytes).map_err(|e| InputError(format!("cannot parse fit.json: {e}")))?;
        if file.format_version != FORMAT_VERSION {
            bail!(InputError(format!(
                "fit.json format version {} is not supported (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file)
    }
}
