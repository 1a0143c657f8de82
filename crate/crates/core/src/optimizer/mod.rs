//! Restarted alternating optimization of regime coefficients and switching
//! paths.
//!
//! Each restart draws random feasible paths, fits the coefficients to them,
//! then alternates
//!
//! 1. an exact assignment step: per location, the label path with at most
//!    `C` switches minimizing the loss of the current coefficients;
//! 2. a coefficient step: annealed search at the new paths, warm-started
//!    from the current coefficients;
//!
//! until the penalized NLL changes by less than the tolerance. The best
//! restart wins, ties going to the lowest restart index.

mod anneal;
mod assignment;

pub(crate) use anneal::RegimeData;
pub use anneal::{theta_step, AnnealerSettings};
pub use assignment::{gamma_step, random_feasible_path, random_path_with_switches, Assignment, InfeasibleRow};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{CovariatePanel, ExcessPanel};
use crate::error::{Error, Result};
use crate::objective::{build_loss_matrix, penalty, weighted_nll, LossMatrix, SwitchingPath};
use crate::regression::RegimeParameters;
use crate::rng::{derive, StreamRng};

/// Model structure and optimizer controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of regimes `K`.
    pub n_regimes: usize,
    /// Maximal number of regime changes per location, `C`.
    pub switch_budget: usize,
    /// L1 weight.
    pub lambda: f64,
    pub restarts: usize,
    pub max_ao_iterations: usize,
    pub ao_tolerance: f64,
    pub seed: u64,
    /// Whether the L1 penalty also covers the two offsets of every regime.
    pub penalize_offsets: bool,
    pub annealer: AnnealerSettings,
}

impl ModelConfig {
    pub fn new(n_regimes: usize, switch_budget: usize, lambda: f64) -> Self {
        Self {
            n_regimes,
            switch_budget,
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_regimes == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be a finite nonnegative number, got {}",
                self.lambda
            )));
        }
        if self.restarts == 0 || self.max_ao_iterations == 0 {
            return Err(Error::InvalidConfig(
                "restarts and max_ao_iterations must be positive".into(),
            ));
        }
        if !(self.ao_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ao_tolerance must be positive, got {}",
                self.ao_tolerance
            )));
        }
        self.annealer.validate()
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_regimes: 1,
            switch_budget: 0,
            lambda: 0.0,
            restarts: 50,
            max_ao_iterations: 1000,
            ao_tolerance: 1e-3,
            seed: 0,
            penalize_offsets: true,
            annealer: AnnealerSettings::default(),
        }
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: RegimeParameters,
    pub paths: SwitchingPath,
    pub nll: f64,
    pub penalized_nll: f64,
    /// Effective configuration (the switch budget may have been clamped).
    pub config: ModelConfig,
    pub seed: u64,
    /// Completed AO iterations of the winning restart.
    pub ao_iterations: usize,
    pub restart_index_of_best: usize,
    pub converged: bool,
    /// Penalized NLL of the winning restart after initialization and after
    /// each half step (assignment, coefficients) of every AO iteration.
    pub history: Vec<f64>,
    /// Final penalized NLL of every restart, in restart order.
    pub restart_objectives: Vec<f64>,
}

/// Runs the exact assignment step on every location.
pub fn assign_all(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    theta: &RegimeParameters,
    budget: usize,
) -> Result<SwitchingPath> {
    let loss = build_loss_matrix(panel, covs, theta)?;
    assign_from_loss(panel, &loss, budget)
}

fn assign_from_loss(panel: &ExcessPanel, loss: &LossMatrix, budget: usize) -> Result<SwitchingPath> {
    let k = loss.n_regimes();
    let labels = (0..panel.n_locations())
        .into_par_iter()
        .map(|s| {
            gamma_step(loss.location(s), k, budget)
                .map(|a| a.labels)
                .map_err(|InfeasibleRow(j)| {
                    let loc = panel.location(s);
                    Error::InfeasiblePoint {
                        location: loc.location.clone(),
                        time: loc.times[j],
                    }
                })
        })
        .collect::<Result<Vec<_>>>()?;
    SwitchingPath::new(labels, k)
}

/// Assignment step that never increases any location's loss: where the DP
/// path is not strictly better than the previous one (possible only through
/// round-off between accumulation orders) the previous path is kept.
fn improve_paths(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    theta: &RegimeParameters,
    budget: usize,
    previous: &SwitchingPath,
) -> Result<SwitchingPath> {
    let loss = build_loss_matrix(panel, covs, theta)?;
    let candidate = assign_from_loss(panel, &loss, budget)?;
    let k = theta.n_regimes();
    let cost = |labels: &[usize], s: usize| -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(j, &l)| loss.location(s)[j * k + l])
            .sum()
    };
    let labels = (0..panel.n_locations())
        .map(|s| {
            if cost(candidate.labels(s), s) <= cost(previous.labels(s), s) {
                candidate.labels(s).to_vec()
            } else {
                previous.labels(s).to_vec()
            }
        })
        .collect();
    SwitchingPath::new(labels, k)
}

pub(crate) fn objective(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    theta: &RegimeParameters,
    paths: &SwitchingPath,
    config: &ModelConfig,
) -> f64 {
    weighted_nll(panel, covs, theta, paths) + penalty(theta, config.lambda, config.penalize_offsets)
}

/// Random initial coefficients: every regime offset-only, drawn from the
/// feasible box of the pooled excesses.
pub(crate) fn initial_theta(
    panel: &ExcessPanel,
    n_covariates: usize,
    n_regimes: usize,
    rng: &mut StreamRng,
) -> RegimeParameters {
    let ys: Vec<f64> = panel.all_excesses().collect();
    RegimeParameters::new(
        (0..n_regimes)
            .map(|_| anneal::draw_offsets(&ys, n_covariates, rng))
            .collect(),
    )
    .expect("nonempty regime list")
}

struct RestartOutcome {
    theta: RegimeParameters,
    paths: SwitchingPath,
    objective: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Alternating optimization from given initial paths and coefficients.
pub fn alternate(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    config: &ModelConfig,
    initial_theta: RegimeParameters,
    initial_paths: SwitchingPath,
    rng: &mut StreamRng,
) -> Result<(RegimeParameters, SwitchingPath, Vec<f64>, usize, bool)> {
    let mut paths = initial_paths;
    let mut theta = theta_step(
        panel,
        covs,
        &paths,
        config.lambda,
        config.penalize_offsets,
        &initial_theta,
        &config.annealer,
        rng,
    )?;
    let mut value = objective(panel, covs, &theta, &paths, config);
    let mut history = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    for iteration in 1..=config.max_ao_iterations {
        paths = improve_paths(panel, covs, &theta, config.switch_budget, &paths)?;
        history.push(objective(panel, covs, &theta, &paths, config));
        theta = theta_step(
            panel,
            covs,
            &paths,
            config.lambda,
            config.penalize_offsets,
            &theta,
            &config.annealer,
            rng,
        )?;
        let next = objective(panel, covs, &theta, &paths, config);
        history.push(next);
        iterations = iteration;
        let change = (value - next).abs();
        value = next;
        if change < config.ao_tolerance {
            converged = true;
            break;
        }
    }
    Ok((theta, paths, history, iterations, converged))
}

fn run_restart(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    config: &ModelConfig,
    restart: usize,
) -> Result<RestartOutcome> {
    let mut rng = derive(config.seed, &[restart as u64]);
    let k = config.n_regimes;
    let labels = panel
        .locations()
        .iter()
        .map(|loc| random_feasible_path(loc.len(), k, config.switch_budget, &mut rng))
        .collect();
    let paths = SwitchingPath::new(labels, k)?;
    let theta0 = initial_theta(panel, covs.n_covariates(), k, &mut rng);
    let (theta, paths, history, iterations, converged) = alternate(panel, covs, config, theta0, paths, &mut rng)?;
    let objective = *history.last().expect("history is never empty");
    Ok(RestartOutcome {
        theta,
        paths,
        objective,
        iterations,
        converged,
        history,
    })
}

/// Fits the model by restarted alternating optimization.
///
/// Deterministic given the data and `config` (including its seed),
/// independently of the number of worker threads.
pub fn fit(panel: &ExcessPanel, covs: &CovariatePanel, config: &ModelConfig) -> Result<FitResult> {
    config.validate()?;
    covs.check_aligned(panel)?;
    if panel.total_len() == 0 {
        return Err(Error::InvalidConfig("panel contains no excesses".into()));
    }
    let mut config = config.clone();
    let max_len = panel.max_len();
    if config.switch_budget > max_len {
        log::warn!(
            "switch budget {} exceeds the longest series ({max_len}); clamped",
            config.switch_budget
        );
        config.switch_budget = max_len;
    }

    let outcomes: Vec<Result<RestartOutcome>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(panel, covs, &config, r))
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let restart_objectives: Vec<f64> = outcomes.iter().map(|o| o.objective).collect();
    let (best_index, _) =
        restart_objectives.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
        );
    let best = outcomes.into_iter().nth(best_index).expect("at least one restart");
    let nll = weighted_nll(panel, covs, &best.theta, &best.paths);
    Ok(FitResult {
        nll,
        penalized_nll: best.objective,
        theta: best.theta,
        paths: best.paths,
        seed: config.seed,
        config,
        ao_iterations: best.iterations,
        restart_index_of_best: best_index,
        converged: best.converged,
        history: best.history,
        restart_objectives,
    })
}
