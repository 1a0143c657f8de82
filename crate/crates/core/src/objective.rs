//! Switching paths, loss matrices and the (penalized) negative log-likelihood.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{CovariatePanel, ExcessPanel};
use crate::error::{Error, Result};
use crate::gpd::neg_log_density;
use crate::regression::RegimeParameters;

/// Regime label per excess, per location. The one-hot indicator of regime
/// `k` at entry `j` is `labels[s][j] == k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingPath {
    labels: Vec<Vec<usize>>,
    n_regimes: usize,
}

impl SwitchingPath {
    pub fn new(labels: Vec<Vec<usize>>, n_regimes: usize) -> Result<Self> {
        if n_regimes == 0 {
            return Err(Error::InvalidConfig("at least one regime is required".into()));
        }
        if let Some(&bad) = labels.iter().flatten().find(|&&k| k >= n_regimes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {n_regimes} regimes"
            )));
        }
        Ok(Self { labels, n_regimes })
    }

    /// Every entry of `panel` assigned to `label`.
    pub fn constant(panel: &ExcessPanel, label: usize, n_regimes: usize) -> Self {
        assert!(label < n_regimes);
        Self {
            labels: panel.locations().iter().map(|l| vec![label; l.len()]).collect(),
            n_regimes,
        }
    }

    pub fn n_regimes(&self) -> usize {
        self.n_regimes
    }

    pub fn n_locations(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn label(&self, s: usize, j: usize) -> usize {
        self.labels[s][j]
    }

    pub fn labels(&self, s: usize) -> &[usize] {
        &self.labels[s]
    }

    pub fn all_labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn switch_count(&self, s: usize) -> usize {
        switch_count(&self.labels[s])
    }

    pub fn total_switches(&self) -> usize {
        (0..self.labels.len()).map(|s| self.switch_count(s)).sum()
    }

    pub fn max_switches(&self) -> usize {
        (0..self.labels.len()).map(|s| self.switch_count(s)).max().unwrap_or(0)
    }

    pub fn respects_budget(&self, budget: usize) -> bool {
        (0..self.labels.len()).all(|s| self.switch_count(s) <= budget)
    }

    /// One-hot component `gamma_k` at location `s`.
    pub fn indicator(&self, s: usize, k: usize) -> Vec<bool> {
        self.labels[s].iter().map(|&r| r == k).collect()
    }

    /// Number of entries assigned to each regime.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_regimes];
        for &k in self.labels.iter().flatten() {
            counts[k] += 1;
        }
        counts
    }

    /// Relabels with `map[old] = new`.
    pub fn relabeled(&self, map: &[usize]) -> Self {
        Self {
            labels: self
                .labels
                .iter()
                .map(|row| row.iter().map(|&k| map[k]).collect())
                .collect(),
            n_regimes: self.n_regimes,
        }
    }

    /// Checks that the path has one label per excess.
    pub fn check_shape(&self, panel: &ExcessPanel) -> Result<()> {
        if self.labels.len() != panel.n_locations() {
            return Err(Error::DimensionMismatch {
                expected: panel.n_locations(),
                got: self.labels.len(),
            });
        }
        for (row, loc) in self.labels.iter().zip(panel.locations()) {
            if row.len() != loc.len() {
                return Err(Error::Misaligned(format!(
                    "location {}: {} labels for {} excesses",
                    loc.location,
                    row.len(),
                    loc.len()
                )));
            }
        }
        Ok(())
    }
}

/// Number of adjacent positions whose labels differ.
pub fn switch_count(labels: &[usize]) -> usize {
    labels.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Total variation of a binary sequence.
pub fn bv_norm(gamma: &[bool]) -> usize {
    gamma.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `L[s][j][k] = -log h(y_sj; theta_k(u_sj))`, `+inf` where regime `k` is
/// infeasible at the point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    n_regimes: usize,
    rows: Vec<Vec<f64>>,
}

impl LossMatrix {
    /// Builds a loss matrix from explicit rows, one `T_s x K` row-major
    /// block per location.
    pub fn from_rows(n_regimes: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if n_regimes == 0 {
            return Err(Error::InvalidConfig("at least one regime is required".into()));
        }
        for r in &rows {
            if r.len() % n_regimes != 0 {
                return Err(Error::DimensionMismatch {
                    expected: n_regimes,
                    got: r.len() % n_regimes,
                });
            }
        }
        Ok(Self { n_regimes, rows })
    }

    pub fn n_regimes(&self) -> usize {
        self.n_regimes
    }

    pub fn n_locations(&self) -> usize {
        self.rows.len()
    }

    pub fn len(&self, s: usize) -> usize {
        self.rows[s].len() / self.n_regimes
    }

    /// Row-major `T_s x K` block of location `s`.
    pub fn location(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    #[inline]
    pub fn get(&self, s: usize, j: usize, k: usize) -> f64 {
        self.rows[s][j * self.n_regimes + k]
    }

    /// Sum of the assigned cells.
    pub fn path_cost(&self, paths: &SwitchingPath) -> f64 {
        (0..self.rows.len())
            .map(|s| {
                paths
                    .labels(s)
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| self.get(s, j, k))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Loss matrix for every location, computed per location in parallel.
pub fn build_loss_matrix(panel: &ExcessPanel, covs: &CovariatePanel, theta: &RegimeParameters) -> Result<LossMatrix> {
    covs.check_aligned(panel)?;
    let k = theta.n_regimes();
    let rows = (0..panel.n_locations())
        .into_par_iter()
        .map(|s| {
            let loc = panel.location(s);
            let mut row = Vec::with_capacity(loc.len() * k);
            for (j, &y) in loc.excesses.iter().enumerate() {
                let u = covs.row(s, j);
                for regime in theta.regimes() {
                    let (xi, sigma) = regime.eval(u);
                    row.push(neg_log_density(y, xi, sigma));
                }
            }
            row
        })
        .collect();
    Ok(LossMatrix { n_regimes: k, rows })
}

/// NLL of the assigned regime at every point; `+inf` if any assigned pair is
/// infeasible. Per-location sums are combined in location order.
///
/// Panics if the panels or the path do not match in shape.
pub fn weighted_nll(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    theta: &RegimeParameters,
    paths: &SwitchingPath,
) -> f64 {
    let per_location: Vec<f64> = (0..panel.n_locations())
        .into_par_iter()
        .map(|s| {
            let loc = panel.location(s);
            let labels = paths.labels(s);
            assert_eq!(labels.len(), loc.len(), "path does not match panel");
            let mut total = 0.0;
            for (j, (&y, &k)) in loc.excesses.iter().zip(labels).enumerate() {
                let (xi, sigma) = theta.regime(k).eval(covs.row(s, j));
                total += neg_log_density(y, xi, sigma);
            }
            total
        })
        .collect();
    per_location.iter().sum()
}

/// `lambda * ||Theta||_1`.
pub fn penalty(theta: &RegimeParameters, lambda: f64, include_offsets: bool) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        lambda * theta.l1_norm(include_offsets)
    }
}

/// Weighted NLL plus the L1 penalty over all coefficients, offsets included.
pub fn penalized_nll(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    theta: &RegimeParameters,
    paths: &SwitchingPath,
    lambda: f64,
) -> f64 {
    weighted_nll(panel, covs, theta, paths) + penalty(theta, lambda, true)
}
