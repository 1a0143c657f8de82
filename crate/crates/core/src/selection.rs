//! AICc scoring and grid search over `(K, C, lambda)`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{CovariatePanel, ExcessPanel};
use crate::error::{Error, Result};
use crate::optimizer::{fit, FitResult, ModelConfig};

/// Small-sample corrected AIC, `2 nll + 2p + 2p(p+1)/(n-p-1)`.
pub fn aicc(nll: f64, p: usize, n: usize) -> Result<f64> {
    if n <= p + 1 {
        return Err(Error::SampleTooSmall { n, p });
    }
    let pf = p as f64;
    Ok(2.0 * nll + 2.0 * pf + 2.0 * pf * (pf + 1.0) / (n - p - 1) as f64)
}

/// Regression coefficients `K * 2 * (P + 1)` plus one per regime change in
/// the fitted paths.
pub fn count_parameters(result: &FitResult) -> usize {
    result.theta.n_coefficients() + result.paths.total_switches()
}

/// Axes of the configuration grid. Cells are enumerated with `K` outermost
/// and `lambda` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_regimes: Vec<usize>,
    pub switch_budgets: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl GridSpec {
    pub fn cells(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for &k in &self.n_regimes {
            for &c in &self.switch_budgets {
                for &l in &self.lambdas {
                    out.push((k, c, l));
                }
            }
        }
        out
    }
}

/// One row of the selection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub config: ModelConfig,
    pub nll: f64,
    pub penalized_nll: f64,
    /// Total number of excesses.
    pub n: usize,
    pub p: usize,
    /// `+inf` when `n <= p + 1` or the cell failed.
    pub aicc: f64,
    pub converged: bool,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub records: Vec<SelectionRecord>,
    /// Fit of every successful cell, in grid order.
    pub fits: Vec<Option<FitResult>>,
    /// Index of the selected record.
    pub best: Option<usize>,
}

impl Selection {
    pub fn best_record(&self) -> Option<&SelectionRecord> {
        self.best.map(|i| &self.records[i])
    }

    pub fn best_fit(&self) -> Option<&FitResult> {
        self.best.and_then(|i| self.fits[i].as_ref())
    }
}

fn record_for(fit: &FitResult, n: usize) -> SelectionRecord {
    let p = count_parameters(fit);
    SelectionRecord {
        config: fit.config.clone(),
        nll: fit.nll,
        penalized_nll: fit.penalized_nll,
        n,
        p,
        aicc: aicc(fit.nll, p, n).unwrap_or(f64::INFINITY),
        converged: fit.converged,
        seed: fit.seed,
        error: None,
    }
}

/// Index of the minimal finite AICc; ties go to smaller `K`, then smaller
/// `C`, then larger `lambda`.
pub fn select_best(records: &[SelectionRecord]) -> Option<usize> {
    let key_order = |a: &SelectionRecord, b: &SelectionRecord| {
        a.aicc
            .total_cmp(&b.aicc)
            .then(a.config.n_regimes.cmp(&b.config.n_regimes))
            .then(a.config.switch_budget.cmp(&b.config.switch_budget))
            .then(b.config.lambda.total_cmp(&a.config.lambda))
    };
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.aicc.is_finite())
        .min_by(|(ia, a), (ib, b)| match key_order(a, b) {
            Ordering::Equal => ia.cmp(ib),
            o => o,
        })
        .map(|(i, _)| i)
}

/// Fits every grid cell with the shared settings of `base` and selects the
/// minimal-AICc configuration. Cell failures are recorded, not propagated.
pub fn grid_search(
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    grid: &GridSpec,
    base: &ModelConfig,
) -> Result<Selection> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::InvalidConfig("empty configuration grid".into()));
    }
    let n = panel.total_len();
    let results: Vec<(SelectionRecord, Option<FitResult>)> = cells
        .par_iter()
        .map(|&(k, c, lambda)| {
            let config = ModelConfig {
                n_regimes: k,
                switch_budget: c,
                lambda,
                ..base.clone()
            };
            match fit(panel, covs, &config) {
                Ok(f) => (record_for(&f, n), Some(f)),
                Err(e) => {
                    log::warn!("cell K={k} C={c} lambda={lambda} failed: {e}");
                    (
                        SelectionRecord {
                            seed: config.seed,
                            config,
                            nll: f64::NAN,
                            penalized_nll: f64::NAN,
                            n,
                            p: 0,
                            aicc: f64::INFINITY,
                            converged: false,
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            }
        })
        .collect();
    let (records, fits): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let best = select_best(&records);
    Ok(Selection { records, fits, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::SwitchingPath;
    use crate::regression::{RegimeCoefficients, RegimeParameters};

    #[test]
    fn aicc_examples() {
        let v = aicc(100.0, 4, 50).unwrap();
        assert!((v - (208.0 + 40.0 / 45.0)).abs() < 1e-12);
        assert!((v - 208.8889).abs() < 1e-4);
        let limit = aicc(100.0, 4, 1_000_000).unwrap();
        assert!((limit - 208.0).abs() < 1e-3);
        assert!(matches!(aicc(1.0, 4, 5), Err(Error::SampleTooSmall { n: 5, p: 4 })));
        assert!(aicc(1.0, 4, 6).is_ok());
    }

    fn fake_fit(k: usize, p: usize, labels: Vec<Vec<usize>>) -> FitResult {
        let theta = RegimeParameters::new(vec![RegimeCoefficients::offsets(0.0, 1.0, p); k]).unwrap();
        FitResult {
            theta,
            paths: SwitchingPath::new(labels, k).unwrap(),
            nll: 0.0,
            penalized_nll: 0.0,
            config: ModelConfig::new(k, 0, 0.0),
            seed: 0,
            ao_iterations: 0,
            restart_index_of_best: 0,
            converged: true,
            history: vec![],
            restart_objectives: vec![],
        }
    }

    #[test]
    fn parameter_counting() {
        assert_eq!(count_parameters(&fake_fit(1, 0, vec![vec![0; 5]])), 2);
        let zero = fake_fit(2, 5, vec![vec![0; 10], vec![1; 10]]);
        assert_eq!(count_parameters(&zero), 24);
        // 30 switches spread over three locations.
        let alternating: Vec<usize> = (0..11).map(|i| i % 2).collect();
        let thirty = fake_fit(2, 5, vec![alternating.clone(), alternating.clone(), alternating]);
        assert_eq!(thirty.paths.total_switches(), 30);
        assert_eq!(count_parameters(&thirty), 54);
    }

    fn rec(k: usize, c: usize, lambda: f64, aicc: f64) -> SelectionRecord {
        SelectionRecord {
            config: ModelConfig::new(k, c, lambda),
            nll: 0.0,
            penalized_nll: 0.0,
            n: 100,
            p: 2,
            aicc,
            converged: true,
            seed: 0,
            error: None,
        }
    }

    #[test]
    fn selection_tie_breaks() {
        let records = vec![rec(2, 10, 0.0, 5.0), rec(1, 20, 0.0, 5.0), rec(3, 5, 0.0, 6.0)];
        assert_eq!(select_best(&records), Some(1));
        let records = vec![rec(2, 20, 0.0, 5.0), rec(2, 10, 0.0, 5.0)];
        assert_eq!(select_best(&records), Some(1));
        let records = vec![rec(2, 10, 0.0, 5.0), rec(2, 10, 0.5, 5.0)];
        assert_eq!(select_best(&records), Some(1));
        let records = vec![rec(1, 0, 0.0, f64::INFINITY)];
        assert_eq!(select_best(&records), None);
    }

    #[test]
    fn aicc_monotone() {
        for n in [10usize, 50, 1000] {
            for p in 1..(n - 2).min(30) {
                let a = aicc(10.0, p, n).unwrap();
                assert!(aicc(10.5, p, n).unwrap() > a);
                if n > p + 2 {
                    assert!(aicc(10.0, p + 1, n).unwrap() > a);
                }
            }
        }
    }
}
