//! Synthetic panels with known switching paths and regime coefficients.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    scale_covariates, CovariateKind, CovariatePanel, ExcessPanel, LocationCovariates, LocationExcesses, TimeIndex,
};
use crate::error::{Error, Result};
use crate::gpd::{gpd_quantile, GpdPoint};
use crate::objective::SwitchingPath;
use crate::optimizer::random_path_with_switches;
use crate::regression::{RegimeCoefficients, RegimeParameters};
use crate::rng::derive;

const MAX_CONSECUTIVE_REDRAWS: usize = 1_000_000;

const TAG_TIMES: u64 = 1;
const TAG_PATH: u64 = 2;
const TAG_COVARIATE: u64 = 3;
const TAG_EXCESS: u64 = 4;
const TAG_GLOBAL: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Generator {
    /// Independent uniform draws on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// `sin(2 pi t / period + phase)` with a random phase (per location for
    /// local covariates).
    Sinusoid { period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScenario {
    pub n_locations: usize,
    /// Excesses per location.
    pub length: usize,
    /// Coefficients on the scaled covariates; defines `K` and `P`.
    pub theta: RegimeParameters,
    pub switches_per_location: usize,
    pub covariates: Vec<CovariateSpec>,
    /// Gaps between consecutive times are uniform on `1..=max_gap`.
    pub max_gap: TimeIndex,
    pub seed: u64,
}

impl SynthScenario {
    /// Two well separated regimes with one sinusoidal local covariate:
    /// `xi = 0.1, sigma = 1 + 0.5u` against `xi = -0.1, sigma = 8 + u`.
    pub fn recovery(seed: u64) -> Self {
        let theta = RegimeParameters::new(vec![
            RegimeCoefficients {
                xi: vec![0.1, 0.0],
                sigma: vec![1.0, 0.5],
            },
            RegimeCoefficients {
                xi: vec![-0.1, 0.0],
                sigma: vec![8.0, 1.0],
            },
        ])
        .expect("valid coefficients");
        Self {
            n_locations: 5,
            length: 400,
            theta,
            switches_per_location: 6,
            covariates: vec![CovariateSpec {
                name: "u1".into(),
                kind: CovariateKind::Local,
                generator: Generator::Sinusoid { period: 200.0 },
            }],
            max_gap: 3,
            seed,
        }
    }

    pub fn n_regimes(&self) -> usize {
        self.theta.n_regimes()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_locations == 0 {
            return Err(Error::NoLocations);
        }
        if self.length == 0 {
            return Err(Error::InvalidConfig("length must be positive".into()));
        }
        if self.max_gap < 1 {
            return Err(Error::InvalidConfig("max_gap must be at least 1".into()));
        }
        if self.covariates.len() != self.theta.n_covariates() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.n_covariates(),
                got: self.covariates.len(),
            });
        }
        for c in &self.covariates {
            match c.generator {
                Generator::Uniform { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                    return Err(Error::InvalidConfig(format!("covariate {}: empty range", c.name)));
                }
                Generator::Sinusoid { period } if !(period > 0.0 && period.is_finite()) => {
                    return Err(Error::InvalidConfig(format!("covariate {}: bad period", c.name)));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Generated panel together with the truth it was drawn from.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub excesses: ExcessPanel,
    /// Covariates before scaling, as they would appear in an input file.
    pub raw_covariates: CovariatePanel,
    /// Scaled covariates the excesses were drawn under.
    pub covariates: CovariatePanel,
    pub truth: SwitchingPath,
    pub theta: RegimeParameters,
}

fn location_id(s: usize) -> String {
    format!("S{:02}", s + 1)
}

fn raw_value(spec: &CovariateSpec, q: usize, s: usize, t: TimeIndex, seed: u64) -> f64 {
    let scope = match spec.kind {
        CovariateKind::Local => s as u64,
        CovariateKind::Global => u64::MAX,
    };
    match spec.generator {
        Generator::Uniform { lo, hi } => {
            // Keyed by time so a global covariate agrees across locations.
            let mut rng = derive(seed, &[TAG_COVARIATE, q as u64, scope, t as u64]);
            rng.random_range(lo..hi)
        }
        Generator::Sinusoid { period } => {
            let mut rng = derive(seed, &[TAG_GLOBAL, q as u64, scope]);
            let phase = rng.random_range(0.0..TAU);
            (TAU * t as f64 / period + phase).sin()
        }
    }
}

/// Draws a panel from `scenario`. Each location uses its own random streams,
/// so the result does not depend on the thread count.
pub fn gen_panel(scenario: &SynthScenario) -> Result<SynthData> {
    scenario.validate()?;
    let k = scenario.n_regimes();
    let seed = scenario.seed;

    // Times, labels and raw covariate rows of every location.
    type Skeleton = (Vec<TimeIndex>, Vec<usize>, Vec<Vec<f64>>);
    let skeleton: Vec<Skeleton> = (0..scenario.n_locations)
        .into_par_iter()
        .map(|s| {
            let mut rng = derive(seed, &[TAG_TIMES, s as u64]);
            let mut t: TimeIndex = 0;
            let times: Vec<TimeIndex> = (0..scenario.length)
                .map(|_| {
                    t += rng.random_range(1..=scenario.max_gap);
                    t
                })
                .collect();
            let mut rng = derive(seed, &[TAG_PATH, s as u64]);
            let labels = random_path_with_switches(scenario.length, k, scenario.switches_per_location, &mut rng);
            let rows = times
                .iter()
                .map(|&t| {
                    scenario
                        .covariates
                        .iter()
                        .enumerate()
                        .map(|(q, spec)| raw_value(spec, q, s, t, seed))
                        .collect()
                })
                .collect();
            (times, labels, rows)
        })
        .collect();

    let names = scenario.covariates.iter().map(|c| c.name.clone()).collect();
    let kinds = scenario.covariates.iter().map(|c| c.kind).collect();
    let raw_covariates = CovariatePanel::new(
        names,
        kinds,
        skeleton
            .iter()
            .enumerate()
            .map(|(s, (times, _, rows))| {
                LocationCovariates::new(
                    location_id(s),
                    times.iter().copied().zip(rows.iter().cloned()).collect(),
                )
            })
            .collect(),
    )?;
    let covariates = scale_covariates(&raw_covariates)?;

    let theta = &scenario.theta;
    let locations: Vec<LocationExcesses> = skeleton
        .par_iter()
        .enumerate()
        .map(|(s, (times, labels, _))| {
            let mut rng = derive(seed, &[TAG_EXCESS, s as u64]);
            let points = times
                .iter()
                .enumerate()
                .map(|(j, &t)| {
                    let (xi, sigma) = theta.eval_params(labels[j], covariates.row(s, j))?;
                    let point = GpdPoint::admissible(xi, sigma)?;
                    for _ in 0..MAX_CONSECUTIVE_REDRAWS {
                        let u: f64 = rng.random();
                        let y = gpd_quantile(u, &point)?;
                        if y > 0.0 && y.is_finite() {
                            return Ok((t, y));
                        }
                    }
                    Err(Error::InfeasibleScenario(format!(
                        "no positive excess at location {} time {t}",
                        location_id(s)
                    )))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LocationExcesses::new(location_id(s), points))
        })
        .collect::<Result<Vec<_>>>()?;
    let excesses = ExcessPanel::new(locations)?;
    let truth = SwitchingPath::new(skeleton.into_iter().map(|(_, labels, _)| labels).collect(), k)?;
    Ok(SynthData {
        excesses,
        raw_covariates,
        covariates,
        truth,
        theta: theta.clone(),
    })
}

/// Share of entries where `fitted` agrees with `truth` under the best
/// relabeling of `fitted`, together with that relabeling (`map[fitted] = true`).
pub fn label_accuracy(truth: &SwitchingPath, fitted: &SwitchingPath) -> (f64, Vec<usize>) {
    let k = truth.n_regimes().max(fitted.n_regimes());
    let total: usize = truth.all_labels().iter().map(|l| l.len()).sum();
    let mut best = (-1.0, Vec::new());
    for perm in permutations(k) {
        let hits: usize = truth
            .all_labels()
            .iter()
            .zip(fitted.all_labels())
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| **x == perm[**y]).count())
            .sum();
        let acc = if total == 0 { 1.0 } else { hits as f64 / total as f64 };
        if acc > best.0 {
            best = (acc, perm);
        }
    }
    best
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::gpd_cdf;

    fn offsets_only(regimes: &[(f64, f64)], length: usize, switches: usize, seed: u64) -> SynthScenario {
        SynthScenario {
            n_locations: 1,
            length,
            theta: RegimeParameters::new(
                regimes
                    .iter()
                    .map(|&(xi, sigma)| RegimeCoefficients::offsets(xi, sigma, 0))
                    .collect(),
            )
            .unwrap(),
            switches_per_location: switches,
            covariates: vec![],
            max_gap: 1,
            seed,
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let data = gen_panel(&offsets_only(&[(0.0, 1.0)], 100_000, 0, 4)).unwrap();
        let ys = &data.excesses.location(0).excesses;
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        // Exp(1) has unit standard deviation.
        assert!((mean - 1.0).abs() < 3.0 / (ys.len() as f64).sqrt(), "mean {mean}");
        assert!(ys.iter().all(|&y| y > 0.0));
    }

    #[test]
    fn two_regime_means() {
        let data = gen_panel(&offsets_only(&[(0.0, 1.0), (0.0, 8.0)], 20_000, 3, 8)).unwrap();
        let ys = &data.excesses.location(0).excesses;
        for (k, target) in [(0usize, 1.0), (1, 8.0)] {
            let sel: Vec<f64> = ys
                .iter()
                .zip(data.truth.labels(0))
                .filter(|(_, &l)| l == k)
                .map(|(&y, _)| y)
                .collect();
            let mean = sel.iter().sum::<f64>() / sel.len() as f64;
            assert!(
                (mean - target).abs() < 4.0 * target / (sel.len() as f64).sqrt(),
                "k={k} mean={mean}"
            );
        }
    }

    #[test]
    fn ks_against_generating_cdf() {
        let mut passes = 0;
        let seeds = 40;
        let point = GpdPoint::new(0.2, 2.0).unwrap();
        for seed in 0..seeds {
            let data = gen_panel(&offsets_only(&[(0.2, 2.0)], 5000, 0, seed)).unwrap();
            let mut ys = data.excesses.location(0).excesses.clone();
            ys.sort_by(f64::total_cmp);
            let n = ys.len() as f64;
            let d = ys
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    let f = gpd_cdf(y, &point).unwrap();
                    ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
                })
                .fold(0.0, f64::max);
            if d < 1.6276 / n.sqrt() {
                passes += 1;
            }
        }
        assert!(passes as f64 >= 0.95 * seeds as f64, "{passes}/{seeds}");
    }

    #[test]
    fn recovery_scenario_shape() {
        let scenario = SynthScenario::recovery(3);
        let data = gen_panel(&scenario).unwrap();
        assert_eq!(data.excesses.n_locations(), 5);
        assert!(data.covariates.is_aligned_with(&data.excesses));
        for s in 0..5 {
            assert_eq!(data.excesses.location(s).len(), 400);
            assert_eq!(data.truth.switch_count(s), 6);
            for j in 0..400 {
                let u = data.covariates.row(s, j)[0];
                assert!((0.0..=1.0).contains(&u));
            }
        }
        // Rescaling the raw panel reproduces the generating covariates.
        assert_eq!(scale_covariates(&data.raw_covariates).unwrap(), data.covariates);
    }

    #[test]
    fn generation_is_reproducible() {
        let a = gen_panel(&SynthScenario::recovery(11)).unwrap();
        let b = gen_panel(&SynthScenario::recovery(11)).unwrap();
        assert_eq!(a.excesses, b.excesses);
        assert_eq!(a.truth, b.truth);
        let c = gen_panel(&SynthScenario::recovery(12)).unwrap();
        assert_ne!(a.excesses, c.excesses);
    }

    #[test]
    fn global_covariate_is_shared_across_locations() {
        let mut scenario = SynthScenario::recovery(2);
        scenario.covariates[0].kind = CovariateKind::Global;
        scenario.covariates[0].generator = Generator::Uniform { lo: 0.0, hi: 10.0 };
        scenario.max_gap = 1;
        let data = gen_panel(&scenario).unwrap();
        let raw = &data.raw_covariates;
        assert_eq!(raw.location(0).values(), raw.location(3).values());
    }

    #[test]
    fn label_accuracy_uses_best_permutation() {
        let truth = SwitchingPath::new(vec![vec![0, 0, 1, 1]], 2).unwrap();
        let swapped = SwitchingPath::new(vec![vec![1, 1, 0, 0]], 2).unwrap();
        let (acc, map) = label_accuracy(&truth, &swapped);
        assert_eq!(acc, 1.0);
        assert_eq!(map, vec![1, 0]);
        let off = SwitchingPath::new(vec![vec![1, 1, 1, 0]], 2).unwrap();
        assert_eq!(label_accuracy(&truth, &off).0, 0.75);
        assert_eq!(permutations(3).len(), 6);
    }

    #[test]
    fn rejects_mismatched_covariates() {
        let mut scenario = SynthScenario::recovery(0);
        scenario.covariates.clear();
        assert!(gen_panel(&scenario).is_err());
    }
}
