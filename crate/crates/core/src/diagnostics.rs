//! Model validation: unit-exponential residuals with simulation QQ bands,
//! observed-information standard errors, and event synchronization.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{quantile_sorted, CovariatePanel, ExcessPanel, TimeIndex};
use crate::error::{Error, Result};
use crate::gpd::XI_SWITCH;
use crate::objective::SwitchingPath;
use crate::optimizer::{FitResult, RegimeData};
use crate::regression::Constraint;

/// Maps a GPD excess to a unit-exponential residual,
/// `log(1 + xi y / sigma) / xi` (or `y / sigma` near `xi = 0`). Only the
/// scale and support are checked; the shape may be any finite value.
pub fn residual_transform(y: f64, xi: f64, sigma: f64) -> Result<f64> {
    let violated = if !(sigma > 0.0) || !xi.is_finite() {
        Some(Constraint::ScalePositive)
    } else if !(1.0 + xi * y / sigma > 0.0) {
        Some(Constraint::Support)
    } else {
        None
    };
    if let Some(c) = violated {
        return Err(Error::Domain(format!(
            "residual at y={y}, xi={xi}, sigma={sigma}: {c} violated"
        )));
    }
    if xi.abs() < XI_SWITCH {
        Ok(y / sigma)
    } else {
        Ok((xi * y / sigma).ln_1p() / xi)
    }
}

/// Residual of every excess under its assigned regime, in panel order.
pub fn fit_residuals(result: &FitResult, panel: &ExcessPanel, covs: &CovariatePanel) -> Result<Vec<f64>> {
    covs.check_aligned(panel)?;
    result.paths.check_shape(panel)?;
    let mut out = Vec::with_capacity(panel.total_len());
    for (s, loc) in panel.locations().iter().enumerate() {
        for (j, &y) in loc.excesses.iter().enumerate() {
            let k = result.paths.label(s, j);
            let (xi, sigma) = result.theta.regime(k).eval(covs.row(s, j));
            out.push(residual_transform(y, xi, sigma)?);
        }
    }
    Ok(out)
}

/// Exponential QQ table with a simulation envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqTable {
    /// Plotting positions `-log(1 - i / (n + 1))`.
    pub theoretical: Vec<f64>,
    /// Sorted residuals.
    pub empirical: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub level: f64,
}

impl QqTable {
    pub fn len(&self) -> usize {
        self.theoretical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theoretical.is_empty()
    }

    /// Share of order statistics inside their band.
    pub fn fraction_inside(&self) -> f64 {
        let inside = self
            .empirical
            .iter()
            .zip(self.band_lo.iter().zip(&self.band_hi))
            .filter(|(e, (lo, hi))| **e >= **lo && **e <= **hi)
            .count();
        inside as f64 / self.len() as f64
    }
}

/// QQ points of `residuals` against Exp(1), with pointwise bands taken as
/// the `(1 -/+ level) / 2` quantiles of each order statistic over `n_boot`
/// simulated Exp(1) samples of the same size.
pub fn qq_data<R: Rng + ?Sized>(residuals: &[f64], n_boot: usize, level: f64, rng: &mut R) -> Result<QqTable> {
    if residuals.is_empty() {
        return Err(Error::Domain("no residuals".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("band level {level} outside (0, 1)")));
    }
    if n_boot == 0 {
        return Err(Error::Domain("n_boot must be positive".into()));
    }
    let n = residuals.len();
    let mut empirical = residuals.to_vec();
    empirical.sort_by(f64::total_cmp);
    let theoretical = (1..=n).map(|i| -(-(i as f64) / (n as f64 + 1.0)).ln_1p()).collect();

    // sims[i * n_boot + b]: i-th order statistic of simulated sample b.
    let mut sims = vec![0.0; n * n_boot];
    let mut sample = vec![0.0; n];
    for b in 0..n_boot {
        for v in sample.iter_mut() {
            *v = rng.sample(Exp1);
        }
        sample.sort_by(f64::total_cmp);
        for (i, &v) in sample.iter().enumerate() {
            sims[i * n_boot + b] = v;
        }
    }
    let lo_level = (1.0 - level) / 2.0;
    let hi_level = (1.0 + level) / 2.0;
    let (band_lo, band_hi) = sims
        .chunks_mut(n_boot)
        .map(|column| {
            column.sort_by(f64::total_cmp);
            (quantile_sorted(column, lo_level), quantile_sorted(column, hi_level))
        })
        .unzip();
    Ok(QqTable {
        theoretical,
        empirical,
        band_lo,
        band_hi,
        level,
    })
}

/// Kolmogorov-Smirnov distance between the sample and Exp(1).
pub fn ks_statistic_exp1(residuals: &[f64]) -> f64 {
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let cdf = -(-z.max(0.0)).exp_m1();
            let above = (i as f64 + 1.0) / n - cdf;
            let below = cdf - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at significance `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Standard errors of one regime's coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeStdErrors {
    pub regime: usize,
    pub n_points: usize,
    /// Observed information (Hessian of the regime NLL), row-major.
    pub hessian: Vec<f64>,
    /// `None` when the Hessian is not positive definite.
    pub standard_errors: Option<Vec<f64>>,
}

impl RegimeStdErrors {
    pub fn not_positive_definite(&self) -> bool {
        self.standard_errors.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrorReport {
    pub regimes: Vec<RegimeStdErrors>,
}

const HESSIAN_REL_STEP: f64 = 1e-4;
const HESSIAN_HALVINGS: usize = 6;
/// Eigenvalues below this fraction of the largest count as zero.
const PD_REL_TOLERANCE: f64 = 1e-10;

/// Central-difference Hessian of `f` at `x`. Steps start at
/// `1e-4 max(1, |x_i|)` and are halved (up to six times) whenever a needed
/// evaluation is infeasible.
pub fn numerical_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], regime: usize) -> Result<DMatrix<f64>> {
    let d = x.len();
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::HessianInfeasible { regime });
    }
    let eval = |shifts: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, h) in shifts {
            p[i] += h;
        }
        f(&p)
    };
    let mut h = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut step = HESSIAN_REL_STEP * x[i].abs().max(1.0);
        let mut done = false;
        for _ in 0..=HESSIAN_HALVINGS {
            let fp = eval(&[(i, step)]);
            let fm = eval(&[(i, -step)]);
            if fp.is_finite() && fm.is_finite() {
                hess[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
                done = true;
                break;
            }
            step *= 0.5;
        }
        if !done {
            return Err(Error::HessianInfeasible { regime });
        }
        h[i] = step;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let (mut hi, mut hj) = (h[i], h[j]);
            let mut done = false;
            for _ in 0..=HESSIAN_HALVINGS {
                let pp = eval(&[(i, hi), (j, hj)]);
                let pm = eval(&[(i, hi), (j, -hj)]);
                let mp = eval(&[(i, -hi), (j, hj)]);
                let mm = eval(&[(i, -hi), (j, -hj)]);
                if [pp, pm, mp, mm].iter().all(|v| v.is_finite()) {
                    let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                    done = true;
                    break;
                }
                hi *= 0.5;
                hj *= 0.5;
            }
            if !done {
                return Err(Error::HessianInfeasible { regime });
            }
        }
    }
    Ok(hess)
}

/// Inverse of a positive definite symmetric matrix, or `None` when some
/// eigenvalue is not clearly positive.
pub fn invert_positive_definite(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if !(max > 0.0) || eig.eigenvalues.iter().any(|&v| !(v > PD_REL_TOLERANCE * max)) {
        return None;
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    Some(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose())
}

/// Standard errors of regime `k` from the observed information of its
/// unpenalized NLL at the fitted coefficients. Coefficients are ordered
/// `xi_0..xi_P, sigma_0..sigma_P`. A regime without points is reported as
/// not positive definite.
pub fn regime_standard_errors(
    result: &FitResult,
    panel: &ExcessPanel,
    covs: &CovariatePanel,
    k: usize,
) -> Result<RegimeStdErrors> {
    covs.check_aligned(panel)?;
    result.paths.check_shape(panel)?;
    let data = RegimeData::gather(panel, covs, &result.paths, k);
    let x = result.theta.regime(k).to_vec();
    let d = x.len();
    if data.len() == 0 {
        return Ok(RegimeStdErrors {
            regime: k,
            n_points: 0,
            hessian: vec![0.0; d * d],
            standard_errors: None,
        });
    }
    let f = |c: &[f64]| data.nll(c);
    let hess = numerical_hessian(&f, &x, k)?;
    let standard_errors = invert_positive_definite(&hess).and_then(|cov| {
        let se: Vec<f64> = (0..d).map(|i| cov[(i, i)].sqrt()).collect();
        se.iter().all(|v| *v > 0.0 && v.is_finite()).then_some(se)
    });
    Ok(RegimeStdErrors {
        regime: k,
        n_points: data.len(),
        hessian: hess.as_slice().to_vec(),
        standard_errors,
    })
}

/// [`regime_standard_errors`] for every regime.
pub fn standard_errors(result: &FitResult, panel: &ExcessPanel, covs: &CovariatePanel) -> Result<StdErrorReport> {
    let regimes = (0..result.theta.n_regimes())
        .map(|k| regime_standard_errors(result, panel, covs, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(StdErrorReport { regimes })
}

/// Which events enter an event-synchronization matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EsMode {
    /// All excesses.
    Stationary,
    /// Only excesses assigned to the given regime.
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsMatrix {
    pub locations: Vec<String>,
    /// Row-major `S x S`.
    pub values: Vec<f64>,
    pub mode: EsMode,
    /// Locations without events in this mode (zero rows and columns).
    pub empty_locations: Vec<String>,
}

impl EsMatrix {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.locations.len() + j]
    }
}

/// Half the smallest gap from event `l` to its existing neighbours.
fn half_gap(times: &[TimeIndex], l: usize) -> f64 {
    let mut gap = f64::INFINITY;
    if l > 0 {
        gap = gap.min((times[l] - times[l - 1]) as f64);
    }
    if l + 1 < times.len() {
        gap = gap.min((times[l + 1] - times[l]) as f64);
    }
    0.5 * gap
}

/// `(c(a|b), c(b|a))`: events of `a` shortly after events of `b` and vice
/// versa; coincident events count one half in each direction.
pub fn sync_counts(a: &[TimeIndex], b: &[TimeIndex], tau_max: f64) -> (f64, f64) {
    let mut a_after_b = 0.0;
    let mut b_after_a = 0.0;
    let b_half: Vec<f64> = (0..b.len()).map(|m| half_gap(b, m)).collect();
    for l in 0..a.len() {
        let tau_a = half_gap(a, l).min(tau_max);
        let t = a[l];
        let start = if tau_a.is_finite() {
            b.partition_point(|&x| ((t - x) as f64) > tau_a)
        } else {
            0
        };
        for m in start..b.len() {
            let diff = (t - b[m]) as f64;
            if -diff > tau_a {
                break;
            }
            let tau = tau_a.min(b_half[m]);
            if diff == 0.0 {
                a_after_b += 0.5;
                b_after_a += 0.5;
            } else if diff > 0.0 && diff <= tau {
                a_after_b += 1.0;
            } else if diff < 0.0 && -diff <= tau {
                b_after_a += 1.0;
            }
        }
    }
    (a_after_b, b_after_a)
}

/// Event-synchronization matrix of per-location event times. `tau_max` caps
/// the synchronization window (`f64::INFINITY` for no cap).
pub fn event_sync(series: &[(String, Vec<TimeIndex>)], tau_max: f64, mode: EsMode) -> Result<EsMatrix> {
    if !(tau_max > 0.0) {
        return Err(Error::Domain(format!("tau_max must be positive, got {tau_max}")));
    }
    for (id, times) in series {
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::NonIncreasingTime {
                location: id.clone(),
                time: times.windows(2).find(|w| w[1] <= w[0]).unwrap()[1],
            });
        }
    }
    let s = series.len();
    let empty_locations: Vec<String> = series
        .iter()
        .filter(|(_, t)| t.is_empty())
        .map(|(id, _)| id.clone())
        .collect();
    for id in &empty_locations {
        log::warn!("location {id} has no events; its ES row is zero");
    }
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|i| ((i + 1)..s).map(move |j| (i, j))).collect();
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&series[i].1, &series[j].1);
            if a.is_empty() || b.is_empty() {
                return 0.0;
            }
            let (ab, ba) = sync_counts(a, b, tau_max);
            ((ab + ba) / ((a.len() * b.len()) as f64).sqrt()).clamp(0.0, 1.0)
        })
        .collect();
    let mut values = vec![0.0; s * s];
    for i in 0..s {
        values[i * s + i] = 1.0;
    }
    for (&(i, j), &v) in pairs.iter().zip(&upper) {
        values[i * s + j] = v;
        values[j * s + i] = v;
    }
    Ok(EsMatrix {
        locations: series.iter().map(|(id, _)| id.clone()).collect(),
        values,
        mode,
        empty_locations,
    })
}

/// Event times per location for `mode`. Cluster mode requires `paths`.
pub fn events_for_mode(
    panel: &ExcessPanel,
    paths: Option<&SwitchingPath>,
    mode: EsMode,
) -> Result<Vec<(String, Vec<TimeIndex>)>> {
    match mode {
        EsMode::Stationary => Ok(panel
            .locations()
            .iter()
            .map(|l| (l.location.clone(), l.times.clone()))
            .collect()),
        EsMode::Cluster(k) => {
            let paths = paths.ok_or_else(|| Error::InvalidConfig("cluster-wise ES needs switching paths".into()))?;
            paths.check_shape(panel)?;
            if k >= paths.n_regimes() {
                return Err(Error::InvalidConfig(format!(
                    "cluster {k} out of range for {} regimes",
                    paths.n_regimes()
                )));
            }
            Ok(panel
                .locations()
                .iter()
                .enumerate()
                .map(|(s, l)| {
                    let times = l
                        .times
                        .iter()
                        .zip(paths.labels(s))
                        .filter(|(_, &r)| r == k)
                        .map(|(&t, _)| t)
                        .collect();
                    (l.location.clone(), times)
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::{gpd_quantile, GpdPoint};
    use crate::rng::derive;

    #[test]
    fn residual_examples() {
        assert_eq!(residual_transform(1.0, 0.0, 2.0).unwrap(), 0.5);
        let v = residual_transform(2.0, 0.5, 1.0).unwrap();
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((v - 1.386294).abs() < 1e-6);
        assert!(residual_transform(3.0, -0.4, 1.0).is_err());
        assert!(residual_transform(1.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn residual_inverts_quantile() {
        let mut rng = derive(17, &[]);
        for _ in 0..2000 {
            let xi = rng.random_range(-0.49..0.49);
            let sigma = rng.random_range(0.05..50.0);
            let u: f64 = rng.random_range(1e-9..0.999_999);
            let p = GpdPoint::new(xi, sigma).unwrap();
            let y = gpd_quantile(u, &p).unwrap();
            let z = residual_transform(y, xi, sigma).unwrap();
            assert!((z - (-(-u).ln_1p())).abs() < 1e-10, "xi={xi} sigma={sigma} u={u}");
        }
    }

    #[test]
    fn qq_on_plotting_positions_is_diagonal() {
        let n = 50;
        let pos: Vec<f64> = (1..=n).map(|i| -(-(i as f64) / (n as f64 + 1.0)).ln_1p()).collect();
        let mut rng = derive(1, &[]);
        let table = qq_data(&pos, 200, 0.95, &mut rng).unwrap();
        assert_eq!(table.theoretical, table.empirical);
        for i in 0..n {
            assert!(table.band_lo[i] <= table.band_hi[i]);
        }
        for w in table.empirical.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn qq_single_residual() {
        let mut rng = derive(2, &[]);
        let table = qq_data(&[0.7], 300, 0.95, &mut rng).unwrap();
        assert_eq!(table.len(), 1);
        assert!((table.theoretical[0] - 2f64.ln()).abs() < 1e-15);
        assert!(table.band_lo[0] < table.theoretical[0] && table.theoretical[0] < table.band_hi[0]);
        assert!(qq_data(&[], 10, 0.95, &mut rng).is_err());
    }

    #[test]
    fn ks_critical_value_matches_table() {
        assert!((ks_critical_value(1, 0.01) - 1.6276).abs() < 1e-4);
        assert!((ks_critical_value(1, 0.05) - 1.3581).abs() < 1e-4);
    }

    #[test]
    fn ks_statistic_small_sample() {
        // One point at the median: D = max(1 - 0.5, 0.5 - 0) = 0.5.
        let d = ks_statistic_exp1(&[2f64.ln()]);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 5.0 * x[1] * x[1];
        let h = numerical_hessian(&f, &[0.3, -1.2], 0).unwrap();
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 10.0).abs() < 1e-5);
        let inv = invert_positive_definite(&h).unwrap();
        let id = &h * inv;
        assert!((id[(0, 0)] - 1.0).abs() < 1e-8 && id[(0, 1)].abs() < 1e-8);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(invert_positive_definite(&singular).is_none());
    }

    #[test]
    fn hessian_shrinks_near_boundary() {
        // Infeasible for x < 1; evaluate right at 1 + 1e-5.
        let f = |x: &[f64]| {
            if x[0] < 1.0 {
                f64::INFINITY
            } else {
                (x[0] - 2.0).powi(2)
            }
        };
        let h = numerical_hessian(&f, &[1.0 + 1e-5], 0).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-3);
        assert!(matches!(
            numerical_hessian(&f, &[1.0 + 1e-9], 0),
            Err(Error::HessianInfeasible { regime: 0 })
        ));
    }

    fn exponential_fit(n: usize, sigma: f64, seed: u64) -> (FitResult, ExcessPanel, CovariatePanel) {
        use crate::optimizer::{fit, ModelConfig};
        let mut rng = derive(seed, &[]);
        let pts = (0..n as i64).map(|t| (t, sigma * rng.sample::<f64, _>(Exp1))).collect();
        let panel = ExcessPanel::new(vec![crate::data_model::LocationExcesses::new("A", pts)]).unwrap();
        let covs = CovariatePanel::empty_like(&panel);
        let mut config = ModelConfig::new(1, 0, 0.0);
        config.restarts = 2;
        config.annealer.n_steps = 400;
        (fit(&panel, &covs, &config).unwrap(), panel, covs)
    }

    #[test]
    fn exponential_scale_standard_error() {
        let n = 2000;
        let (result, panel, covs) = exponential_fit(n, 3.0, 5);
        let report = standard_errors(&result, &panel, &covs).unwrap();
        let r = &report.regimes[0];
        let sigma_hat = result.theta.regime(0).sigma[0];
        // With the shape held at zero the information of sigma is n / sigma^2.
        let conditional = 1.0 / r.hessian[3].sqrt();
        let analytic = sigma_hat / (n as f64).sqrt();
        assert!(
            (conditional / analytic - 1.0).abs() < 0.15,
            "{conditional} vs {analytic}"
        );
        // Estimating the shape as well inflates the variance to 2 sigma^2 / n
        // (inverse GPD information at xi = 0).
        let se = r.standard_errors.as_ref().unwrap();
        let joint = analytic * 2f64.sqrt();
        assert!((se[1] / joint - 1.0).abs() < 0.15, "{} vs {joint}", se[1]);
        // Shape SE at xi = 0 is 1 / sqrt(n).
        assert!((se[0] * (n as f64).sqrt() - 1.0).abs() < 0.15, "{}", se[0]);
    }

    #[test]
    fn rank_deficient_regime_is_flagged() {
        use crate::data_model::{LocationCovariates, LocationExcesses};
        use crate::optimizer::ModelConfig;
        let mut rng = derive(8, &[]);
        let p = 5;
        let times = [1i64, 2, 3];
        let panel = ExcessPanel::new(vec![LocationExcesses::new(
            "A",
            times.iter().map(|&t| (t, 1.0 + t as f64)).collect(),
        )])
        .unwrap();
        let rows = times
            .iter()
            .map(|&t| (t, (0..p).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let names = (0..p).map(|i| format!("u{i}")).collect();
        let covs = CovariatePanel::new(
            names,
            vec![crate::CovariateKind::Local; p],
            vec![LocationCovariates::new("A", rows)],
        )
        .unwrap();
        let theta = crate::RegimeParameters::new(vec![crate::RegimeCoefficients::offsets(0.1, 2.0, p)]).unwrap();
        assert_eq!(theta.n_coefficients(), 12);
        let result = FitResult {
            theta,
            paths: SwitchingPath::new(vec![vec![0; 3]], 1).unwrap(),
            nll: 0.0,
            penalized_nll: 0.0,
            config: ModelConfig::new(1, 0, 0.0),
            seed: 0,
            ao_iterations: 0,
            restart_index_of_best: 0,
            converged: true,
            history: vec![],
            restart_objectives: vec![],
        };
        let report = standard_errors(&result, &panel, &covs).unwrap();
        assert!(report.regimes[0].not_positive_definite());
        assert_eq!(report.regimes[0].n_points, 3);
    }

    #[test]
    fn exponential_residuals_fill_bands_at_nominal_rate() {
        let mut total = 0.0;
        let seeds = 10;
        for seed in 0..seeds {
            let mut rng = derive(seed, &[1]);
            let sample: Vec<f64> = (0..2000).map(|_| rng.sample(Exp1)).collect();
            let table = qq_data(&sample, 500, 0.95, &mut rng).unwrap();
            total += table.fraction_inside();
        }
        let mean = total / seeds as f64;
        assert!((mean - 0.95).abs() < 0.05, "{mean}");
    }

    #[test]
    fn es_matches_brute_force() {
        fn brute(a: &[TimeIndex], b: &[TimeIndex], cap: f64) -> f64 {
            let gap = |t: &[TimeIndex], l: usize| {
                let mut g = Vec::new();
                if l > 0 {
                    g.push((t[l] - t[l - 1]) as f64);
                }
                if l + 1 < t.len() {
                    g.push((t[l + 1] - t[l]) as f64);
                }
                g
            };
            let mut c = 0.0;
            for l in 0..a.len() {
                for m in 0..b.len() {
                    let mut gaps = gap(a, l);
                    gaps.extend(gap(b, m));
                    let tau = gaps.iter().fold(f64::INFINITY, |x, &y| x.min(y)) / 2.0;
                    let tau = tau.min(cap);
                    let d = (a[l] - b[m]) as f64;
                    // A coincidence counts 1/2 in each direction.
                    if d == 0.0 || d.abs() <= tau {
                        c += 1.0;
                    }
                }
            }
            (c / ((a.len() * b.len()) as f64).sqrt()).min(1.0)
        }
        let mut rng = derive(44, &[]);
        for _ in 0..300 {
            let series: Vec<(String, Vec<TimeIndex>)> = (0..3)
                .map(|i| {
                    let m = rng.random_range(0..=10);
                    let mut t: Vec<TimeIndex> = (0..m).map(|_| rng.random_range(0..40)).collect();
                    t.sort_unstable();
                    t.dedup();
                    (format!("L{i}"), t)
                })
                .collect();
            let cap = if rng.random::<bool>() {
                f64::INFINITY
            } else {
                rng.random_range(0.5..6.0)
            };
            let m = event_sync(&series, cap, EsMode::Stationary).unwrap();
            for i in 0..3 {
                assert_eq!(m.get(i, i), 1.0);
                for j in 0..3 {
                    assert_eq!(m.get(i, j), m.get(j, i));
                    if i != j {
                        let (a, b) = (&series[i].1, &series[j].1);
                        let expected = if a.is_empty() || b.is_empty() {
                            0.0
                        } else {
                            brute(a, b, cap)
                        };
                        assert!((m.get(i, j) - expected).abs() < 1e-12, "{a:?} {b:?} cap {cap}");
                    }
                }
            }
        }
    }

    fn ids(lists: &[&[TimeIndex]]) -> Vec<(String, Vec<TimeIndex>)> {
        lists
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("L{i}"), l.to_vec()))
            .collect()
    }

    #[test]
    fn es_examples() {
        let m = event_sync(&ids(&[&[1, 5, 9], &[1, 5, 9]]), f64::INFINITY, EsMode::Stationary).unwrap();
        assert_eq!(m.get(0, 1), 1.0);

        assert_eq!(sync_counts(&[2, 6, 10], &[1, 5, 9], f64::INFINITY), (3.0, 0.0));
        let m = event_sync(&ids(&[&[1, 5, 9], &[2, 6, 10]]), f64::INFINITY, EsMode::Stationary).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);

        let m = event_sync(&ids(&[&[10], &[100]]), 5.0, EsMode::Stationary).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn es_empty_location_row_is_zero() {
        let m = event_sync(&ids(&[&[1, 2], &[], &[1, 2]]), 3.0, EsMode::Stationary).unwrap();
        assert_eq!(m.empty_locations, vec!["L1".to_string()]);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 2), 0.0);
        assert_eq!(m.get(0, 2), 1.0);
    }

    #[test]
    fn es_rejects_unsorted_times() {
        assert!(event_sync(&ids(&[&[3, 1]]), 1.0, EsMode::Stationary).is_err());
        assert!(event_sync(&ids(&[&[1]]), 0.0, EsMode::Stationary).is_err());
    }
}
