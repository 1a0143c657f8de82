//! Excess and covariate panels.
//!
//! Raw daily series are reduced to threshold excesses per location, and
//! covariate records are subset to the excess times and rescaled so that
//! local covariates lie in `[0, 1]` and global covariates in `[-1, 1]`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer day index relative to a user-declared epoch.
pub type TimeIndex = i64;

pub const DEFAULT_QUANTILE_LEVEL: f64 = 0.98;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// A raw observation series at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub location: String,
    pub observations: Vec<(TimeIndex, f64)>,
}

impl RawSeries {
    pub fn new(location: impl Into<String>, observations: Vec<(TimeIndex, f64)>) -> Result<Self> {
        let location = location.into();
        check_times(&location, observations.iter().map(|o| o.0))?;
        if let Some(&(time, _)) = observations.iter().find(|o| !o.1.is_finite()) {
            return Err(Error::NonFinite { location, time });
        }
        Ok(Self { location, observations })
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.1)
    }
}

fn check_times(location: &str, times: impl Iterator<Item = TimeIndex>) -> Result<()> {
    let mut prev: Option<TimeIndex> = None;
    for t in times {
        if prev.is_some_and(|p| t <= p) {
            return Err(Error::NonIncreasingTime {
                location: location.to_string(),
                time: t,
            });
        }
        prev = Some(t);
    }
    Ok(())
}

/// Empirical quantile by linear interpolation of order statistics
/// (position `1 + (n - 1) p`, "type 7"). `sorted` must be ascending and
/// nonempty.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Type-7 empirical quantile of unsorted data.
pub fn empirical_quantile(values: &[f64], level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, level)
}

/// Outcome of threshold extraction at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub threshold: f64,
    pub quantile_level: f64,
    pub excesses: Vec<(TimeIndex, f64)>,
}

impl Extraction {
    /// No observation exceeded the threshold. Not an error: the location is
    /// kept so that indexing stays stable, it just adds nothing to the
    /// likelihood.
    pub fn is_empty(&self) -> bool {
        self.excesses.is_empty()
    }
}

/// Threshold `= quantile(values, level) + epsilon`; keeps every observation
/// strictly above the threshold as `(time, value - threshold)`.
pub fn extract_excesses(series: &RawSeries, quantile_level: f64, epsilon: f64) -> Result<Extraction> {
    if series.observations.is_empty() {
        return Err(Error::EmptySeries(series.location.clone()));
    }
    if !(quantile_level > 0.0 && quantile_level < 1.0) {
        return Err(Error::QuantileLevel(quantile_level));
    }
    let values: Vec<f64> = series.values().collect();
    let threshold = empirical_quantile(&values, quantile_level) + epsilon;
    let excesses: Vec<_> = series
        .observations
        .iter()
        .filter(|o| o.1 > threshold)
        .map(|&(t, v)| (t, v - threshold))
        .collect();
    if excesses.is_empty() {
        log::warn!(
            "location {}: no observation exceeds threshold {threshold}",
            series.location
        );
    }
    Ok(Extraction {
        threshold,
        quantile_level,
        excesses,
    })
}

/// Threshold excesses at one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationExcesses {
    pub location: String,
    pub times: Vec<TimeIndex>,
    pub excesses: Vec<f64>,
    pub threshold: Option<f64>,
    pub quantile_level: Option<f64>,
}

impl LocationExcesses {
    pub fn new(location: impl Into<String>, points: Vec<(TimeIndex, f64)>) -> Self {
        let (times, excesses) = points.into_iter().unzip();
        Self {
            location: location.into(),
            times,
            excesses,
            threshold: None,
            quantile_level: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Per-location excess series. Lengths may differ between locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessPanel {
    locations: Vec<LocationExcesses>,
}

impl ExcessPanel {
    pub fn new(locations: Vec<LocationExcesses>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::NoLocations);
        }
        let mut seen = HashSet::new();
        for loc in &locations {
            if !seen.insert(loc.location.as_str()) {
                return Err(Error::DuplicateLocation(loc.location.clone()));
            }
            if loc.times.len() != loc.excesses.len() {
                return Err(Error::DimensionMismatch {
                    expected: loc.times.len(),
                    got: loc.excesses.len(),
                });
            }
            check_times(&loc.location, loc.times.iter().copied())?;
            for (&time, &value) in loc.times.iter().zip(&loc.excesses) {
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        location: loc.location.clone(),
                        time,
                    });
                }
                if value <= 0.0 {
                    return Err(Error::NonPositiveExcess {
                        location: loc.location.clone(),
                        time,
                        value,
                    });
                }
            }
        }
        Ok(Self { locations })
    }

    /// Extracts excesses from every raw series with a common rule.
    pub fn extract(series: &[RawSeries], quantile_level: f64, epsilon: f64) -> Result<Self> {
        let locations = series
            .iter()
            .map(|s| {
                let ex = extract_excesses(s, quantile_level, epsilon)?;
                let mut loc = LocationExcesses::new(s.location.clone(), ex.excesses);
                loc.threshold = Some(ex.threshold);
                loc.quantile_level = Some(ex.quantile_level);
                Ok(loc)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(locations)
    }

    pub fn locations(&self) -> &[LocationExcesses] {
        &self.locations
    }

    pub fn location(&self, s: usize) -> &LocationExcesses {
        &self.locations[s]
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.location == id)
    }

    /// Total number of excesses over all locations.
    pub fn total_len(&self) -> usize {
        self.locations.iter().map(LocationExcesses::len).sum()
    }

    pub fn max_len(&self) -> usize {
        self.locations.iter().map(LocationExcesses::len).max().unwrap_or(0)
    }

    pub fn all_excesses(&self) -> impl Iterator<Item = f64> + '_ {
        self.locations.iter().flat_map(|l| l.excesses.iter().copied())
    }
}

/// Whether a covariate is observed per location or shared by all locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Local,
    Global,
}

/// Covariate rows of one location, stored row-major (`times.len() x P`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationCovariates {
    pub location: String,
    pub times: Vec<TimeIndex>,
    values: Vec<f64>,
}

impl LocationCovariates {
    pub fn new(location: impl Into<String>, rows: Vec<(TimeIndex, Vec<f64>)>) -> Self {
        let mut times = Vec::with_capacity(rows.len());
        let mut values = Vec::new();
        for (t, row) in rows {
            times.push(t);
            values.extend(row);
        }
        Self {
            location: location.into(),
            times,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Affine scaling constants recorded for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub covariate: String,
    /// `None` for global covariates (pooled over all locations).
    pub location: Option<String>,
    pub min: f64,
    pub max: f64,
}

/// Covariate vectors per location and time. After [`align_panels`] the rows
/// correspond one to one with the entries of an [`ExcessPanel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariatePanel {
    names: Vec<String>,
    kinds: Vec<CovariateKind>,
    locations: Vec<LocationCovariates>,
    scaling: Vec<Scaling>,
}

impl CovariatePanel {
    pub fn new(names: Vec<String>, kinds: Vec<CovariateKind>, locations: Vec<LocationCovariates>) -> Result<Self> {
        if names.len() != kinds.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: kinds.len(),
            });
        }
        let p = names.len();
        let mut seen = HashSet::new();
        for loc in &locations {
            if !seen.insert(loc.location.as_str()) {
                return Err(Error::DuplicateLocation(loc.location.clone()));
            }
            if loc.values.len() != loc.times.len() * p {
                return Err(Error::DimensionMismatch {
                    expected: loc.times.len() * p,
                    got: loc.values.len(),
                });
            }
            check_times(&loc.location, loc.times.iter().copied())?;
            if let Some(pos) = loc.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    location: loc.location.clone(),
                    time: loc.times[pos / p],
                });
            }
        }
        Ok(Self {
            names,
            kinds,
            locations,
            scaling: Vec::new(),
        })
    }

    /// Offset-only panel (`P = 0`) aligned with `panel`.
    pub fn empty_like(panel: &ExcessPanel) -> Self {
        Self {
            names: Vec::new(),
            kinds: Vec::new(),
            locations: panel
                .locations()
                .iter()
                .map(|l| LocationCovariates {
                    location: l.location.clone(),
                    times: l.times.clone(),
                    values: Vec::new(),
                })
                .collect(),
            scaling: Vec::new(),
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[CovariateKind] {
        &self.kinds
    }

    pub fn locations(&self) -> &[LocationCovariates] {
        &self.locations
    }

    pub fn location(&self, s: usize) -> &LocationCovariates {
        &self.locations[s]
    }

    pub fn scaling(&self) -> &[Scaling] {
        &self.scaling
    }

    /// Covariate vector of entry `j` at location `s`.
    #[inline]
    pub fn row(&self, s: usize, j: usize) -> &[f64] {
        let p = self.names.len();
        &self.locations[s].values[j * p..(j + 1) * p]
    }

    pub fn is_aligned_with(&self, panel: &ExcessPanel) -> bool {
        self.locations.len() == panel.n_locations()
            && self
                .locations
                .iter()
                .zip(panel.locations())
                .all(|(c, e)| c.location == e.location && c.times == e.times)
    }

    pub(crate) fn check_aligned(&self, panel: &ExcessPanel) -> Result<()> {
        if self.is_aligned_with(panel) {
            Ok(())
        } else {
            Err(Error::Misaligned("covariate rows do not match excess entries".into()))
        }
    }
}

/// Rescales every covariate: local ones to `[0, 1]` pooled per location,
/// global ones to `[-1, 1]` pooled over all locations. Locations without
/// rows do not take part in the pooling.
pub fn scale_covariates(raw: &CovariatePanel) -> Result<CovariatePanel> {
    let p = raw.n_covariates();
    let mut out = raw.clone();
    out.scaling.clear();
    for c in 0..p {
        let name = &raw.names[c];
        match raw.kinds[c] {
            CovariateKind::Local => {
                for loc in out.locations.iter_mut() {
                    if loc.is_empty() {
                        continue;
                    }
                    let (min, max) = column_range(loc.values.iter().skip(c).step_by(p));
                    if !(max > min) {
                        return Err(Error::ConstantCovariate {
                            name: name.clone(),
                            location: Some(loc.location.clone()),
                        });
                    }
                    for v in loc.values.iter_mut().skip(c).step_by(p) {
                        *v = (*v - min) / (max - min);
                    }
                    out.scaling.push(Scaling {
                        covariate: name.clone(),
                        location: Some(loc.location.clone()),
                        min,
                        max,
                    });
                }
            }
            CovariateKind::Global => {
                let (min, max) = column_range(out.locations.iter().flat_map(|l| l.values.iter().skip(c).step_by(p)));
                if !(max > min) {
                    return Err(Error::ConstantCovariate {
                        name: name.clone(),
                        location: None,
                    });
                }
                for loc in out.locations.iter_mut() {
                    for v in loc.values.iter_mut().skip(c).step_by(p) {
                        *v = 2.0 * (*v - min) / (max - min) - 1.0;
                    }
                }
                out.scaling.push(Scaling {
                    covariate: name.clone(),
                    location: None,
                    min,
                    max,
                });
            }
        }
    }
    Ok(out)
}

fn column_range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Subsets and orders covariate records so that they match the excess panel
/// entry by entry. Every excess must have a record at the same location and
/// time.
pub fn align_panels(excesses: &ExcessPanel, covariates: &CovariatePanel) -> Result<CovariatePanel> {
    let p = covariates.n_covariates();
    let by_id: HashMap<&str, &LocationCovariates> =
        covariates.locations.iter().map(|l| (l.location.as_str(), l)).collect();
    let mut missing = Vec::new();
    let mut locations = Vec::with_capacity(excesses.n_locations());
    for loc in excesses.locations() {
        let source = by_id.get(loc.location.as_str());
        let mut values = Vec::with_capacity(loc.len() * p);
        for &t in &loc.times {
            match source.and_then(|c| c.times.binary_search(&t).ok().map(|j| (c, j))) {
                Some((c, j)) => values.extend_from_slice(&c.values[j * p..(j + 1) * p]),
                None => missing.push((loc.location.clone(), t)),
            }
        }
        locations.push(LocationCovariates {
            location: loc.location.clone(),
            times: loc.times.clone(),
            values,
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingCovariates(missing));
    }
    Ok(CovariatePanel {
        names: covariates.names.clone(),
        kinds: covariates.kinds.clone(),
        locations,
        scaling: covariates.scaling.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: &[f64]) -> RawSeries {
        RawSeries::new(
            "A",
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as TimeIndex + 1, v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn extract_one_to_hundred() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let ex = extract_excesses(&series(&values), 0.98, 1e-5).unwrap();
        assert!((ex.threshold - 98.02001).abs() < 1e-9);
        assert_eq!(ex.excesses.len(), 2);
        assert_eq!(ex.excesses[0].0, 99);
        assert_eq!(ex.excesses[1].0, 100);
        assert!((ex.excesses[0].1 - 0.97999).abs() < 1e-9);
        assert!((ex.excesses[1].1 - 1.97999).abs() < 1e-9);
    }

    #[test]
    fn extract_constant_series_is_empty_not_error() {
        let ex = extract_excesses(&series(&[4.0; 50]), 0.98, 1e-5).unwrap();
        assert!((ex.threshold - 4.00001).abs() < 1e-12);
        assert!(ex.is_empty());
    }

    #[test]
    fn extract_two_points() {
        let ex = extract_excesses(&series(&[0.0, 10.0]), 0.5, 1e-5).unwrap();
        assert!((ex.threshold - 5.00001).abs() < 1e-12);
        assert_eq!(ex.excesses.len(), 1);
        assert_eq!(ex.excesses[0].0, 2);
        assert!((ex.excesses[0].1 - 4.99999).abs() < 1e-12);
    }

    #[test]
    fn extract_rejects_bad_input() {
        let empty = RawSeries::new("E", vec![]).unwrap();
        assert!(matches!(
            extract_excesses(&empty, 0.98, 1e-5),
            Err(Error::EmptySeries(_))
        ));
        for level in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                extract_excesses(&series(&[1.0, 2.0]), level, 1e-5),
                Err(Error::QuantileLevel(_))
            ));
        }
    }

    #[test]
    fn raw_series_validation() {
        assert!(matches!(
            RawSeries::new("A", vec![(1, 1.0), (1, 2.0)]),
            Err(Error::NonIncreasingTime { time: 1, .. })
        ));
        assert!(matches!(
            RawSeries::new("A", vec![(1, 1.0), (2, f64::NAN)]),
            Err(Error::NonFinite { time: 2, .. })
        ));
    }

    fn cov_panel(kind: CovariateKind, locs: &[(&str, &[f64])]) -> CovariatePanel {
        CovariatePanel::new(
            vec!["x".into()],
            vec![kind],
            locs.iter()
                .map(|(id, vals)| {
                    LocationCovariates::new(
                        *id,
                        vals.iter()
                            .enumerate()
                            .map(|(i, &v)| (i as TimeIndex, vec![v]))
                            .collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn scale_local_and_global() {
        let local = scale_covariates(&cov_panel(CovariateKind::Local, &[("A", &[2.0, 4.0, 6.0])])).unwrap();
        assert_eq!(local.location(0).values(), &[0.0, 0.5, 1.0]);

        let global = scale_covariates(&cov_panel(CovariateKind::Global, &[("A", &[-3.0, 0.0, 3.0])])).unwrap();
        assert_eq!(global.location(0).values(), &[-1.0, 0.0, 1.0]);
        assert_eq!(global.scaling().len(), 1);
        assert_eq!(global.scaling()[0].location, None);
    }

    #[test]
    fn scale_pools_local_per_location_and_global_across() {
        let raw = &[("A", &[0.0, 1.0][..]), ("B", &[10.0, 30.0][..])];
        let local = scale_covariates(&cov_panel(CovariateKind::Local, raw)).unwrap();
        assert_eq!(local.location(0).values(), &[0.0, 1.0]);
        assert_eq!(local.location(1).values(), &[0.0, 1.0]);
        let global = scale_covariates(&cov_panel(CovariateKind::Global, raw)).unwrap();
        assert_eq!(global.location(0).values(), &[-1.0, -1.0 + 2.0 / 30.0]);
        assert_eq!(global.location(1).values()[1], 1.0);
    }

    #[test]
    fn scale_rejects_constant_covariate() {
        let err = scale_covariates(&cov_panel(CovariateKind::Local, &[("A", &[5.0, 5.0, 5.0])])).unwrap_err();
        assert!(matches!(err, Error::ConstantCovariate { ref name, .. } if name == "x"));
        assert!(err.to_string().contains("constant covariate"));
    }

    fn excess_panel(points: &[(&str, &[TimeIndex])]) -> ExcessPanel {
        ExcessPanel::new(
            points
                .iter()
                .map(|(id, ts)| LocationExcesses::new(*id, ts.iter().map(|&t| (t, 1.0)).collect()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn align_subsets_rows() {
        let ex = excess_panel(&[("A", &[3, 7])]);
        let cov = CovariatePanel::new(
            vec!["x".into()],
            vec![CovariateKind::Local],
            vec![LocationCovariates::new(
                "A",
                (1..=10).map(|t| (t, vec![t as f64 * 10.0])).collect(),
            )],
        )
        .unwrap();
        let aligned = align_panels(&ex, &cov).unwrap();
        assert!(aligned.is_aligned_with(&ex));
        assert_eq!(aligned.location(0).times, vec![3, 7]);
        assert_eq!(aligned.row(0, 0), &[30.0]);
        assert_eq!(aligned.row(0, 1), &[70.0]);
    }

    #[test]
    fn align_reports_missing_records() {
        let ex = excess_panel(&[("A", &[5]), ("B", &[1])]);
        let cov = CovariatePanel::new(
            vec!["x".into()],
            vec![CovariateKind::Local],
            vec![LocationCovariates::new("A", (1..=4).map(|t| (t, vec![0.0])).collect())],
        )
        .unwrap();
        match align_panels(&ex, &cov) {
            Err(Error::MissingCovariates(m)) => {
                assert_eq!(m, vec![("A".to_string(), 5), ("B".to_string(), 1)])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn align_with_zero_covariates() {
        let ex = excess_panel(&[("A", &[2, 4])]);
        let cov = CovariatePanel::new(
            vec![],
            vec![],
            vec![LocationCovariates::new("A", (1..=5).map(|t| (t, vec![])).collect())],
        )
        .unwrap();
        let aligned = align_panels(&ex, &cov).unwrap();
        assert_eq!(aligned.n_covariates(), 0);
        assert!(aligned.row(0, 1).is_empty());
        assert!(aligned.is_aligned_with(&ex));
        assert_eq!(CovariatePanel::empty_like(&ex), aligned);
    }

    #[test]
    fn excess_panel_validation() {
        assert!(matches!(ExcessPanel::new(vec![]), Err(Error::NoLocations)));
        let bad = LocationExcesses::new("A", vec![(1, 0.0)]);
        assert!(matches!(
            ExcessPanel::new(vec![bad]),
            Err(Error::NonPositiveExcess { .. })
        ));
        let dup = vec![
            LocationExcesses::new("A", vec![(1, 1.0)]),
            LocationExcesses::new("A", vec![(2, 1.0)]),
        ];
        assert!(matches!(ExcessPanel::new(dup), Err(Error::DuplicateLocation(_))));
    }

    proptest! {
        #[test]
        fn extraction_counts_and_positivity(values in prop::collection::vec(-50.0f64..50.0, 1..200), level in 0.01f64..0.99) {
            let s = series(&values);
            let ex = extract_excesses(&s, level, 1e-5).unwrap();
            let expected = values.iter().filter(|&&v| v > ex.threshold).count();
            prop_assert_eq!(ex.excesses.len(), expected);
            prop_assert!(ex.excesses.iter().all(|e| e.1 > 0.0));
        }

        #[test]
        fn scaling_is_idempotent(values in prop::collection::vec(-1e3f64..1e3, 2..60), global in any::<bool>()) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let kind = if global { CovariateKind::Global } else { CovariateKind::Local };
            let once = scale_covariates(&cov_panel(kind, &[("A", &values)])).unwrap();
            let twice = scale_covariates(&once).unwrap();
            for (a, b) in once.location(0).values().iter().zip(twice.location(0).values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let (lo, hi) = if global { (-1.0, 1.0) } else { (0.0, 1.0) };
            prop_assert!(once.location(0).values().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn preprocessing_commutes_with_location_permutation(
            a in prop::collection::vec(0.0f64..100.0, 3..40),
            b in prop::collection::vec(0.0f64..100.0, 3..40),
        ) {
            prop_assume!(a.iter().any(|&v| v != a[0]) && b.iter().any(|&v| v != b[0]));
            let sa = RawSeries::new("A", a.iter().enumerate().map(|(i, &v)| (i as TimeIndex, v)).collect()).unwrap();
            let sb = RawSeries::new("B", b.iter().enumerate().map(|(i, &v)| (i as TimeIndex, v)).collect()).unwrap();
            let fwd = ExcessPanel::extract(&[sa.clone(), sb.clone()], 0.9, 1e-5).unwrap();
            let rev = ExcessPanel::extract(&[sb, sa], 0.9, 1e-5).unwrap();
            prop_assert_eq!(fwd.location(0), rev.location(1));
            prop_assert_eq!(fwd.location(1), rev.location(0));

            for kind in [CovariateKind::Local, CovariateKind::Global] {
                let f = scale_covariates(&cov_panel(kind, &[("A", &a), ("B", &b)])).unwrap();
                let r = scale_covariates(&cov_panel(kind, &[("B", &b), ("A", &a)])).unwrap();
                prop_assert_eq!(f.location(0), r.location(1));
                prop_assert_eq!(f.location(1), r.location(0));
            }
        }
    }
}
