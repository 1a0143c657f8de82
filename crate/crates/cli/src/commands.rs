//! Subcommand implementations. Each returns the files it read and wrote so
//! that [`run`] can record them in the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;

use fembv_gpd::diagnostics::{
    event_sync, fit_residuals, ks_critical_value, ks_statistic_exp1, qq_data, regime_standard_errors,
};
use fembv_gpd::rng::derive;
use fembv_gpd::selection::Selection;
use fembv_gpd::synth::{gen_panel, CovariateSpec, Generator, SynthScenario};
use fembv_gpd::{
    align_panels, fit, grid_search, scale_covariates, CovariateKind, CovariatePanel, ExcessPanel, GridSpec,
    RegimeParameters, TimeIndex,
};

use crate::args::{Command, DataArgs, DiagnoseArgs, EsArgs, EsModeArg, ExtractArgs, FitArgs, SelectArgs, SimulateArgs};
use crate::fitfile::{FitFile, INTERCEPT};
use crate::io::{
    covariate_rows, csv_bytes, excess_rows, num, path_rows, read_covariates, read_event_table, read_excesses,
    read_paths, read_raw_series, write_atomic, InputError,
};
use crate::manifest::RunManifest;

/// The run produced no usable result for numerical reasons (exit code 3).
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

/// Process exit code for a failed run: 3 for numerical or optimization
/// failures, 2 for everything else (bad input, I/O).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<fembv_gpd::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

#[derive(Debug, Default)]
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
}

impl Outcome {
    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        write_atomic(&path, bytes)?;
        self.outputs.push(path);
        Ok(())
    }
}

/// Runs `command` and writes its manifest next to the outputs.
pub fn run(command: &Command) -> Result<()> {
    let start = Instant::now();
    let mut cmd = command.clone();
    cmd.absolutize()?;
    if let Command::Replay(r) = &cmd {
        let recorded = RunManifest::read(&r.manifest)?;
        let mut invocation = recorded.invocation;
        if matches!(invocation, Command::Replay(_)) {
            bail!(InputError("a manifest cannot record a replay".into()));
        }
        if let Some(out) = &r.out {
            invocation.set_out_dir(out.clone());
        }
        return run(&invocation);
    }
    let outcome = match &cmd {
        Command::Extract(a) => extract(a)?,
        Command::Fit(a) => fit_cmd(a)?,
        Command::Select(a) => select(a)?,
        Command::Diagnose(a) => diagnose(a)?,
        Command::Es(a) => es(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Replay(_) => unreachable!(),
    };
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        format_version: crate::fitfile::FORMAT_VERSION,
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        invocation: cmd.clone(),
    };
    manifest.write(cmd.out_dir())?;
    Ok(())
}

/// Excesses plus aligned, scaled covariates.
pub fn load_data(d: &DataArgs) -> Result<(ExcessPanel, CovariatePanel)> {
    let panel = read_excesses(&d.excesses)?;
    let covs = match &d.covariates {
        Some(path) => {
            let raw = read_covariates(path, &d.global)?;
            if raw.names().iter().any(|n| n == INTERCEPT) {
                bail!(InputError(format!("covariate name '{INTERCEPT}' is reserved")));
            }
            scale_covariates(&align_panels(&panel, &raw)?)?
        }
        None => {
            if !d.global.is_empty() {
                bail!(InputError("--global given without --covariates".into()));
            }
            CovariatePanel::empty_like(&panel)
        }
    };
    Ok((panel, covs))
}

fn data_inputs(d: &DataArgs) -> Vec<PathBuf> {
    std::iter::once(d.excesses.clone())
        .chain(d.covariates.clone())
        .collect()
}

fn extract(a: &ExtractArgs) -> Result<Outcome> {
    let series = read_raw_series(&a.input)?;
    let panel = ExcessPanel::extract(&series, a.quantile, a.epsilon)?;
    let mut out = Outcome {
        inputs: vec![a.input.clone()],
        ..Outcome::default()
    };
    out.write(
        a.out.join("excesses.csv"),
        &csv_bytes(&["location", "time", "excess"], excess_rows(&panel))?,
    )?;
    let thresholds = panel.locations().iter().map(|l| {
        vec![
            l.location.clone(),
            l.threshold.map(num).unwrap_or_default(),
            l.quantile_level.map(num).unwrap_or_default(),
        ]
    });
    out.write(
        a.out.join("thresholds.csv"),
        &csv_bytes(&["location", "threshold", "quantile_level"], thresholds)?,
    )?;
    Ok(out)
}

fn write_fit(
    out: &mut Outcome,
    dir: &Path,
    result: &fembv_gpd::FitResult,
    panel: &ExcessPanel,
    covs: &CovariatePanel,
) -> Result<()> {
    let file = FitFile::from_fit(result, panel, covs);
    out.write(dir.join("fit.json"), &file.to_json()?)?;
    out.write(
        dir.join("paths.csv"),
        &csv_bytes(&["location", "time", "regime"], path_rows(panel, &result.paths))?,
    )?;
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<Outcome> {
    let (panel, covs) = load_data(&a.data)?;
    let config = a.optimizer.model_config(a.k, a.c, a.lambda);
    let result = fit(&panel, &covs, &config)?;
    let mut out = Outcome {
        inputs: data_inputs(&a.data),
        seed: Some(config.seed),
        ..Outcome::default()
    };
    write_fit(&mut out, &a.out, &result, &panel, &covs)?;
    Ok(out)
}

fn selection_rows(sel: &Selection) -> Vec<Vec<String>> {
    sel.records
        .iter()
        .map(|r| {
            vec![
                r.config.n_regimes.to_string(),
                r.config.switch_budget.to_string(),
                num(r.config.lambda),
                num(r.nll),
                num(r.penalized_nll),
                r.n.to_string(),
                r.p.to_string(),
                num(r.aicc),
                r.converged.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect()
}

fn select(a: &SelectArgs) -> Result<Outcome> {
    let (panel, covs) = load_data(&a.data)?;
    let grid = GridSpec {
        n_regimes: a.k_grid.clone(),
        switch_budgets: a.c_grid.clone(),
        lambdas: a.lambda_grid.clone(),
    };
    let base = a.optimizer.model_config(1, 0, 0.0);
    let sel = grid_search(&panel, &covs, &grid, &base)?;
    let mut out = Outcome {
        inputs: data_inputs(&a.data),
        seed: Some(base.seed),
        ..Outcome::default()
    };
    out.write(
        a.out.join("selection.csv"),
        &csv_bytes(
            &[
                "K",
                "C",
                "lambda",
                "nll",
                "penalized_nll",
                "n",
                "p",
                "aicc",
                "converged",
                "seed",
            ],
            selection_rows(&sel),
        )?,
    )?;
    let Some(best) = sel.best_fit() else {
        let reasons: Vec<String> = sel.records.iter().filter_map(|r| r.error.clone()).collect();
        bail!(NumericalFailure(format!(
            "no grid cell produced a usable fit: {}",
            reasons.join("; ")
        )));
    };
    write_fit(&mut out, &a.out.join("best"), best, &panel, &covs)?;
    Ok(out)
}

#[derive(Serialize)]
struct DiagnosticSummary {
    n: usize,
    ks_statistic: f64,
    ks_critical_value_01: f64,
    qq_level: f64,
    qq_n_boot: usize,
    qq_fraction_inside: f64,
}

fn diagnose(a: &DiagnoseArgs) -> Result<Outcome> {
    let bytes = std::fs::read(&a.fit).map_err(|e| InputError(format!("cannot read {}: {e}", a.fit.display())))?;
    let file = FitFile::from_json(&bytes)?;
    let mut data = a.data.clone();
    if data.global.is_empty() {
        data.global = file.global_names();
    }
    let (panel, covs) = load_data(&data)?;
    if covs.names() != file.covariate_names().as_slice() {
        bail!(InputError(format!(
            "covariates {:?} do not match the fit's {:?}",
            covs.names(),
            file.covariate_names()
        )));
    }
    let paths_file = match &a.paths {
        Some(p) => p.clone(),
        None => a.fit.parent().unwrap_or(Path::new(".")).join("paths.csv"),
    };
    let paths = read_paths(&paths_file, &panel, file.regimes.len())?;
    let result = file.to_fit(paths)?;

    let residuals = fit_residuals(&result, &panel, &covs)?;
    let mut rng = derive(a.seed, &[0x51]);
    let qq = qq_data(&residuals, a.n_boot, a.level, &mut rng)?;

    let mut out = Outcome {
        inputs: {
            let mut v = vec![a.fit.clone(), paths_file];
            v.extend(data_inputs(&a.data));
            v
        },
        seed: Some(a.seed),
        ..Outcome::default()
    };
    let qq_rows = (0..qq.len()).map(|i| {
        vec![
            num(qq.theoretical[i]),
            num(qq.empirical[i]),
            num(qq.band_lo[i]),
            num(qq.band_hi[i]),
        ]
    });
    out.write(
        a.out.join("qq.csv"),
        &csv_bytes(&["theoretical", "empirical", "band_lo", "band_hi"], qq_rows)?,
    )?;

    let coefficient_names: Vec<String> = ["xi", "sigma"]
        .iter()
        .flat_map(|part| {
            std::iter::once(INTERCEPT.to_string())
                .chain(covs.names().iter().cloned())
                .map(move |c| format!("{part}:{c}"))
        })
        .collect();
    let mut se_rows = Vec::new();
    for k in 0..result.theta.n_regimes() {
        // A regime fitted on the edge of the feasible set has no two-sided
        // neighbourhood; flag it instead of failing the whole report.
        let se = match regime_standard_errors(&result, &panel, &covs, k) {
            Ok(r) => r.standard_errors.ok_or("NPD"),
            Err(fembv_gpd::Error::HessianInfeasible { .. }) => {
                log::warn!(
                    "regime {}: fitted on the constraint boundary, no standard errors",
                    k + 1
                );
                Err("infeasible")
            }
            Err(e) => return Err(e.into()),
        };
        for (i, name) in coefficient_names.iter().enumerate() {
            let value = match &se {
                Ok(se) => num(se[i]),
                Err(flag) => flag.to_string(),
            };
            se_rows.push(vec![(k + 1).to_string(), name.clone(), value]);
        }
    }
    out.write(
        a.out.join("stderr.csv"),
        &csv_bytes(&["regime", "coefficient", "se_or_flag"], se_rows)?,
    )?;

    let summary = DiagnosticSummary {
        n: residuals.len(),
        ks_statistic: ks_statistic_exp1(&residuals),
        ks_critical_value_01: ks_critical_value(residuals.len(), 0.01),
        qq_level: a.level,
        qq_n_boot: a.n_boot,
        qq_fraction_inside: qq.fraction_inside(),
    };
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    out.write(a.out.join("diagnostics.json"), &bytes)?;
    Ok(out)
}

fn es(a: &EsArgs) -> Result<Outcome> {
    let (column, groups) = read_event_table(&a.input)?;
    let series: Vec<(String, Vec<TimeIndex>)> = match (a.mode, column.as_str()) {
        (EsModeArg::Stationary, "regime" | "excess") => groups
            .into_iter()
            .map(|(loc, rows)| (loc, rows.into_iter().map(|(t, _)| t).collect()))
            .collect(),
        (EsModeArg::Cluster(k), "regime") => {
            let wanted = k.to_string();
            groups
                .into_iter()
                .map(|(loc, rows)| {
                    let times = rows.into_iter().filter(|(_, r)| *r == wanted).map(|(t, _)| t).collect();
                    (loc, times)
                })
                .collect()
        }
        (EsModeArg::Cluster(_), _) => bail!(InputError(format!(
            "cluster mode needs a paths file (location,time,regime), got column '{column}'"
        ))),
        _ => bail!(InputError(format!("unexpected third column '{column}'"))),
    };
    let matrix = event_sync(&series, a.tau_max, a.mode.to_mode())?;
    let mut header = vec!["location".to_string()];
    header.extend(matrix.locations.iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..matrix.len()).map(|i| {
        let mut row = vec![matrix.locations[i].clone()];
        row.extend((0..matrix.len()).map(|j| num(matrix.get(i, j))));
        row
    });
    let mut out = Outcome {
        inputs: vec![a.input.clone()],
        ..Outcome::default()
    };
    out.write(a.out.join("es.csv"), &csv_bytes(&header_refs, rows)?)?;
    Ok(out)
}

/// Scenario described by the `simulate` flags.
pub fn scenario_from_args(a: &SimulateArgs) -> Result<SynthScenario> {
    if let Some(path) = &a.scenario {
        let bytes = std::fs::read(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?;
        return serde_json::from_slice(&bytes)
            .map_err(|e| anyhow!(InputError(format!("cannot parse scenario {}: {e}", path.display()))));
    }
    let mut s = SynthScenario::recovery(a.seed);
    s.n_locations = a.locations;
    s.length = a.length;
    s.switches_per_location = a.switches;
    if a.noise_covariates > 0 {
        let mut regimes = s.theta.regimes().to_vec();
        for r in &mut regimes {
            r.xi.extend(vec![0.0; a.noise_covariates]);
            r.sigma.extend(vec![0.0; a.noise_covariates]);
        }
        s.theta = RegimeParameters::new(regimes)?;
        for q in 0..a.noise_covariates {
            s.covariates.push(CovariateSpec {
                name: format!("noise{}", q + 1),
                kind: CovariateKind::Local,
                generator: Generator::Uniform { lo: 0.0, hi: 1.0 },
            });
        }
    }
    Ok(s)
}

fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let scenario = scenario_from_args(a)?;
    let data = gen_panel(&scenario)?;
    let mut out = Outcome {
        inputs: a.scenario.iter().cloned().collect(),
        seed: Some(scenario.seed),
        ..Outcome::default()
    };
    out.write(
        a.out.join("excesses.csv"),
        &csv_bytes(&["location", "time", "excess"], excess_rows(&data.excesses))?,
    )?;
    let mut header = vec!["location".to_string(), "time".to_string()];
    header.extend(data.raw_covariates.names().iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write(
        a.out.join("covariates.csv"),
        &csv_bytes(&header_refs, covariate_rows(&data.raw_covariates))?,
    )?;
    out.write(
        a.out.join("truth_paths.csv"),
        &csv_bytes(&["location", "time", "regime"], path_rows(&data.excesses, &data.truth))?,
    )?;
    let mut bytes = serde_json::to_vec_pretty(&scenario)?;
    bytes.push(b'\n');
    out.write(a.out.join("scenario.json"), &bytes)?;
    Ok(out)
}
