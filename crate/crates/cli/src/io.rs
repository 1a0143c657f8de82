//! CSV readers and writers for the on-disk formats.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fembv_gpd::{
    CovariateKind, CovariatePanel, ExcessPanel, LocationCovariates, LocationExcesses, RawSeries, SwitchingPath,
    TimeIndex,
};

/// Input problem that is not a numerical failure (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: String) -> anyhow::Error {
    anyhow!(InputError(msg))
}

/// Parsed CSV rows with their line numbers.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path, expected_prefix: &[&str]) -> Result<Table> {
    let file = fs::File::open(path).map_err(|e| input_error(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| input_error(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.len() < expected_prefix.len() || header.iter().zip(expected_prefix).any(|(h, e)| h != e) {
        bail!(InputError(format!(
            "{}: expected header starting with '{}', found '{}'",
            path.display(),
            expected_prefix.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            input_error(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, record));
    }
    Ok(Table {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

impl Table {
    fn field<T: std::str::FromStr>(&self, line: u64, record: &csv::StringRecord, i: usize) -> Result<T> {
        let raw = record.get(i).unwrap_or("").trim();
        raw.parse().map_err(|_| {
            input_error(format!(
                "{}: line {line}: cannot parse {} value '{raw}'",
                self.path.display(),
                self.header[i]
            ))
        })
    }
}

/// Groups `(location, item)` pairs by location in order of first appearance.
fn group<T>(items: impl IntoIterator<Item = (String, T)>) -> Vec<(String, Vec<T>)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<(String, Vec<T>)> = Vec::new();
    for (loc, item) in items {
        let i = *index.entry(loc.clone()).or_insert_with(|| {
            out.push((loc, Vec::new()));
            out.len() - 1
        });
        out[i].1.push(item);
    }
    out
}

pub fn read_raw_series(path: &Path) -> Result<Vec<RawSeries>> {
    let table = read_table(path, &["location", "time", "value"])?;
    let mut items = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let t: TimeIndex = table.field(*line, rec, 1)?;
        let v: f64 = table.field(*line, rec, 2)?;
        items.push((rec[0].trim().to_string(), (t, v)));
    }
    group(items)
        .into_iter()
        .map(|(loc, obs)| RawSeries::new(loc, obs).map_err(anyhow::Error::from))
        .collect()
}

pub fn read_excesses(path: &Path) -> Result<ExcessPanel> {
    let table = read_table(path, &["location", "time", "excess"])?;
    let mut items = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let t: TimeIndex = table.field(*line, rec, 1)?;
        let y: f64 = table.field(*line, rec, 2)?;
        items.push((rec[0].trim().to_string(), (t, y)));
    }
    let locations = group(items)
        .into_iter()
        .map(|(loc, pts)| LocationExcesses::new(loc, pts))
        .collect();
    Ok(ExcessPanel::new(locations)?)
}

/// Reads `location,time,<names...>`; covariates listed in `global` are
/// marked global, the rest local.
pub fn read_covariates(path: &Path, global: &[String]) -> Result<CovariatePanel> {
    let table = read_table(path, &["location", "time"])?;
    let names: Vec<String> = table.header[2..].to_vec();
    for g in global {
        if !names.contains(g) {
            bail!(InputError(format!(
                "global covariate '{g}' not found in {}",
                path.display()
            )));
        }
    }
    let kinds = names
        .iter()
        .map(|n| {
            if global.contains(n) {
                CovariateKind::Global
            } else {
                CovariateKind::Local
            }
        })
        .collect();
    let mut items = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let t: TimeIndex = table.field(*line, rec, 1)?;
        let row = (2..table.header.len())
            .map(|i| table.field(*line, rec, i))
            .collect::<Result<Vec<f64>>>()?;
        items.push((rec[0].trim().to_string(), (t, row)));
    }
    let locations = group(items)
        .into_iter()
        .map(|(loc, rows)| LocationCovariates::new(loc, rows))
        .collect();
    Ok(CovariatePanel::new(names, kinds, locations)?)
}

/// Reads `location,time,regime` (regimes numbered from 1) and checks that the
/// rows match `panel` entry for entry.
pub fn read_paths(path: &Path, panel: &ExcessPanel, n_regimes: usize) -> Result<SwitchingPath> {
    let table = read_table(path, &["location", "time", "regime"])?;
    let mut labels: Vec<Vec<usize>> = panel.locations().iter().map(|l| Vec::with_capacity(l.len())).collect();
    for (line, rec) in &table.rows {
        let loc = rec[0].trim();
        let t: TimeIndex = table.field(*line, rec, 1)?;
        let r: usize = table.field(*line, rec, 2)?;
        let s = panel
            .index_of(loc)
            .ok_or_else(|| input_error(format!("{}: line {line}: unknown location {loc}", path.display())))?;
        let j = labels[s].len();
        let expected = panel.location(s).times.get(j).copied();
        if expected != Some(t) {
            bail!(InputError(format!(
                "{}: line {line}: time {t} does not match the excess panel",
                path.display()
            )));
        }
        if r == 0 || r > n_regimes {
            bail!(InputError(format!(
                "{}: line {line}: regime {r} out of range",
                path.display()
            )));
        }
        labels[s].push(r - 1);
    }
    Ok(SwitchingPath::new(labels, n_regimes)?)
}

/// `(time, third field)` rows per location, in file order of locations.
pub type EventGroups = Vec<(String, Vec<(TimeIndex, String)>)>;

/// Rows of a three-column `location,time,<column>` file grouped by location,
/// with the third field kept as text. Returns the third column's name.
pub fn read_event_table(path: &Path) -> Result<(String, EventGroups)> {
    let table = read_table(path, &["location", "time"])?;
    if table.header.len() != 3 {
        bail!(InputError(format!(
            "{}: expected three columns (location,time,excess|regime)",
            path.display()
        )));
    }
    let mut items = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let t: TimeIndex = table.field(*line, rec, 1)?;
        items.push((rec[0].trim().to_string(), (t, rec[2].trim().to_string())));
    }
    Ok((table.header[2].clone(), group(items)))
}

/// Writes `contents` to `path` through a temporary sibling and a rename, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("bad output path {}", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Builds CSV text from a header and rows of preformatted fields.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())?;
    }
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn excess_rows(panel: &ExcessPanel) -> Vec<Vec<String>> {
    panel
        .locations()
        .iter()
        .flat_map(|l| {
            l.times
                .iter()
                .zip(&l.excesses)
                .map(move |(t, y)| vec![l.location.clone(), t.to_string(), num(*y)])
        })
        .collect()
}

pub fn path_rows(panel: &ExcessPanel, paths: &SwitchingPath) -> Vec<Vec<String>> {
    panel
        .locations()
        .iter()
        .enumerate()
        .flat_map(|(s, l)| {
            l.times
                .iter()
                .zip(paths.labels(s))
                .map(move |(t, r)| vec![l.location.clone(), t.to_string(), (r + 1).to_string()])
        })
        .collect()
}

pub fn covariate_rows(covs: &CovariatePanel) -> Vec<Vec<String>> {
    let p = covs.n_covariates();
    covs.locations()
        .iter()
        .flat_map(|l| {
            l.times.iter().enumerate().map(move |(j, t)| {
                let mut row = vec![l.location.clone(), t.to_string()];
                row.extend(l.values()[j * p..(j + 1) * p].iter().map(|v| num(*v)));
                row
            })
        })
        .collect()
}
