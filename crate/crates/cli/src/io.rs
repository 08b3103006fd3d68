//! CSV, JSON and raw binary input/output for series and ensembles.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mzw_core::series::{ScalarSeries, TimeGrid};
use mzw_core::sim::{EmpiricalAcf, TrajectoryEnsemble};
use serde::Serialize;

/// Relative tolerance on time stamps when checking grid uniformity.
const GRID_RTOL: f64 = 1e-6;

/// Output encoding selected by `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Bin,
}

/// Parsed numeric table: header plus rows, with the source line of each row.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub lines: Vec<u64>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_table(&text, &path.display().to_string())
}

/// Parses a headed CSV of numbers; `source` names the input in error messages.
pub fn parse_table(text: &str, source: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("{source}: malformed header"))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        bail!("{source}: empty file (expected a header line and data rows)");
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            anyhow!("{source}:{line}: malformed row: {e}")
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .map_err(|_| anyhow!("{source}:{line}: column {}: cannot parse {cell:?} as a number", column_name(&header, col)))?;
            if !value.is_finite() {
                bail!("{source}:{line}: column {}: non-finite value {cell:?}", column_name(&header, col));
            }
            row.push(value);
        }
        rows.push(row);
        lines.push(line);
    }
    if rows.is_empty() {
        bail!("{source}: no data rows");
    }
    Ok(Table { header, rows, lines })
}

fn column_name(header: &[String], col: usize) -> String {
    match header.get(col) {
        Some(name) if !name.is_empty() => format!("{col} ({name})"),
        _ => col.to_string(),
    }
}

/// Uniform grid starting at zero described by a time column.
pub fn uniform_grid(times: &[f64], lines: &[u64], source: &str) -> Result<TimeGrid> {
    if times.len() < 2 {
        bail!("{source}: need at least two time points, found {}", times.len());
    }
    let dt = times[1] - times[0];
    if times[0].abs() > GRID_RTOL * dt.abs() {
        bail!("{source}:{}: time column must start at 0, found {}", lines[0], times[0]);
    }
    if !(dt > 0.0) {
        bail!("{source}:{}: time column must be strictly increasing", lines[1]);
    }
    for (k, &t) in times.iter().enumerate() {
        if (t - k as f64 * dt).abs() > GRID_RTOL * dt {
            bail!(
                "{source}:{}: non-uniform time column (t = {t}, expected {}); resample onto a uniform grid first",
                lines[k],
                k as f64 * dt
            );
        }
    }
    Ok(TimeGrid::new(dt, times.len() - 1)?)
}

/// Series from the first two columns `t,value` of a CSV file.
pub fn read_series(path: &Path) -> Result<ScalarSeries> {
    let table = read_table(path)?;
    let source = path.display().to_string();
    series_from_table(&table, &source)
}

pub fn series_from_table(table: &Table, source: &str) -> Result<ScalarSeries> {
    if table.header.len() < 2 {
        bail!("{source}: expected columns t,value");
    }
    for (row, line) in table.rows.iter().zip(&table.lines) {
        if row.len() < 2 {
            bail!("{source}:{line}: expected at least two columns");
        }
    }
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let grid = uniform_grid(&times, &table.lines, source)?;
    Ok(ScalarSeries::new(grid, table.rows.iter().map(|r| r[1]).collect())?)
}

/// Rejects `--dt` / `--steps` flags that disagree with a grid read from a file.
pub fn check_grid_flags(grid: &TimeGrid, dt: Option<f64>, steps: Option<usize>, source: &str) -> Result<()> {
    if let Some(dt) = dt {
        if (dt - grid.dt()).abs() > GRID_RTOL * dt.abs() {
            bail!("grid mismatch: --dt {dt} but {source} has dt = {}", grid.dt());
        }
    }
    if let Some(steps) = steps {
        if steps != grid.n_steps() {
            bail!("grid mismatch: --steps {steps} but {source} has {} steps", grid.n_steps());
        }
    }
    Ok(())
}

/// Columns of a trajectory file to read as realizations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSpec {
    /// Every column after the time column.
    All,
    /// Columns by header name or zero-based index.
    Listed(Vec<String>),
}

impl std::str::FromStr for ColumnSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(ColumnSpec::All);
        }
        let items: Vec<String> = s.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
        if items.is_empty() {
            return Err("empty column list".into());
        }
        Ok(ColumnSpec::Listed(items))
    }
}

/// Ensemble from a CSV with a time column followed by one column per realization.
pub fn ingest_trajectory(path: &Path, columns: &ColumnSpec, seed: u64) -> Result<TrajectoryEnsemble> {
    let table = read_table(path)?;
    ensemble_from_table(&table, columns, seed, &path.display().to_string())
}

pub fn ensemble_from_table(table: &Table, columns: &ColumnSpec, seed: u64, source: &str) -> Result<TrajectoryEnsemble> {
    let width = table.header.len();
    for (row, line) in table.rows.iter().zip(&table.lines) {
        if row.len() != width {
            bail!("{source}:{line}: expected {width} columns, found {}", row.len());
        }
    }
    let picked: Vec<usize> = match columns {
        ColumnSpec::All => (1..width).collect(),
        ColumnSpec::Listed(items) => items
            .iter()
            .map(|item| {
                table
                    .header
                    .iter()
                    .position(|h| h == item)
                    .or_else(|| item.parse::<usize>().ok().filter(|&i| i < width))
                    .ok_or_else(|| anyhow!("{source}: no column {item:?}"))
            })
            .collect::<Result<_>>()?,
    };
    if picked.is_empty() {
        bail!("{source}: no trajectory columns");
    }
    if picked.contains(&0) {
        bail!("{source}: column 0 is the time column");
    }
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let grid = uniform_grid(&times, &table.lines, source)?;
    let mut data = Vec::with_capacity(picked.len() * grid.len());
    for &c in &picked {
        data.extend(table.rows.iter().map(|r| r[c]));
    }
    Ok(TrajectoryEnsemble::new(grid, picked.len(), data, seed, "ingested")?)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn series_csv(series: &ScalarSeries, value_name: &str) -> String {
    let mut out = format!("t,{value_name}\n");
    for (k, v) in series.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", num(series.grid().t(k)), num(*v)));
    }
    out
}

pub fn acf_csv(est: &EmpiricalAcf) -> String {
    let mut out = String::from("t,value,se\n");
    for (k, v) in est.acf.values().iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", num(est.acf.grid().t(k)), num(*v), num(est.standard_error[k])));
    }
    out
}

pub fn ensemble_csv(ens: &TrajectoryEnsemble) -> String {
    let mut out = String::from("t");
    for m in 0..ens.rows() {
        out.push_str(&format!(",traj_{m}"));
    }
    out.push('\n');
    for k in 0..ens.grid().len() {
        out.push_str(&num(ens.grid().t(k)));
        for m in 0..ens.rows() {
            out.push(',');
            out.push_str(&num(ens.row(m)[k]));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SeriesJson<'a> {
    name: &'a str,
    dt: f64,
    n_steps: usize,
    values: &'a [f64],
}

#[derive(Serialize)]
struct EnsembleSidecar<'a> {
    dt: f64,
    n_steps: usize,
    #[serde(rename = "M")]
    m: usize,
    seed: u64,
    method: &'a str,
    layout: &'a str,
}

fn f64_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

/// Writes `stem.csv`, `stem.json` or `stem.bin` + `stem.json`; returns the written paths.
pub fn write_series(dir: &Path, stem: &str, series: &ScalarSeries, format: Format) -> Result<Vec<PathBuf>> {
    let grid = series.grid();
    match format {
        Format::Csv => write(dir, &format!("{stem}.csv"), series_csv(series, "value").as_bytes()),
        Format::Json => {
            let doc = SeriesJson { name: stem, dt: grid.dt(), n_steps: grid.n_steps(), values: series.values() };
            write(dir, &format!("{stem}.json"), serde_json::to_string_pretty(&doc)?.as_bytes())
        }
        Format::Bin => {
            let mut paths = write(dir, &format!("{stem}.bin"), &f64_bytes(series.values().iter().copied()))?;
            let doc = SeriesJson { name: stem, dt: grid.dt(), n_steps: grid.n_steps(), values: &[] };
            paths.extend(write(dir, &format!("{stem}.json"), serde_json::to_string_pretty(&doc)?.as_bytes())?);
            Ok(paths)
        }
    }
}

/// Ensemble as CSV (`t,traj_0,...`) or column-major little-endian f64 with a JSON sidecar.
pub fn write_ensemble(dir: &Path, stem: &str, ens: &TrajectoryEnsemble, format: Format) -> Result<Vec<PathBuf>> {
    let sidecar = EnsembleSidecar {
        dt: ens.grid().dt(),
        n_steps: ens.grid().n_steps(),
        m: ens.rows(),
        seed: ens.seed,
        method: &ens.method,
        layout: "column-major f64 little-endian, element (m, k) at index k * M + m",
    };
    match format {
        Format::Csv => write(dir, &format!("{stem}.csv"), ensemble_csv(ens).as_bytes()),
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                #[serde(flatten)]
                meta: EnsembleSidecar<'a>,
                rows: Vec<&'a [f64]>,
            }
            let rows = (0..ens.rows()).map(|m| ens.row(m)).collect();
            let doc = Doc { meta: sidecar, rows };
            write(dir, &format!("{stem}.json"), serde_json::to_string(&doc)?.as_bytes())
        }
        Format::Bin => {
            let width = ens.grid().len();
            let column_major = (0..width).flat_map(|k| (0..ens.rows()).map(move |m| ens.row(m)[k]));
            let mut paths = write(dir, &format!("{stem}.bin"), &f64_bytes(column_major))?;
            paths.extend(write(dir, &format!("{stem}.json"), serde_json::to_string_pretty(&sidecar)?.as_bytes())?);
            Ok(paths)
        }
    }
}

pub fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(vec![path])
}
