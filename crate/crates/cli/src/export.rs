//! CSV and JSON artifacts, written atomically, each with a metadata sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use simest::bench::LagScanResult;
use simest::likelihood::EvalRecord;
use simest::sampler::{PosteriorSample, TraceRow};
use simest::Series;

use crate::config::RunConfig;

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Header plus rows, all pre-formatted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner()?)
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn theta_header(names: &[String]) -> impl Iterator<Item = String> + '_ {
    names.iter().cloned()
}

pub fn series_table(series: &Series) -> Table {
    let mut t = Table::new(std::iter::once("t".to_string()).chain((1..=series.dim()).map(|j| format!("x{j}"))));
    for i in 0..series.len() {
        t.push(std::iter::once(i.to_string()).chain(series.row(i).iter().map(|&v| num(v))).collect());
    }
    t
}

/// Reads a series written by [`series_table`], or any CSV with a header row
/// and numeric columns (a leading `t` column is skipped).
pub fn read_series(path: &Path) -> Result<Series> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let skip = usize::from(r.headers()?.get(0) == Some("t"));
    let mut data = Vec::new();
    let mut dim = None;
    for rec in r.records() {
        let rec = rec?;
        let vals = rec.iter().skip(skip).map(|s| s.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: non-numeric value", path.display()))?;
        if *dim.get_or_insert(vals.len()) != vals.len() {
            anyhow::bail!("{}: ragged rows", path.display());
        }
        data.extend(vals);
    }
    Ok(Series::new(data, dim.unwrap_or(0), None)?)
}

pub fn eval_log_table(names: &[String], log: &[EvalRecord]) -> Table {
    let mut t = Table::new(theta_header(names).chain(["log_likelihood", "wall_ms", "status"].map(String::from)));
    for e in log {
        let mut row: Vec<String> = e.theta.iter().map(|&v| num(v)).collect();
        row.extend([num(e.log_likelihood), format!("{:.3}", e.wall_ms), e.status.as_str().to_string()]);
        t.push(row);
    }
    t
}

pub fn trace_table(names: &[String], trace: &[TraceRow]) -> Table {
    let head = ["restart", "s", "accepted", "n"].map(String::from);
    let mut t = Table::new(head.into_iter().chain(theta_header(names)).chain(["log_post".to_string()]));
    for r in trace {
        let mut row = vec![r.restart.to_string(), r.s.to_string(), u8::from(r.accepted).to_string(), r.n.to_string()];
        row.extend(r.theta.iter().map(|&v| num(v)));
        row.push(num(r.log_post));
        t.push(row);
    }
    t
}

pub fn posterior_table(sample: &PosteriorSample) -> Table {
    let mut t = Table::new(std::iter::once("restart".to_string()).chain(theta_header(&sample.names)));
    for r in 0..sample.restarts() {
        for member in sample.restart_values(r).chunks_exact(sample.dim) {
            t.push(std::iter::once(r.to_string()).chain(member.iter().map(|&v| num(v))).collect());
        }
    }
    t
}

pub fn curves_table(scan: &LagScanResult) -> Table {
    let mut t = Table::new(["L", "y", "density"]);
    for c in &scan.curves {
        if let Ok(f) = &c.density {
            for (y, d) in scan.grid.iter().zip(f) {
                t.push(vec![c.lag.to_string(), num(*y), num(*d)]);
            }
        }
    }
    t
}

pub fn distances_table(scan: &LagScanResult) -> Table {
    let mut t = Table::new(["L_a", "L_b", "tv"]);
    for (a, b, d) in &scan.distances {
        t.push(vec![a.to_string(), b.to_string(), num(*d)]);
    }
    for c in &scan.curves {
        if let Err(e) = &c.density {
            t.push(vec![c.lag.to_string(), String::new(), format!("failed: {e}")]);
        }
    }
    t
}

/// Provenance of one output file.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata<'a> {
    pub file: String,
    pub command: &'a str,
    pub config_sha256: String,
    pub seeds: SeedRecord,
    pub scale: f64,
    pub version: &'static str,
    pub config: &'a RunConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedRecord {
    pub master: u64,
    pub data: u64,
    pub simulation: u64,
    pub mcmc: u64,
    pub train: u64,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let doc = serde_json::to_vec(cfg).expect("configs serialize");
    Sha256::digest(&doc).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes artifacts for one command into a directory.
pub struct Artifacts<'a> {
    pub dir: PathBuf,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub scale: f64,
    pub written: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    pub fn new(dir: PathBuf, command: &'a str, config: &'a RunConfig, scale: f64) -> Self {
        Self { dir, command, config, scale, written: vec![] }
    }

    fn sidecar(&self, file: &str) -> Result<()> {
        let s = &self.config.seeds;
        let meta = Metadata {
            file: file.to_string(),
            command: self.command,
            config_sha256: config_hash(self.config),
            seeds: SeedRecord { master: s.master, data: s.data(), simulation: s.simulation(), mcmc: s.mcmc(), train: s.train() },
            scale: self.scale,
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
        };
        let mut bytes = serde_json::to_vec_pretty(&meta)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(format!("{file}.meta.json")), &bytes)
    }

    pub fn bytes(&mut self, file: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(file);
        write_atomic(&path, bytes)?;
        self.sidecar(file)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn table(&mut self, file: &str, table: &Table) -> Result<PathBuf> {
        self.bytes(file, &table.to_csv()?)
    }

    pub fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.bytes(file, &bytes)
    }
}
