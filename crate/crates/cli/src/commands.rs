//! The four subcommands, split into a pure part returning results and a
//! part writing artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use simest::bench::{aggregate_metrics, lag_scan, summarize, AggregateMetrics, LagScanResult, PosteriorSummary};
use simest::likelihood::{EstimationProblem, EvalRecord};
use simest::sampler::{run_chain, PosteriorSample};
use simest::Series;

use crate::config::{ConfigError, MethodKind, Overrides, RunConfig};
use crate::export::{
    curves_table, distances_table, eval_log_table, num, posterior_table, read_series, series_table, trace_table,
    Artifacts, Table,
};

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(overrides)?;
    Ok(cfg)
}

/// The observed series: read from `data.path`, or simulated at the true
/// parameters with the data seed.
pub fn empirical_series(cfg: &RunConfig) -> Result<Series> {
    match &cfg.data.path {
        Some(p) => read_series(p),
        None => Ok(cfg.true_model()?.simulate::<f64>(cfg.data.t_emp, cfg.seeds.data())?),
    }
}

pub fn cmd_simulate(cfg: &RunConfig, dir: PathBuf, scale: f64) -> Result<Vec<PathBuf>> {
    let series = empirical_series(cfg)?;
    let mut out = Artifacts::new(dir, "simulate", cfg, scale);
    out.table("series.csv", &series_table(&series))?;
    Ok(out.written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub method: MethodKind,
    #[serde(flatten)]
    pub summary: PosteriorSummary,
    /// Named differences of posterior means, with the true difference when
    /// known.
    pub deltas: BTreeMap<String, DeltaReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub posterior: f64,
    pub truth: Option<f64>,
}

pub struct EstimateOutcome {
    pub report: EstimateReport,
    pub sample: PosteriorSample,
    pub eval_log: Vec<EvalRecord>,
}

pub fn build_problem(cfg: &RunConfig, raw: &Series) -> Result<EstimationProblem> {
    let free = cfg.names().into_iter().zip(cfg.bounds()).collect();
    let mut p = EstimationProblem::new(cfg.model.config.clone(), free, raw, cfg.method())?;
    if let Some(pre) = cfg.data.preprocessing {
        p.set_preprocessing(raw, pre)?;
    }
    p.replications = cfg.simulation.replications;
    p.sim_len = cfg.simulation.t_sim;
    p.base_seed = cfg.seeds.simulation();
    p.mdn = cfg.mdn_settings();
    p.kde_discard = cfg.method.kde.discard;
    p.enable_eval_log();
    Ok(p)
}

fn report(cfg: &RunConfig, sample: &PosteriorSample) -> Result<EstimateReport> {
    let truth = cfg.theta_true();
    let summary = summarize(sample, truth.as_deref(), &cfg.bounds())?;
    let names = cfg.names();
    let idx = |n: &str| names.iter().position(|m| m == n).unwrap();
    let deltas = cfg
        .report
        .deltas
        .iter()
        .map(|d| {
            let posterior = summary.delta(&d.after, &d.before).unwrap();
            let truth = truth.as_ref().map(|t| t[idx(&d.after)] - t[idx(&d.before)]);
            (d.name.clone(), DeltaReport { posterior, truth })
        })
        .collect();
    Ok(EstimateReport { name: cfg.name.clone(), method: cfg.method.kind, summary, deltas })
}

/// Runs the sampler without writing anything. On failure the evaluations
/// made so far are returned alongside the error.
pub fn run_estimate(cfg: &RunConfig) -> Result<EstimateOutcome, (anyhow::Error, Vec<EvalRecord>)> {
    let raw = empirical_series(cfg).map_err(|e| (e, vec![]))?;
    let problem = build_problem(cfg, &raw).map_err(|e| (e, vec![]))?;
    let sample = match run_chain(&problem, &cfg.mcmc_config()) {
        Ok(s) => s,
        Err(e) => return Err((e.into(), problem.take_eval_log())),
    };
    let eval_log = problem.take_eval_log();
    let report = report(cfg, &sample).map_err(|e| (e, vec![]))?;
    Ok(EstimateOutcome { report, sample, eval_log })
}

pub fn cmd_estimate(cfg: &RunConfig, dir: PathBuf, scale: f64) -> Result<EstimateOutcome> {
    let mut out = Artifacts::new(dir, "estimate", cfg, scale);
    let names = cfg.names();
    match run_estimate(cfg) {
        Ok(o) => {
            out.table("trace.csv", &trace_table(&names, &o.sample.trace))?;
            out.table("posterior.csv", &posterior_table(&o.sample))?;
            if cfg.output.eval_log {
                out.table("eval_log.csv", &eval_log_table(&names, &o.eval_log))?;
            }
            out.json("summary.json", &o.report)?;
            Ok(o)
        }
        Err((e, log)) => {
            if !log.is_empty() {
                out.table("eval_log.partial.csv", &eval_log_table(&names, &log))?;
            }
            Err(e)
        }
    }
}

/// Conditioning window: configured, or the tail of the preprocessed
/// observed series.
pub fn scan_window(cfg: &RunConfig) -> Result<Vec<f64>> {
    let block = cfg.lag_scan.as_ref().ok_or_else(|| anyhow!("lag_scan block (or --lags) is required"))?;
    if let Some(w) = &block.window {
        return Ok(w.clone());
    }
    let max_lag = *block.lags.iter().max().unwrap();
    let series = cfg.preprocessing().apply(&empirical_series(cfg)?)?;
    if series.dim() != 1 || series.len() < max_lag {
        bail!("observed series is too short or not univariate for a window of {max_lag}");
    }
    Ok(series.as_slice()[series.len() - max_lag..].to_vec())
}

pub fn run_lag_scan(cfg: &RunConfig) -> Result<LagScanResult> {
    Ok(lag_scan(&cfg.lag_scan_config()?, &scan_window(cfg)?)?)
}

pub fn cmd_lag_scan(cfg: &RunConfig, dir: PathBuf, scale: f64) -> Result<LagScanResult> {
    let scan = run_lag_scan(cfg)?;
    let mut out = Artifacts::new(dir, "lag-scan", cfg, scale);
    out.table("curves.csv", &curves_table(&scan))?;
    out.table("distances.csv", &distances_table(&scan))?;
    let failed: Vec<usize> = scan.curves.iter().filter(|c| c.density.is_err()).map(|c| c.lag).collect();
    if !failed.is_empty() {
        bail!("training failed for lags {failed:?}");
    }
    Ok(scan)
}

/// A list of experiments, each estimated with every listed method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    /// Config paths relative to the suite file.
    pub experiments: Vec<PathBuf>,
    /// The first method is compared against the second.
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodKind>,
}

fn default_methods() -> Vec<MethodKind> {
    vec![MethodKind::Mdn, MethodKind::Kde]
}

impl Suite {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut s: Suite =
            serde_json::from_str(&text).map_err(|err| ConfigError::Parse { path: path.to_path_buf(), err })?;
        if s.methods.len() != 2 || s.methods[0] == s.methods[1] {
            return Err(ConfigError::Invalid("suite.methods must name two different methods".into()));
        }
        if s.experiments.is_empty() {
            return Err(ConfigError::Invalid("suite.experiments is empty".into()));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut s.experiments {
            if e.is_relative() {
                *e = base.join(&e);
            }
        }
        Ok(s)
    }
}

/// Per-experiment outcome: the two reports, or why they are missing.
pub struct EntryResult {
    pub config_path: PathBuf,
    pub name: String,
    pub config: Option<RunConfig>,
    pub reports: Result<(EstimateReport, EstimateReport), String>,
}

pub struct BenchmarkOutcome {
    pub entries: Vec<EntryResult>,
    pub metrics: Option<AggregateMetrics>,
}

fn load_report(path: &Path) -> Result<EstimateReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("no precomputed result at {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn run_entry(path: &Path, suite: &Suite, overrides: &Overrides, dir: &Path, precomputed: bool) -> EntryResult {
    let cfg = match load_config(path, overrides) {
        Ok(c) => c,
        Err(e) => {
            return EntryResult { config_path: path.into(), name: path.display().to_string(), config: None, reports: Err(e.to_string()) }
        }
    };
    let scale = overrides.scale.unwrap_or(1.0);
    let one = |kind: MethodKind| -> Result<EstimateReport> {
        let mut c = cfg.clone();
        c.method.kind = kind;
        let sub = dir.join(&c.name).join(kind.as_str());
        if precomputed {
            return load_report(&sub.join("summary.json"));
        }
        Ok(cmd_estimate(&c, sub, scale)?.report)
    };
    let reports = one(suite.methods[0])
        .and_then(|a| one(suite.methods[1]).map(|b| (a, b)))
        .map_err(|e| format!("{e:#}"));
    if let Err(e) = &reports {
        log::error!("{}: {e}", cfg.name);
    }
    EntryResult { config_path: path.into(), name: cfg.name.clone(), config: Some(cfg), reports }
}

pub fn run_benchmark(suite: &Suite, overrides: &Overrides, dir: &Path, precomputed: bool) -> BenchmarkOutcome {
    let entries: Vec<EntryResult> =
        suite.experiments.par_iter().map(|p| run_entry(p, suite, overrides, dir, precomputed)).collect();
    let pairs: Vec<(PosteriorSummary, PosteriorSummary)> = entries
        .iter()
        .filter_map(|e| e.reports.as_ref().ok())
        .filter(|(a, _)| a.summary.theta_true.is_some())
        .map(|(a, b)| (a.summary.clone(), b.summary.clone()))
        .collect();
    let metrics = aggregate_metrics(&pairs).ok();
    BenchmarkOutcome { entries, metrics }
}

/// One experiment in the layout of a results table: true values, then
/// posterior mean, standard deviation and spread across restarts for each
/// method, with any configured deltas and the loss as extra columns.
pub fn experiment_table(cfg: &RunConfig, reports: &[&EstimateReport]) -> Table {
    let names = cfg.names();
    let deltas: Vec<String> = cfg.report.deltas.iter().map(|d| d.name.clone()).collect();
    let header = ["method", "statistic"].map(String::from).into_iter().chain(names.iter().cloned()).chain(deltas.iter().cloned());
    let mut t = Table::new(header.chain(["LS".to_string()]));
    let blank = |n: usize| vec![String::new(); n];
    if let Some(truth) = cfg.theta_true() {
        let mut row = vec![String::new(), "theta_true".into()];
        row.extend(truth.iter().map(|&v| num(v)));
        row.extend(deltas.iter().map(|d| reports.first().and_then(|r| r.deltas[d].truth).map(num).unwrap_or_default()));
        row.push(String::new());
        t.push(row);
    }
    for r in reports {
        let s = &r.summary;
        let m = r.method.as_str().to_string();
        let mut mu = vec![m.clone(), "mu_posterior".into()];
        mu.extend(s.mu_posterior.iter().map(|&v| num(v)));
        mu.extend(deltas.iter().map(|d| num(r.deltas[d].posterior)));
        mu.push(String::new());
        t.push(mu);
        let mut sd = vec![m.clone(), "sigma_posterior".into()];
        sd.extend(s.sigma_posterior.iter().map(|&v| num(v)));
        sd.extend(blank(deltas.len() + 1));
        t.push(sd);
        let mut ss = vec![m.clone(), "sigma_sampling".into()];
        match &s.sigma_sampling {
            Some(v) => ss.extend(v.iter().map(|&x| num(x))),
            None => ss.extend(blank(names.len())),
        }
        ss.extend(blank(deltas.len() + 1));
        t.push(ss);
        let mut ls = vec![m, "LS".into()];
        ls.extend(blank(names.len() + deltas.len()));
        ls.push(s.ls.map(num).unwrap_or_default());
        t.push(ls);
    }
    t
}

pub fn pairs_table(suite: &Suite, entries: &[EntryResult]) -> Table {
    let (a, b) = (suite.methods[0].as_str(), suite.methods[1].as_str());
    let mut t = Table::new(["experiment".to_string(), format!("LS_{a}"), format!("LS_{b}"), "status".to_string()]);
    for e in entries {
        match &e.reports {
            Ok((ra, rb)) => {
                let ls = |r: &EstimateReport| r.summary.ls.map(num).unwrap_or_default();
                t.push(vec![e.name.clone(), ls(ra), ls(rb), "ok".into()]);
            }
            Err(msg) => t.push(vec![e.name.clone(), String::new(), String::new(), format!("failed: {msg}")]),
        }
    }
    t
}

pub fn metrics_table(suite: &Suite, m: &AggregateMetrics) -> Table {
    let (a, b) = (suite.methods[0].as_str(), suite.methods[1].as_str());
    let mut t = Table::new(["outcome", "percentage"]);
    t.push(vec![format!("LS_{a} < LS_{b}"), num(m.ls_better)]);
    t.push(vec![format!("|mu_{a} - theta_true| < |mu_{b} - theta_true|"), num(m.error_better)]);
    t.push(vec![format!("sigma_{a} < sigma_{b}"), num(m.std_better)]);
    t
}

pub fn cmd_benchmark(suite_path: &Path, overrides: &Overrides, out: Option<PathBuf>, precomputed: bool) -> Result<BenchmarkOutcome> {
    let suite = Suite::load(suite_path)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&suite.name));
    let outcome = run_benchmark(&suite, overrides, &dir, precomputed);
    let scale = overrides.scale.unwrap_or(1.0);
    // Suite-level files carry the first usable experiment config as provenance.
    let Some(first) = outcome.entries.iter().find_map(|e| e.config.as_ref()) else {
        bail!("no experiment in the suite could be loaded");
    };
    let mut files = Artifacts::new(dir, "benchmark", first, scale);
    for e in &outcome.entries {
        if let (Some(cfg), Ok((a, b))) = (&e.config, &e.reports) {
            let mut table_out = Artifacts::new(files.dir.clone(), "benchmark", cfg, scale);
            table_out.table(&format!("table_{}.csv", cfg.name), &experiment_table(cfg, &[a, b]))?;
        }
    }
    files.table("pairs.csv", &pairs_table(&suite, &outcome.entries))?;
    if let Some(m) = &outcome.metrics {
        files.table("summary.csv", &metrics_table(&suite, m))?;
    }
    let failed: Vec<&str> = outcome.entries.iter().filter(|e| e.reports.is_err()).map(|e| e.name.as_str()).collect();
    if !failed.is_empty() {
        bail!("{} of {} experiments failed: {}", failed.len(), outcome.entries.len(), failed.join(", "));
    }
    Ok(outcome)
}
