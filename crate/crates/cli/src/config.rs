//! Run configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simest::bench::LagScanConfig;
use simest::likelihood::{Method, MdnSettings};
use simest::models::{ModelConfig, Preprocessing};
use simest::rng::mix64;
use simest::sampler::McmcConfig;
use simest::{Interval, ParameterVector};

/// Problems found while reading or validating a configuration. These map to
/// exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {err}")]
    Parse { path: PathBuf, err: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub model: ModelBlock,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub method: MethodBlock,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub report: ReportBlock,
    #[serde(default)]
    pub lag_scan: Option<LagScanBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Written as `{"id": ..., "fixed": {...}, "free": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelBlock", into = "RawModelBlock")]
pub struct ModelBlock {
    pub config: ModelConfig,
    pub free: Vec<FreeParam>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelBlock {
    id: String,
    fixed: serde_json::Value,
    free: Vec<FreeParam>,
}

impl TryFrom<RawModelBlock> for ModelBlock {
    type Error = String;

    fn try_from(raw: RawModelBlock) -> Result<Self, String> {
        let doc = serde_json::json!({ "id": raw.id, "fixed": raw.fixed });
        let config = serde_json::from_value(doc).map_err(|e| format!("model `{}`: {e}", raw.id))?;
        Ok(Self { config, free: raw.free })
    }
}

impl From<ModelBlock> for RawModelBlock {
    fn from(m: ModelBlock) -> Self {
        let mut doc = serde_json::to_value(&m.config).expect("model configs serialize");
        let fixed = doc["fixed"].take();
        let id = doc["id"].as_str().unwrap_or_default().to_string();
        Self { id, fixed, free: m.free }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub name: String,
    pub bounds: [f64; 2],
    #[serde(default, rename = "true")]
    pub true_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataBlock {
    /// Length of the pseudo-empirical series.
    pub t_emp: usize,
    /// Overrides the model's default transform.
    pub preprocessing: Option<Preprocessing>,
    /// Observed series as CSV (one column per dimension, header row);
    /// relative to the config file. When absent the series is simulated at
    /// the true parameter values.
    pub path: Option<PathBuf>,
}

impl Default for DataBlock {
    fn default() -> Self {
        Self { t_emp: 1000, preprocessing: None, path: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationBlock {
    pub replications: usize,
    pub t_sim: usize,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self { replications: 100, t_sim: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Mdn,
    Kde,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Mdn => "mdn",
            MethodKind::Kde => "kde",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodBlock {
    #[serde(rename = "use")]
    pub kind: MethodKind,
    pub mdn: MdnSettings,
    pub kde: KdeSettings,
}

impl Default for MethodBlock {
    fn default() -> Self {
        Self { kind: MethodKind::Mdn, mdn: MdnSettings::default(), kde: KdeSettings::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeSettings {
    /// Leading observations of each replication left out of the pool.
    pub discard: usize,
}

/// Every stream is derived from `master` unless set explicitly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    pub data: Option<u64>,
    pub simulation: Option<u64>,
    pub mcmc: Option<u64>,
    pub train: Option<u64>,
}

impl Seeds {
    fn derive(&self, stream: u64) -> u64 {
        mix64(self.master ^ mix64(stream))
    }

    pub fn data(&self) -> u64 {
        self.data.unwrap_or_else(|| self.derive(1))
    }

    pub fn simulation(&self) -> u64 {
        self.simulation.unwrap_or_else(|| self.derive(2))
    }

    pub fn mcmc(&self) -> u64 {
        self.mcmc.unwrap_or_else(|| self.derive(3))
    }

    pub fn train(&self) -> u64 {
        self.train.unwrap_or_else(|| self.derive(4))
    }
}

/// Extra columns in the results tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportBlock {
    pub deltas: Vec<Delta>,
}

/// `after - before` of two posterior means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Delta {
    pub name: String,
    pub after: String,
    pub before: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagScanBlock {
    pub lags: Vec<usize>,
    /// Conditioning values, oldest first. Defaults to the tail of the
    /// pseudo-empirical series.
    #[serde(default)]
    pub window: Option<Vec<f64>>,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_grid() -> usize {
    2001
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    /// Also write the per-evaluation log, which includes wall-clock times.
    pub eval_log: bool,
}

/// Command-line adjustments applied on top of a loaded document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scale: Option<f64>,
    pub method: Option<MethodKind>,
    pub lags: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|err| ConfigError::Parse { path: path.to_path_buf(), err })?;
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.config.validate().map_err(|e| bad(format!("model: {e}")))?;
        if self.model.free.is_empty() {
            return Err(bad("model.free: at least one free parameter is required"));
        }
        for (i, p) in self.model.free.iter().enumerate() {
            let [lo, hi] = p.bounds;
            Interval::new(lo, hi).map_err(|e| bad(format!("model.free[{i}].bounds: {e}")))?;
            self.model.config.get_param(&p.name).map_err(|e| bad(format!("model.free[{i}].name: {e}")))?;
            if let Some(v) = p.true_value {
                if !(lo..=hi).contains(&v) {
                    return Err(bad(format!("model.free[{i}].true: {v} lies outside [{lo}, {hi}]")));
                }
            }
        }
        if self.data.t_emp < 2 {
            return Err(bad("data.t_emp must be at least 2"));
        }
        if self.simulation.replications == 0 || self.simulation.t_sim < 2 {
            return Err(bad("simulation: replications must be positive and t_sim at least 2"));
        }
        self.mcmc.validate().map_err(|e| bad(format!("mcmc: {e}")))?;
        self.method.mdn.train.validate().map_err(|e| bad(format!("method.mdn.train: {e}")))?;
        if self.method.mdn.lag == 0 {
            return Err(bad("method.mdn.lag must be positive"));
        }
        let names = self.names();
        for (i, d) in self.report.deltas.iter().enumerate() {
            if !names.contains(&d.after) || !names.contains(&d.before) {
                return Err(bad(format!("report.deltas[{i}]: unknown parameter")));
            }
        }
        if let Some(ls) = &self.lag_scan {
            if ls.lags.is_empty() || ls.lags.contains(&0) {
                return Err(bad("lag_scan.lags must be positive integers"));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(seed) = o.seed {
            self.seeds.master = seed;
        }
        if let Some(m) = o.method {
            self.method.kind = m;
        }
        if let Some(lags) = &o.lags {
            let block = self.lag_scan.get_or_insert(LagScanBlock { lags: vec![], window: None, grid_points: default_grid() });
            block.lags.clone_from(lags);
        }
        if let Some(k) = o.scale {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(bad("--scale must be at least 1"));
            }
            self.rescale(k);
        }
        self.validate()
    }

    /// Divides iterations, burn-in, replications and series lengths by `k`;
    /// break times move with the series length.
    pub fn rescale(&mut self, k: f64) {
        let div = |v: usize, min: usize| ((v as f64 / k).round() as usize).max(min);
        self.mcmc.iterations = div(self.mcmc.iterations, 2);
        self.mcmc.burn_in = div(self.mcmc.burn_in, 0).min(self.mcmc.iterations - 1);
        self.simulation.replications = div(self.simulation.replications, 1);
        self.simulation.t_sim = div(self.simulation.t_sim, 2);
        self.data.t_emp = div(self.data.t_emp, 2);
        self.model.config.rescale_time(1.0 / k);
    }

    pub fn names(&self) -> Vec<String> {
        self.model.free.iter().map(|p| p.name.clone()).collect()
    }

    pub fn bounds(&self) -> Vec<Interval> {
        self.model.free.iter().map(|p| Interval::new(p.bounds[0], p.bounds[1]).unwrap()).collect()
    }

    /// True values of the free parameters, if all are given.
    pub fn theta_true(&self) -> Option<Vec<f64>> {
        self.model.free.iter().map(|p| p.true_value).collect()
    }

    /// The model with the true values written into it.
    pub fn true_model(&self) -> Result<ModelConfig, ConfigError> {
        let theta = self.theta_true().ok_or_else(|| bad("model.free: every parameter needs a true value here"))?;
        let pv = ParameterVector::new(self.names(), theta, self.bounds()).map_err(|e| bad(e.to_string()))?;
        self.model.config.with_params(pv.names(), pv.values()).map_err(|e| bad(e.to_string()))
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.data.preprocessing.unwrap_or_else(|| self.model.config.default_preprocessing())
    }

    pub fn method(&self) -> Method {
        match self.method.kind {
            MethodKind::Mdn => Method::Mdn,
            MethodKind::Kde => Method::Kde,
        }
    }

    /// Network settings with the training seed filled in.
    pub fn mdn_settings(&self) -> MdnSettings {
        let mut s = self.method.mdn.clone();
        s.train.seed = self.seeds.train();
        s
    }

    pub fn mcmc_config(&self) -> McmcConfig {
        McmcConfig { seed: self.seeds.mcmc(), ..self.mcmc.clone() }
    }

    pub fn lag_scan_config(&self) -> Result<LagScanConfig, ConfigError> {
        let block = self.lag_scan.as_ref().ok_or_else(|| bad("lag_scan block (or --lags) is required"))?;
        Ok(LagScanConfig {
            model: self.true_model()?,
            replications: self.simulation.replications,
            sim_len: self.simulation.t_sim,
            base_seed: self.seeds.simulation(),
            lags: block.lags.clone(),
            mdn: self.mdn_settings(),
            grid_points: block.grid_points,
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "rw",
        "model": {
            "id": "random_walk_break",
            "fixed": {"d1": 0.4, "d2": 0.5, "sigma1": 1, "sigma2": 2, "tau": 700},
            "free": [{"name": "d1", "bounds": [0, 1], "true": 0.4}, {"name": "d2", "bounds": [0, 1], "true": 0.5}]
        }
    }"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_json(text, Path::new("x.json"))
    }

    #[test]
    fn defaults_fill_missing_blocks() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.data.t_emp, 1000);
        assert_eq!(c.simulation.replications, 100);
        assert_eq!(c.method.kind, MethodKind::Mdn);
        assert_eq!(c.method.mdn.lag, 3);
        assert_eq!(c.mcmc.iterations, 5000);
        assert_eq!(c.preprocessing(), Preprocessing::FirstDifference);
        assert_eq!(c.theta_true(), Some(vec![0.4, 0.5]));
    }

    #[test]
    fn missing_bounds_names_the_field() {
        let text = MINIMAL.replace(r#""bounds": [0, 1], "true": 0.4"#, r#""true": 0.4"#);
        let e = parse(&text).unwrap_err().to_string();
        assert!(e.contains("bounds"), "{e}");
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replacen(r#""name": "rw","#, r#""name": "rw", "colour": 1,"#, 1);
        assert!(parse(&text).unwrap_err().to_string().contains("colour"));
    }

    #[test]
    fn semantic_checks() {
        let text = MINIMAL.replace(r#""true": 0.5"#, r#""true": 1.5"#);
        assert!(parse(&text).unwrap_err().to_string().contains("outside"));
        let text = MINIMAL.replace(r#""name": "d2""#, r#""name": "d9""#);
        assert!(parse(&text).is_err());
    }

    #[test]
    fn scale_divides_budgets_and_break() {
        let mut c = parse(MINIMAL).unwrap();
        c.apply(&Overrides { scale: Some(10.0), ..Default::default() }).unwrap();
        assert_eq!((c.mcmc.iterations, c.mcmc.burn_in), (500, 150));
        assert_eq!((c.simulation.replications, c.simulation.t_sim, c.data.t_emp), (10, 100, 100));
        match &c.model.config {
            ModelConfig::RandomWalkBreak(rw) => assert_eq!(rw.tau, 70),
            _ => unreachable!(),
        }
    }

    #[test]
    fn seeds_derive_distinct_streams() {
        let s = Seeds::default();
        let all = [s.data(), s.simulation(), s.mcmc(), s.train()];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
        let fixed = Seeds { data: Some(7), ..Seeds::default() };
        assert_eq!(fixed.data(), 7);
        assert_eq!(fixed.mcmc(), s.mcmc());
    }
}
