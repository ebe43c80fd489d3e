//! Maps a candidate parameter vector to a log posterior by simulating an
//! ensemble, fitting a density estimator to it and scoring the empirical
//! series.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kde::kde_log_likelihood;
use crate::mdn::{mdn_log_likelihood, train, MdnArchitecture, TrainConfig};
use crate::models::{generate_ensemble, ModelConfig, Preprocessing};
use crate::params::{Interval, ParameterVector};
use crate::real::Real;
use crate::rng::mix64;
use crate::series::{Ensemble, TimeSeriesMatrix};
use crate::window::build_windows;

/// An unnormalized log density over a box of parameters.
pub trait LogDensity: Sync {
    fn names(&self) -> &[String];

    fn bounds(&self) -> &[Interval];

    /// Log density at `theta`; negative infinity outside the support.
    fn log_density(&self, theta: &[f64]) -> Result<f64>;

    fn dim(&self) -> usize {
        self.bounds().len()
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(self.bounds()).all(|(&v, b)| b.contains(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mdn,
    Kde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

/// How the network's initialization, shuffling and noise seed is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSeedPolicy {
    /// The same seed for every candidate, so training randomness is held
    /// fixed across the parameter space like the simulation noise is.
    Common,
    /// A seed hashed from the base seed and the candidate's values.
    PerTheta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdnSettings {
    pub lag: usize,
    pub hidden: Vec<usize>,
    pub components: usize,
    pub train: TrainConfig,
    pub precision: Precision,
    pub seed_policy: TrainSeedPolicy,
}

impl Default for MdnSettings {
    fn default() -> Self {
        Self {
            lag: 3,
            hidden: vec![32, 32, 32],
            components: 16,
            train: TrainConfig::default(),
            precision: Precision::F32,
            seed_policy: TrainSeedPolicy::Common,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    Cached,
    OutOfSupport,
    SimulationDiverged,
    TrainingDiverged,
    DegenerateSample,
}

impl EvalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Cached => "cached",
            EvalStatus::OutOfSupport => "out_of_support",
            EvalStatus::SimulationDiverged => "simulation_diverged",
            EvalStatus::TrainingDiverged => "training_diverged",
            EvalStatus::DegenerateSample => "degenerate_sample",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub wall_ms: f64,
    pub status: EvalStatus,
}

/// Everything needed to turn a candidate into a log posterior.
#[derive(Debug)]
pub struct EstimationProblem {
    pub model: ModelConfig,
    names: Vec<String>,
    bounds: Vec<Interval>,
    /// Empirical series after preprocessing.
    empirical: TimeSeriesMatrix<f64>,
    pub preprocessing: Preprocessing,
    pub method: Method,
    pub replications: usize,
    /// Length of each simulated series before preprocessing.
    pub sim_len: usize,
    /// Seed of every candidate's ensemble (common random numbers).
    pub base_seed: u64,
    pub mdn: MdnSettings,
    /// Leading observations of each replication left out of the KDE pool.
    pub kde_discard: usize,
    cache: Option<Mutex<HashMap<String, f64>>>,
    eval_log: Option<Mutex<Vec<EvalRecord>>>,
}

impl EstimationProblem {
    /// `empirical` is the raw observed series; it is preprocessed with the
    /// model's default transform, as are all simulated replications.
    pub fn new(
        model: ModelConfig,
        free: Vec<(String, Interval)>,
        empirical: &TimeSeriesMatrix<f64>,
        method: Method,
    ) -> Result<Self> {
        model.validate()?;
        if free.is_empty() {
            return Err(invalid("at least one free parameter is required"));
        }
        let (names, bounds): (Vec<_>, Vec<_>) = free.into_iter().unzip();
        for n in &names {
            model.get_param(n)?;
        }
        let preprocessing = model.default_preprocessing();
        let empirical = preprocessing.apply(empirical)?;
        let sim_len = empirical.len() + usize::from(preprocessing == Preprocessing::FirstDifference);
        Ok(Self {
            model,
            names,
            bounds,
            empirical,
            preprocessing,
            method,
            replications: 100,
            sim_len,
            base_seed: 0,
            mdn: MdnSettings::default(),
            kde_discard: 0,
            cache: None,
            eval_log: None,
        })
    }

    /// Overrides the transform chosen from the model and re-applies it to the
    /// raw empirical series.
    pub fn set_preprocessing(&mut self, raw_empirical: &TimeSeriesMatrix<f64>, p: Preprocessing) -> Result<()> {
        self.empirical = p.apply(raw_empirical)?;
        self.preprocessing = p;
        Ok(())
    }

    /// Remembers log likelihoods by parameter value (12 significant digits).
    pub fn enable_cache(&mut self) {
        self.cache = Some(Mutex::new(HashMap::new()));
    }

    pub fn enable_eval_log(&mut self) {
        self.eval_log = Some(Mutex::new(Vec::new()));
    }

    pub fn take_eval_log(&self) -> Vec<EvalRecord> {
        self.eval_log.as_ref().map(|l| std::mem::take(&mut *l.lock().unwrap())).unwrap_or_default()
    }

    pub fn empirical(&self) -> &TimeSeriesMatrix<f64> {
        &self.empirical
    }

    /// Log of the uniform prior density on the box.
    pub fn log_prior(&self) -> f64 {
        -self.bounds.iter().map(|b| b.width().ln()).sum::<f64>()
    }

    fn cache_key(theta: &[f64]) -> String {
        theta.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(",")
    }

    /// Seed used to train the network at `theta`.
    pub fn training_seed(&self, theta: &[f64]) -> u64 {
        let base = mix64(self.base_seed ^ self.mdn.train.seed.rotate_left(32));
        match self.mdn.seed_policy {
            TrainSeedPolicy::Common => base,
            TrainSeedPolicy::PerTheta => theta.iter().fold(base, |h, v| mix64(h ^ v.to_bits())),
        }
    }

    /// The preprocessed ensemble simulated at `theta`.
    pub fn simulate(&self, theta: &[f64]) -> Result<Ensemble<f64>> {
        let pv = ParameterVector::new(self.names.clone(), theta.to_vec(), self.bounds.clone())?;
        let ens = generate_ensemble::<f64>(&self.model, &pv, self.replications, self.sim_len, self.base_seed)?;
        ens.map(|s| self.preprocessing.apply(s))
    }

    fn mdn_log_likelihood_as<T: Real>(&self, ens: &Ensemble<f64>, theta: &[f64]) -> Result<f64> {
        let ens = ens.map(|s| Ok(s.cast::<T>()))?;
        let ds = build_windows(&ens, self.mdn.lag)?;
        let arch = MdnArchitecture {
            input_dim: self.mdn.lag * ens.dim(),
            hidden: self.mdn.hidden.clone(),
            components: self.mdn.components,
            target_dim: ens.dim(),
        };
        let cfg = TrainConfig { seed: self.training_seed(theta), ..self.mdn.train.clone() };
        let model = train(&ds, &arch, &cfg)?;
        mdn_log_likelihood(&model, &self.empirical.cast::<T>())
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, EvalStatus)> {
        if !self.in_support(theta) {
            return Ok((f64::NEG_INFINITY, EvalStatus::OutOfSupport));
        }
        let outcome = self.simulate(theta).and_then(|ens| match self.method {
            Method::Kde => kde_log_likelihood(&ens, &self.empirical, self.kde_discard),
            Method::Mdn => match self.mdn.precision {
                Precision::F32 => self.mdn_log_likelihood_as::<f32>(&ens, theta),
                Precision::F64 => self.mdn_log_likelihood_as::<f64>(&ens, theta),
            },
        });
        let status = match &outcome {
            Ok(_) => return Ok((outcome?, EvalStatus::Ok)),
            Err(Error::SimulationDiverged { .. }) => EvalStatus::SimulationDiverged,
            Err(Error::TrainingDiverged { .. }) => EvalStatus::TrainingDiverged,
            Err(Error::DegenerateSample(_)) => EvalStatus::DegenerateSample,
            Err(_) => return outcome.map(|v| (v, EvalStatus::Ok)),
        };
        log::warn!("theta {theta:?}: {}", outcome.unwrap_err());
        Ok((f64::NEG_INFINITY, status))
    }

    /// Approximate log likelihood of the empirical series at `theta`.
    ///
    /// Simulation divergence, training divergence and degenerate samples are
    /// reported as negative infinity rather than errors.
    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.names.len() {
            return Err(invalid(format!("expected {} parameters, got {}", self.names.len(), theta.len())));
        }
        let start = Instant::now();
        let key = self.cache.as_ref().map(|_| Self::cache_key(theta));
        let cached = key.as_ref().and_then(|k| self.cache.as_ref().unwrap().lock().unwrap().get(k).copied());
        let (ll, status) = match cached {
            Some(v) => (v, EvalStatus::Cached),
            None => {
                let (v, s) = self.evaluate(theta)?;
                if let (Some(k), Some(c)) = (key, &self.cache) {
                    c.lock().unwrap().insert(k, v);
                }
                (v, s)
            }
        };
        if let Some(logbook) = &self.eval_log {
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            logbook.lock().unwrap().push(EvalRecord { theta: theta.to_vec(), log_likelihood: ll, wall_ms, status });
        }
        Ok(ll)
    }

    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        let ll = self.log_likelihood(theta)?;
        Ok(if ll == f64::NEG_INFINITY { ll } else { ll + self.log_prior() })
    }
}

impl LogDensity for EstimationProblem {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        self.log_posterior(theta)
    }
}

/// A closure-backed density, handy for testing the sampler on known targets.
pub struct FnDensity<F> {
    names: Vec<String>,
    bounds: Vec<Interval>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(bounds: Vec<Interval>, f: F) -> Self {
        let names = (1..=bounds.len()).map(|i| format!("theta_{i}")).collect();
        Self { names, bounds, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        Ok(if self.in_support(theta) { (self.f)(theta) } else { f64::NEG_INFINITY })
    }
}
