//! Candidate simulators and ensemble generation.
//!
//! Every simulator is a pure function of `(config, length, seed)`.

mod brock_hommes;
mod franke_westerhoff;
mod random_walk;
mod reference;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use brock_hommes::BrockHommesConfig;
pub use franke_westerhoff::{FrankeWesterhoffConfig, SwitchingRule};
pub use random_walk::RandomWalkBreakConfig;
pub use reference::{AutoregressiveConfig, LogNormalConfig};

use crate::error::{invalid, Error, Result};
use crate::params::ParameterVector;
use crate::real::Real;
use crate::series::{first_difference, Ensemble, TimeSeriesMatrix};

/// Steps simulated and discarded before the returned series begins
/// (Brock-Hommes, Franke-Westerhoff, autoregression).
pub const DEFAULT_WARMUP: usize = 50;

/// Values beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[inline]
pub(crate) fn check_finite<T: Real>(v: T, step: usize) -> Result<()> {
    if v.is_finite() && v.abs().f64() <= DIVERGENCE_LIMIT {
        Ok(())
    } else {
        Err(Error::SimulationDiverged { step, replication: None })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", content = "fixed", rename_all = "snake_case")]
pub enum ModelConfig {
    BrockHommes(BrockHommesConfig),
    RandomWalkBreak(RandomWalkBreakConfig),
    FrankeWesterhoff(FrankeWesterhoffConfig),
    Autoregressive(AutoregressiveConfig),
    LogNormal(LogNormalConfig),
}

/// Transform applied to simulated and empirical series before estimation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    None,
    FirstDifference,
}

impl Preprocessing {
    pub fn apply<T: Real>(&self, series: &TimeSeriesMatrix<T>) -> Result<TimeSeriesMatrix<T>> {
        match self {
            Preprocessing::None => Ok(series.clone()),
            Preprocessing::FirstDifference => first_difference(series),
        }
    }
}

impl ModelConfig {
    pub fn id(&self) -> &'static str {
        match self {
            ModelConfig::BrockHommes(_) => "brock_hommes",
            ModelConfig::RandomWalkBreak(_) => "random_walk_break",
            ModelConfig::FrankeWesterhoff(_) => "franke_westerhoff",
            ModelConfig::Autoregressive(_) => "autoregressive",
            ModelConfig::LogNormal(_) => "log_normal",
        }
    }

    /// The random walk is non-stationary and is estimated on increments;
    /// the others are used as simulated.
    pub fn default_preprocessing(&self) -> Preprocessing {
        match self {
            ModelConfig::RandomWalkBreak(_) => Preprocessing::FirstDifference,
            _ => Preprocessing::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::BrockHommes(c) => c.validate(),
            ModelConfig::RandomWalkBreak(c) => c.validate(),
            ModelConfig::FrankeWesterhoff(c) => c.validate(),
            ModelConfig::Autoregressive(c) => c.validate(),
            ModelConfig::LogNormal(c) => {
                if c.sigma >= 0.0 && c.mu.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("log-normal needs finite mu and sigma >= 0"))
                }
            }
        }
    }

    pub fn simulate<T: Real>(&self, len: usize, seed: u64) -> Result<TimeSeriesMatrix<T>> {
        match self {
            ModelConfig::BrockHommes(c) => c.simulate(len, seed),
            ModelConfig::RandomWalkBreak(c) => c.simulate(len, seed),
            ModelConfig::FrankeWesterhoff(c) => c.simulate(len, seed),
            ModelConfig::Autoregressive(c) => c.simulate(len, seed),
            ModelConfig::LogNormal(c) => c.simulate(len, seed),
        }
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(invalid(format!("parameter `{name}` must be finite")));
        }
        match self {
            ModelConfig::BrockHommes(c) => brock_hommes::set_param(c, name, value),
            ModelConfig::RandomWalkBreak(c) => random_walk::set_param(c, name, value),
            ModelConfig::FrankeWesterhoff(c) => franke_westerhoff::set_param(c, name, value),
            ModelConfig::Autoregressive(c) => reference::set_ar_param(c, name, value),
            ModelConfig::LogNormal(c) => reference::set_ln_param(c, name, value),
        }
    }

    pub fn get_param(&self, name: &str) -> Result<f64> {
        match self {
            ModelConfig::BrockHommes(c) => brock_hommes::get_param(c, name),
            ModelConfig::RandomWalkBreak(c) => random_walk::get_param(c, name),
            ModelConfig::FrankeWesterhoff(c) => franke_westerhoff::get_param(c, name),
            ModelConfig::Autoregressive(c) => reference::get_ar_param(c, name),
            ModelConfig::LogNormal(c) => reference::get_ln_param(c, name),
        }
    }

    /// Copy of this configuration with the named parameters overwritten.
    pub fn with_params(&self, names: &[String], values: &[f64]) -> Result<Self> {
        if names.len() != values.len() {
            return Err(invalid("parameter names and values differ in length"));
        }
        let mut cfg = self.clone();
        for (n, &v) in names.iter().zip(values) {
            cfg.set_param(n, v)?;
        }
        Ok(cfg)
    }

    /// Scales the break location of the random walk; a no-op elsewhere.
    pub fn rescale_time(&mut self, factor: f64) {
        if let ModelConfig::RandomWalkBreak(c) = self {
            c.tau = ((c.tau as f64 * factor).round() as usize).max(1);
        }
    }
}

/// Simulates `replications` runs at `theta` with seeds `base_seed + i`.
pub fn generate_ensemble<T: Real>(
    model: &ModelConfig,
    theta: &ParameterVector,
    replications: usize,
    len: usize,
    base_seed: u64,
) -> Result<Ensemble<T>> {
    if replications == 0 {
        return Err(invalid("ensemble needs at least one replication"));
    }
    if !theta.in_support() {
        return Err(invalid("theta lies outside its bounds"));
    }
    let cfg = model.with_params(theta.names(), theta.values())?;
    cfg.validate()?;
    let reps = (0..replications)
        .into_par_iter()
        .map(|i| {
            cfg.simulate::<T>(len, base_seed.wrapping_add(i as u64)).map_err(|e| match e {
                Error::SimulationDiverged { step, .. } => Error::SimulationDiverged { step, replication: Some(i) },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(reps, base_seed, Some(theta.clone()))
}
