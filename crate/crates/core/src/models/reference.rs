//! Processes with known conditional structure, used to check how the
//! conditional density estimate responds to the lag length.

use serde::{Deserialize, Serialize};

use super::{check_finite, DEFAULT_WARMUP};
use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use crate::series::TimeSeriesMatrix;

/// `x_{t+1} = sum_i c_i x_{t+1-i} + sigma * eps`, started from zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoregressiveConfig {
    pub coefficients: Vec<f64>,
    pub sigma: f64,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

/// I.i.d. `exp(mu + sigma * eps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalConfig {
    pub mu: f64,
    /// Standard deviation of the log (so LN(0, 0.25) has `sigma = 0.5`).
    pub sigma: f64,
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP
}

impl AutoregressiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coefficients.is_empty() || !(self.sigma >= 0.0) {
            return Err(invalid("autoregression needs coefficients and sigma >= 0"));
        }
        Ok(())
    }

    pub fn simulate<T: Real>(&self, len: usize, seed: u64) -> Result<TimeSeriesMatrix<T>> {
        self.validate()?;
        if len == 0 {
            return Err(invalid("series length must be positive"));
        }
        let p = self.coefficients.len();
        let mut rng = SimRng::new(seed);
        // history[0] is the most recent value
        let mut history = vec![0.0f64; p];
        let mut out = Vec::with_capacity(len);
        for step in 0..self.warmup + len {
            let mean: f64 = self.coefficients.iter().zip(&history).map(|(c, x)| c * x).sum();
            let next = mean + self.sigma * rng.normal();
            check_finite(next, step + 1)?;
            history.rotate_right(1);
            history[0] = next;
            if step >= self.warmup {
                out.push(T::cst(next));
            }
        }
        TimeSeriesMatrix::new(out, 1, Some(seed))
    }

    /// Conditional mean of the next value given the most recent `p` values
    /// (oldest first).
    pub fn conditional_mean(&self, window: &[f64]) -> f64 {
        self.coefficients.iter().zip(window.iter().rev()).map(|(c, x)| c * x).sum()
    }
}

impl LogNormalConfig {
    pub fn simulate<T: Real>(&self, len: usize, seed: u64) -> Result<TimeSeriesMatrix<T>> {
        if !(self.sigma >= 0.0) || len == 0 {
            return Err(invalid("log-normal needs sigma >= 0 and a positive length"));
        }
        let mut rng = SimRng::new(seed);
        let out = (0..len).map(|_| T::cst((self.mu + self.sigma * rng.normal()).exp())).collect();
        TimeSeriesMatrix::new(out, 1, Some(seed))
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let z = (x.ln() - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (x * self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
}

pub(super) fn set_ar_param(cfg: &mut AutoregressiveConfig, name: &str, value: f64) -> Result<()> {
    *ar_slot(cfg, name)? = value;
    Ok(())
}

pub(super) fn get_ar_param(cfg: &AutoregressiveConfig, name: &str) -> Result<f64> {
    let mut c = cfg.clone();
    Ok(*ar_slot(&mut c, name)?)
}

/// `sigma` or `c<i>` with 1-based lag index.
fn ar_slot<'a>(cfg: &'a mut AutoregressiveConfig, name: &str) -> Result<&'a mut f64> {
    if name == "sigma" {
        return Ok(&mut cfg.sigma);
    }
    let lag = name.strip_prefix('c').and_then(|i| i.parse::<usize>().ok());
    match lag {
        Some(i) if i >= 1 && i <= cfg.coefficients.len() => Ok(&mut cfg.coefficients[i - 1]),
        _ => Err(Error::UnknownParameter(name.to_string())),
    }
}

pub(super) fn set_ln_param(cfg: &mut LogNormalConfig, name: &str, value: f64) -> Result<()> {
    match name {
        "mu" => cfg.mu = value,
        "sigma" => cfg.sigma = value,
        _ => return Err(Error::UnknownParameter(name.to_string())),
    }
    Ok(())
}

pub(super) fn get_ln_param(cfg: &LogNormalConfig, name: &str) -> Result<f64> {
    match name {
        "mu" => Ok(cfg.mu),
        "sigma" => Ok(cfg.sigma),
        _ => Err(Error::UnknownParameter(name.to_string())),
    }
}
