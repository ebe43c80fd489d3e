//! Random walk with a single structural break in drift and volatility.

use serde::{Deserialize, Serialize};

use super::check_finite;
use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use crate::series::TimeSeriesMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWalkBreakConfig {
    pub d1: f64,
    pub d2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Last step of the first regime.
    pub tau: usize,
    #[serde(default)]
    pub x_init: f64,
}

impl RandomWalkBreakConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0) {
            return Err(invalid("volatilities must be non-negative"));
        }
        if [self.d1, self.d2, self.sigma1, self.sigma2, self.x_init].iter().any(|v| !v.is_finite()) {
            return Err(invalid("random walk parameters must be finite"));
        }
        if self.tau == 0 {
            return Err(invalid("break time tau must be at least 1"));
        }
        Ok(())
    }

    /// `x_t = x_{t-1} + d_t + sigma_t * eps_t` for `t = 1..=len`, with the
    /// first regime active for `t <= tau`.
    pub fn simulate<T: Real>(&self, len: usize, seed: u64) -> Result<TimeSeriesMatrix<T>> {
        self.validate()?;
        if len <= self.tau {
            return Err(invalid(format!("series length {len} must exceed tau = {}", self.tau)));
        }
        let mut rng = SimRng::new(seed);
        let (d1, d2, s1, s2) = (T::cst(self.d1), T::cst(self.d2), T::cst(self.sigma1), T::cst(self.sigma2));
        let mut x = T::cst(self.x_init);
        let mut out = Vec::with_capacity(len);
        for t in 1..=len {
            let (d, s) = if t <= self.tau { (d1, s1) } else { (d2, s2) };
            x = x + d + s * T::cst(rng.normal());
            check_finite(x, t)?;
            out.push(x);
        }
        TimeSeriesMatrix::new(out, 1, Some(seed))
    }
}

pub(super) fn set_param(cfg: &mut RandomWalkBreakConfig, name: &str, value: f64) -> Result<()> {
    match name {
        "d1" => cfg.d1 = value,
        "d2" => cfg.d2 = value,
        "sigma1" => cfg.sigma1 = value,
        "sigma2" => cfg.sigma2 = value,
        "x_init" => cfg.x_init = value,
        "tau" => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(invalid("tau must be a positive integer"));
            }
            cfg.tau = value as usize;
        }
        _ => return Err(Error::UnknownParameter(name.to_string())),
    }
    Ok(())
}

pub(super) fn get_param(cfg: &RandomWalkBreakConfig, name: &str) -> Result<f64> {
    Ok(match name {
        "d1" => cfg.d1,
        "d2" => cfg.d2,
        "sigma1" => cfg.sigma1,
        "sigma2" => cfg.sigma2,
        "x_init" => cfg.x_init,
        "tau" => cfg.tau as f64,
        _ => return Err(Error::UnknownParameter(name.to_string())),
    })
}
