//! Heterogeneous-beliefs asset pricing model with discrete-choice strategy
//! switching. The returned series is the price deviation from the
//! fundamental, `y_t`.

use serde::{Deserialize, Serialize};

use super::{check_finite, DEFAULT_WARMUP};
use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use crate::series::TimeSeriesMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrockHommesConfig {
    /// Trend components, one per strategy.
    pub g: Vec<f64>,
    /// Biases, one per strategy.
    pub b: Vec<f64>,
    /// Intensity of choice.
    pub beta: f64,
    /// Interest rate; the gross rate is `1 + r`.
    pub r: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    /// `(y_{-2}, y_{-1}, y_0)`.
    #[serde(default)]
    pub y_init: [f64; 3],
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP
}

impl BrockHommesConfig {
    /// Four strategies: `{g=0,b=0}`, two free strategies, and `{g=1.01,b=0}`,
    /// with `r = 0.01`, `beta = 10`, `sigma = 0.04`.
    pub fn four_strategy(g2: f64, b2: f64, g3: f64, b3: f64) -> Self {
        Self {
            g: vec![0.0, g2, g3, 1.01],
            b: vec![0.0, b2, b3, 0.0],
            beta: 10.0,
            r: 0.01,
            sigma: 0.04,
            y_init: [0.0; 3],
            warmup: DEFAULT_WARMUP,
        }
    }

    pub fn strategies(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.g.is_empty() || self.g.len() != self.b.len() {
            return Err(invalid("g and b must be non-empty and of equal length"));
        }
        if !(self.beta >= 0.0 && self.r > 0.0 && self.sigma >= 0.0) {
            return Err(invalid("require beta >= 0, r > 0, sigma >= 0"));
        }
        let all = self.g.iter().chain(&self.b).chain(&self.y_init);
        if all.chain([&self.beta, &self.r, &self.sigma]).any(|v| !v.is_finite()) {
            return Err(invalid("Brock-Hommes parameters must be finite"));
        }
        Ok(())
    }

    /// Simulates `len` deviations after the warm-up.
    pub fn simulate<T: Real>(&self, len: usize, seed: u64) -> Result<TimeSeriesMatrix<T>> {
        self.run(len, seed, |_| {})
    }

    /// As [`simulate`](Self::simulate), also returning the strategy fractions
    /// `n_{h,t}` used to produce each returned observation.
    pub fn simulate_with_fractions<T: Real>(
        &self,
        len: usize,
        seed: u64,
    ) -> Result<(TimeSeriesMatrix<T>, Vec<Vec<T>>)> {
        let mut fractions = Vec::with_capacity(len);
        let series = self.run(len, seed, |n: &[T]| fractions.push(n.to_vec()))?;
        Ok((series, fractions))
    }

    fn run<T: Real>(
        &self,
        len: usize,
        seed: u64,
        mut observe: impl FnMut(&[T]),
    ) -> Result<TimeSeriesMatrix<T>> {
        self.validate()?;
        if len < 4 {
            return Err(invalid("Brock-Hommes series length must be at least 4"));
        }
        let h = self.strategies();
        let g: Vec<T> = self.g.iter().map(|&v| T::cst(v)).collect();
        let b: Vec<T> = self.b.iter().map(|&v| T::cst(v)).collect();
        let beta = T::cst(self.beta);
        let gross = T::one() + T::cst(self.r);
        let sigma = T::cst(self.sigma);

        let mut rng = SimRng::new(seed);
        let [mut y2, mut y1, mut y0] = self.y_init.map(T::cst);
        let mut utility = vec![T::zero(); h];
        let mut frac = vec![T::zero(); h];
        let mut out = Vec::with_capacity(len);

        for step in 0..self.warmup + len {
            for k in 0..h {
                utility[k] = (y0 - gross * y1) * (g[k] * y2 + b[k] - gross * y1);
            }
            softmax_into(beta, &utility, &mut frac);
            let mut mean = T::zero();
            for k in 0..h {
                mean += frac[k] * (g[k] * y0 + b[k]);
            }
            let eps = T::cst(rng.normal());
            let next = mean / gross + sigma * eps;
            check_finite(next, step + 1)?;
            y2 = y1;
            y1 = y0;
            y0 = next;
            if step >= self.warmup {
                observe(&frac);
                out.push(next);
            }
        }
        TimeSeriesMatrix::new(out, 1, Some(seed))
    }
}

/// `out = softmax(beta * u)` with a max shift so large utilities cannot overflow.
fn softmax_into<T: Real>(beta: T, u: &[T], out: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in u {
        max = max.max(beta * v);
    }
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(u) {
        *o = (beta * v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(super) fn set_param(cfg: &mut BrockHommesConfig, name: &str, value: f64) -> Result<()> {
    match name {
        "beta" => cfg.beta = value,
        "r" => cfg.r = value,
        "sigma" => cfg.sigma = value,
        _ => {
            let slot = strategy_slot(cfg, name)?;
            *slot = value;
        }
    }
    Ok(())
}

pub(super) fn get_param(cfg: &BrockHommesConfig, name: &str) -> Result<f64> {
    match name {
        "beta" => Ok(cfg.beta),
        "r" => Ok(cfg.r),
        "sigma" => Ok(cfg.sigma),
        _ => {
            let mut c = cfg.clone();
            Ok(*strategy_slot(&mut c, name)?)
        }
    }
}

/// `g<h>` / `b<h>` with 1-based strategy index.
fn strategy_slot<'a>(cfg: &'a mut BrockHommesConfig, name: &str) -> Result<&'a mut f64> {
    let unknown = || Error::UnknownParameter(name.to_string());
    let (kind, idx) = name.split_at(1.min(name.len()));
    let h: usize = idx.parse().map_err(|_| unknown())?;
    if h == 0 || h > cfg.strategies() {
        return Err(unknown());
    }
    match kind {
        "g" => Ok(&mut cfg.g[h - 1]),
        "b" => Ok(&mut cfg.b[h - 1]),
        _ => Err(unknown()),
    }
}
