//! Two-type (fundamentalist / chartist) structural stochastic volatility
//! model. Two switching rules are supported:
//!
//! * `Hpm`: herding, predisposition and price misalignment,
//!   `a_t = alpha_n (n^f_t - n^c_t) + alpha_0 + alpha_p (p_t - p*)^2`.
//! * `Wp`: wealth and predisposition,
//!   `g^s_t = (e^{p_t} - e^{p_{t-1}}) d^s_{t-2}`,
//!   `w^s_t = eta w^s_{t-1} + (1 - eta) g^s_t`,
//!   `a_t = alpha_w (w^f_t - w^c_t) + alpha_0`.
//!
//! The simulator emits log returns `r_t = p_t - p_{t-1}`.

use serde::{Deserialize, Serialize};

use super::{check_finite, DEFAULT_WARMUP};
use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use crate::series::TimeSeriesMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchingRule {
    Hpm,
    Wp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrankeWesterhoffConfig {
    pub variant: SwitchingRule,
    pub mu: f64,
    pub beta: f64,
    pub phi: f64,
    pub chi: f64,
    pub sigma_f: f64,
    pub sigma_c: f64,
    pub alpha_0: f64,
    #[serde(default)]
    pub alpha_n: f64,
    #[serde(default)]
    pub alpha_p: f64,
    #[serde(default)]
    pub alpha_w: f64,
    #[serde(default)]
    pub eta: f64,
    /// Log fundamental value.
    #[serde(default)]
    pub p_star: f64,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP
}

impl FrankeWesterhoffConfig {
    /// HPM calibration with `mu = 0.01, beta = 1, phi = 0.12, chi = 1.5, sigma_f = 0.758`.
    pub fn hpm(alpha_0: f64, alpha_n: f64, alpha_p: f64, sigma_c: f64) -> Self {
        Self {
            variant: SwitchingRule::Hpm,
            mu: 0.01,
            beta: 1.0,
            phi: 0.12,
            chi: 1.5,
            sigma_f: 0.758,
            sigma_c,
            alpha_0,
            alpha_n,
            alpha_p,
            alpha_w: 0.0,
            eta: 0.0,
            p_star: 0.0,
            warmup: DEFAULT_WARMUP,
        }
    }

    /// WP calibration with `mu = 0.01, beta = 1, phi = 1, chi = 0.9, alpha_0 = 2.1, sigma_f = 0.752`.
    pub fn wp(alpha_w: f64, eta: f64, sigma_c: f64) -> Self {
        Self {
            variant: SwitchingRule::Wp,
            mu: 0.01,
            beta: 1.0,
            phi: 1.0,
            chi: 0.9,
            sigma_f: 0.752,
            sigma_c,
            alpha_0: 2.1,
            alpha_n: 0.0,
            alpha_p: 0.0,
            alpha_w,
            eta,
            p_star: 0.0,
            warmup: DEFAULT_WARMUP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.mu, self.beta, self.phi, self.chi, self.sigma_f, self.sigma_c, self.alpha_0,
            self.alpha_n, self.alpha_p, self.alpha_w, self.eta, self.p_star,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(invalid("Franke-Westerhoff parameters must be finite"));
        }
        if [self.mu, self.beta, self.phi, self.chi, self.sigma_f, self.sigma_c].iter().any(|&v| v < 0.0) {
            return Err(invalid("mu, beta, phi, chi, sigma_f, sigma_c must be non-negative"));
        }
        if self.alpha_n < 0.0 || self.alpha_p < 0.0 || self.alpha_w < 0.0 {
            return Err(invalid("alpha_n, alpha_p, alpha_w must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid("eta must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Simulates `len` log returns after the warm-up.
    pub fn simulate<T: Real>(&self, len: usize, seed: u64) -> Result<TimeSeriesMatrix<T>> {
        self.run(len, seed, |_| {})
    }

    /// As [`simulate`](Self::simulate), also returning the fundamentalist share
    /// `n^f_t` behind each returned observation.
    pub fn simulate_with_fractions<T: Real>(
        &self,
        len: usize,
        seed: u64,
    ) -> Result<(TimeSeriesMatrix<T>, Vec<T>)> {
        let mut nf = Vec::with_capacity(len);
        let s = self.run(len, seed, |v| nf.push(v))?;
        Ok((s, nf))
    }

    fn run<T: Real>(&self, len: usize, seed: u64, mut observe: impl FnMut(T)) -> Result<TimeSeriesMatrix<T>> {
        self.validate()?;
        if len < 4 {
            return Err(invalid("Franke-Westerhoff series length must be at least 4"));
        }
        let c = |v: f64| T::cst(v);
        let (mu, beta, phi, chi) = (c(self.mu), c(self.beta), c(self.phi), c(self.chi));
        let (sf, sc, p_star) = (c(self.sigma_f), c(self.sigma_c), c(self.p_star));
        let (a0, an, ap, aw, eta) = (c(self.alpha_0), c(self.alpha_n), c(self.alpha_p), c(self.alpha_w), c(self.eta));
        let one = T::one();
        let mut rng = SimRng::new(seed);

        // t = 1: p_1 = p_0 = p*, a_0 = 0, d_0 = 0, w_0 = 0.
        let mut p_prev = p_star;
        let mut p = p_star;
        let mut nf = logistic(T::zero());
        let mut df = phi * (p_star - p) + sf * c(rng.normal());
        let mut dc = chi * (p - p_prev) + sc * c(rng.normal());
        // demands at t-1 and t-2 (for the wealth rule)
        let (mut df_lag2, mut dc_lag2) = (T::zero(), T::zero());
        let (mut df_lag1, mut dc_lag1) = (T::zero(), T::zero());
        let (mut wf, mut wc) = (T::zero(), T::zero());
        let mut a = self.attractiveness(nf, p, p_prev, &mut wf, &mut wc, df_lag2, dc_lag2, (a0, an, ap, aw, eta), p_star);

        let mut out = Vec::with_capacity(len);
        for step in 0..self.warmup + len {
            let t = step + 2;
            p_prev = p;
            p = p + mu * (nf * df + (one - nf) * dc);
            // shift demand history: (t-2) <- (t-1) <- t-1's current
            df_lag2 = df_lag1;
            dc_lag2 = dc_lag1;
            df_lag1 = df;
            dc_lag1 = dc;
            nf = logistic(beta * a);
            df = phi * (p_star - p) + sf * c(rng.normal());
            dc = chi * (p - p_prev) + sc * c(rng.normal());
            a = self.attractiveness(nf, p, p_prev, &mut wf, &mut wc, df_lag2, dc_lag2, (a0, an, ap, aw, eta), p_star);
            check_finite(p, t)?;
            check_finite(a, t)?;
            if step >= self.warmup {
                observe(nf);
                out.push(p - p_prev);
            }
        }
        TimeSeriesMatrix::new(out, 1, Some(seed))
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn attractiveness<T: Real>(
        &self,
        nf: T,
        p: T,
        p_prev: T,
        wf: &mut T,
        wc: &mut T,
        df_lag2: T,
        dc_lag2: T,
        (a0, an, ap, aw, eta): (T, T, T, T, T),
        p_star: T,
    ) -> T {
        match self.variant {
            SwitchingRule::Hpm => {
                let nc = T::one() - nf;
                an * (nf - nc) + a0 + ap * (p - p_star) * (p - p_star)
            }
            SwitchingRule::Wp => {
                let gain = p.exp() - p_prev.exp();
                *wf = eta * *wf + (T::one() - eta) * gain * df_lag2;
                *wc = eta * *wc + (T::one() - eta) * gain * dc_lag2;
                aw * (*wf - *wc) + a0
            }
        }
    }
}

#[inline]
fn logistic<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(super) fn set_param(cfg: &mut FrankeWesterhoffConfig, name: &str, value: f64) -> Result<()> {
    *slot(cfg, name)? = value;
    Ok(())
}

pub(super) fn get_param(cfg: &FrankeWesterhoffConfig, name: &str) -> Result<f64> {
    let mut c = cfg.clone();
    Ok(*slot(&mut c, name)?)
}

fn slot<'a>(cfg: &'a mut FrankeWesterhoffConfig, name: &str) -> Result<&'a mut f64> {
    Ok(match name {
        "mu" => &mut cfg.mu,
        "beta" => &mut cfg.beta,
        "phi" => &mut cfg.phi,
        "chi" => &mut cfg.chi,
        "sigma_f" => &mut cfg.sigma_f,
        "sigma_c" => &mut cfg.sigma_c,
        "alpha_0" => &mut cfg.alpha_0,
        "alpha_n" => &mut cfg.alpha_n,
        "alpha_p" => &mut cfg.alpha_p,
        "alpha_w" => &mut cfg.alpha_w,
        "eta" => &mut cfg.eta,
        "p_star" => &mut cfg.p_star,
        _ => return Err(Error::UnknownParameter(name.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_noise_no_reaction_means_flat_price() {
        let mut cfg = FrankeWesterhoffConfig::hpm(-0.327, 1.79, 18.43, 0.0);
        cfg.sigma_f = 0.0;
        cfg.phi = 0.0;
        cfg.chi = 0.0;
        let s = cfg.simulate::<f64>(300, 4).unwrap();
        assert!(s.as_slice().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn zero_intensity_splits_market_evenly() {
        for mut cfg in [FrankeWesterhoffConfig::hpm(-0.327, 1.79, 18.43, 2.087), FrankeWesterhoffConfig::wp(2668.0, 0.987, 1.726)] {
            cfg.beta = 0.0;
            let (_, nf) = cfg.simulate_with_fractions::<f64>(500, 8).unwrap();
            assert!(nf.iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn calibrated_variants_run_without_divergence() {
        let hpm = FrankeWesterhoffConfig::hpm(-0.327, 1.79, 18.43, 2.087);
        let wp = FrankeWesterhoffConfig::wp(2668.0, 0.987, 1.726);
        for seed in 0..5 {
            let s = hpm.simulate::<f64>(1000, seed).unwrap();
            assert_eq!(s.len(), 1000);
            let w = wp.simulate::<f64>(1000, seed).unwrap();
            assert_eq!(w.len(), 1000);
            let sd = (s.as_slice().iter().map(|r| r * r).sum::<f64>() / 1000.0).sqrt();
            assert!(sd > 0.0 && sd < 1.0, "HPM return scale {sd}");
        }
    }

    #[test]
    fn shares_sum_to_one_and_stay_in_unit_interval() {
        let cfg = FrankeWesterhoffConfig::hpm(-0.327, 1.79, 18.43, 2.087);
        let (_, nf) = cfg.simulate_with_fractions::<f64>(1000, 1).unwrap();
        for v in nf {
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(v + (1.0 - v), 1.0);
        }
    }

    #[test]
    fn named_parameters() {
        let mut cfg = FrankeWesterhoffConfig::wp(2668.0, 0.987, 1.726);
        set_param(&mut cfg, "eta", 0.5).unwrap();
        assert_eq!(get_param(&cfg, "eta").unwrap(), 0.5);
        assert!(set_param(&mut cfg, "gamma", 1.0).is_err());
    }
}
