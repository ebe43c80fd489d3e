//! Population Metropolis-Hastings with a kernel density proposal.
//!
//! A set of `N` parameter vectors is evolved for `S` iterations. Each
//! iteration proposes a point `z` from a Gaussian kernel mixture centred on
//! the current members and offers to swap it for a uniformly chosen member.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::likelihood::LogDensity;
use crate::params::Interval;
use crate::real::log_sum_exp;
use crate::rng::SimRng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Lower limit on a proposal bandwidth, relative to the box width.
const MIN_RELATIVE_BANDWIDTH: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    /// Number of iterations `S`.
    pub iterations: usize,
    /// Number of members `N`.
    pub set_size: usize,
    /// Sets `1..=burn_in` are discarded.
    pub burn_in: usize,
    pub restarts: usize,
    /// Multiplier in `h_d = factor * std_d * N^(-1/5)`.
    pub bandwidth_factor: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { iterations: 5000, set_size: 70, burn_in: 1500, restarts: 5, bandwidth_factor: 1.06, seed: 0 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(invalid("need iterations >= 1 and burn_in < iterations"));
        }
        if self.restarts == 0 {
            return Err(invalid("need at least one restart"));
        }
        if self.set_size < 2 {
            return Err(invalid("the sample set needs at least two members"));
        }
        if !(self.bandwidth_factor > 0.0) {
            return Err(invalid("bandwidth factor must be positive"));
        }
        Ok(())
    }

    /// Number of retained sets per restart.
    pub fn retained_sets(&self) -> usize {
        self.iterations - self.burn_in
    }
}

/// `N` members of dimension `d`, stored row by row, with their cached log
/// densities.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub members: Vec<f64>,
    pub dim: usize,
    pub log_post: Vec<f64>,
    /// Iteration that produced this set (0 for the initial draw).
    pub iteration: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.members.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, n: usize) -> &[f64] {
        &self.members[n * self.dim..(n + 1) * self.dim]
    }
}

/// `n` independent uniform draws from the box. Log densities start unset
/// (negative infinity).
pub fn init_sample_set(bounds: &[Interval], n: usize, rng: &mut SimRng) -> SampleSet {
    let mut members = Vec::with_capacity(n * bounds.len());
    for _ in 0..n {
        for b in bounds {
            members.push(rng.uniform_in(b.lo, b.hi));
        }
    }
    SampleSet { members, dim: bounds.len(), log_post: vec![f64::NEG_INFINITY; n], iteration: 0 }
}

/// Per-dimension `factor * std_d * N^(-1/5)` over the members (sample
/// standard deviation), floored at a tiny fraction of the box width.
pub fn set_bandwidth(members: &[f64], dim: usize, factor: f64, bounds: &[Interval]) -> Vec<f64> {
    let n = members.len() / dim;
    let scale = factor * (n as f64).powf(-0.2);
    (0..dim)
        .map(|d| {
            let col = members.iter().skip(d).step_by(dim);
            let mean = col.clone().sum::<f64>() / n as f64;
            let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64;
            (scale * var.sqrt()).max(MIN_RELATIVE_BANDWIDTH * bounds[d].width())
        })
        .collect()
}

/// `log[(1/N) sum_n prod_d N(z_d | theta_{n,d}, h_d^2)]`.
pub fn log_proposal_density(members: &[f64], dim: usize, h: &[f64], z: &[f64]) -> f64 {
    assert_eq!(z.len(), dim);
    assert_eq!(h.len(), dim);
    let n = members.len() / dim;
    let norm: f64 = h.iter().map(|hd| hd.ln() + LN_SQRT_2PI).sum::<f64>() + (n as f64).ln();
    let terms: Vec<f64> = members
        .chunks_exact(dim)
        .map(|m| {
            -0.5 * m
                .iter()
                .zip(z)
                .zip(h)
                .map(|((mi, zi), hi)| {
                    let u = (zi - mi) / hi;
                    u * u
                })
                .sum::<f64>()
        })
        .collect();
    log_sum_exp(&terms) - norm
}

pub fn proposal_density(members: &[f64], dim: usize, h: &[f64], z: &[f64]) -> f64 {
    log_proposal_density(members, dim, h, z).exp()
}

/// Draws `z` around a uniformly chosen member and an independent uniform
/// replacement index.
pub fn propose(members: &[f64], dim: usize, h: &[f64], rng: &mut SimRng) -> (Vec<f64>, usize) {
    let n = members.len() / dim;
    let centre = rng.below(n);
    let z = (0..dim).map(|d| members[centre * dim + d] + h[d] * rng.normal()).collect();
    (z, rng.below(n))
}

/// Probability of swapping `z` in for the chosen member.
///
/// `log_q_old` is the proposal density of the old member under the set with
/// `z` swapped in; `log_q_z` is that of `z` under the current set.
pub fn acceptance_prob(log_post_z: f64, log_post_old: f64, log_q_old: f64, log_q_z: f64) -> f64 {
    if log_post_z == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_post_old == f64::NEG_INFINITY {
        return 1.0;
    }
    let log_ratio = log_post_z + log_q_old - log_post_old - log_q_z;
    if log_ratio.is_nan() {
        return 0.0;
    }
    log_ratio.exp().min(1.0)
}

/// One iteration of one restart: the proposal and what happened to it.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub restart: usize,
    pub s: usize,
    pub accepted: bool,
    pub n: usize,
    pub theta: Vec<f64>,
    pub log_post: f64,
}

/// Retained sets of every restart, flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSample {
    pub names: Vec<String>,
    pub dim: usize,
    pub set_size: usize,
    /// Row-major, `dim` values per retained member; restart by restart,
    /// iteration by iteration, member by member.
    pub values: Vec<f64>,
    /// Retained members per restart.
    pub per_restart: Vec<usize>,
    pub acceptance_rates: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn restarts(&self) -> usize {
        self.per_restart.len()
    }

    /// Rows belonging to restart `r`.
    pub fn restart_values(&self, r: usize) -> &[f64] {
        let start: usize = self.per_restart[..r].iter().sum();
        &self.values[start * self.dim..(start + self.per_restart[r]) * self.dim]
    }

    pub fn mean(&self) -> Vec<f64> {
        column_means(&self.values, self.dim)
    }

    /// Posterior mean computed from each restart separately.
    pub fn restart_means(&self) -> Vec<Vec<f64>> {
        (0..self.restarts()).map(|r| column_means(self.restart_values(r), self.dim)).collect()
    }

    /// Population standard deviation of each coordinate.
    pub fn std(&self) -> Vec<f64> {
        let mean = self.mean();
        let n = self.len() as f64;
        (0..self.dim)
            .map(|d| (self.rows().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n).sqrt())
            .collect()
    }

    /// Mean of each retained set of restart `r`, in iteration order.
    pub fn set_means(&self, r: usize) -> Vec<Vec<f64>> {
        self.restart_values(r).chunks_exact(self.set_size * self.dim).map(|set| column_means(set, self.dim)).collect()
    }
}

fn column_means(values: &[f64], dim: usize) -> Vec<f64> {
    let n = (values.len() / dim) as f64;
    let mut out = vec![0.0; dim];
    for row in values.chunks_exact(dim) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// `(1 / count) sum g(theta)` over every retained member.
pub fn expectation(sample: &PosteriorSample, g: impl Fn(&[f64]) -> f64) -> f64 {
    assert!(!sample.is_empty(), "empty posterior sample");
    sample.rows().map(g).sum::<f64>() / sample.len() as f64
}

struct RestartOutput {
    retained: Vec<f64>,
    accepted: usize,
    trace: Vec<TraceRow>,
}

fn run_restart<D: LogDensity + ?Sized>(target: &D, cfg: &McmcConfig, restart: usize) -> Result<RestartOutput> {
    let bounds = target.bounds();
    let dim = bounds.len();
    let mut rng = SimRng::with_stream(cfg.seed, restart as u64);
    let mut set = init_sample_set(bounds, cfg.set_size, &mut rng);
    for n in 0..cfg.set_size {
        set.log_post[n] = target.log_density(set.member(n))?;
    }
    let mut retained = Vec::with_capacity(cfg.retained_sets() * cfg.set_size * dim);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut accepted = 0;
    let mut swapped = set.members.clone();
    for s in 1..=cfg.iterations {
        let h = set_bandwidth(&set.members, dim, cfg.bandwidth_factor, bounds);
        let (z, n) = propose(&set.members, dim, &h, &mut rng);
        let u = rng.uniform();
        let inside = z.iter().zip(bounds).all(|(&v, b)| b.contains(v));
        let lp_z = if inside { target.log_density(&z)? } else { f64::NEG_INFINITY };
        let alpha = if lp_z == f64::NEG_INFINITY {
            0.0
        } else {
            let log_q_z = log_proposal_density(&set.members, dim, &h, &z);
            swapped.copy_from_slice(&set.members);
            swapped[n * dim..(n + 1) * dim].copy_from_slice(&z);
            let h_swapped = set_bandwidth(&swapped, dim, cfg.bandwidth_factor, bounds);
            let log_q_old = log_proposal_density(&swapped, dim, &h_swapped, set.member(n));
            acceptance_prob(lp_z, set.log_post[n], log_q_old, log_q_z)
        };
        let accept = u < alpha;
        if accept {
            set.members[n * dim..(n + 1) * dim].copy_from_slice(&z);
            set.log_post[n] = lp_z;
            accepted += 1;
        }
        set.iteration = s;
        trace.push(TraceRow { restart, s, accepted: accept, n, theta: z, log_post: lp_z });
        if s > cfg.burn_in {
            retained.extend_from_slice(&set.members);
        }
        if s % 500 == 0 {
            log::info!("restart {restart}: iteration {s}/{}, accepted {accepted}", cfg.iterations);
        }
    }
    Ok(RestartOutput { retained, accepted, trace })
}

/// Runs `cfg.restarts` independent chains (in parallel) and pools their
/// retained sets. Restart `r` draws from stream `r` of `cfg.seed`.
pub fn run_chain<D: LogDensity + ?Sized>(target: &D, cfg: &McmcConfig) -> Result<PosteriorSample> {
    cfg.validate()?;
    let outputs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(target, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let dim = target.dim();
    let mut sample = PosteriorSample {
        names: target.names().to_vec(),
        dim,
        set_size: cfg.set_size,
        values: Vec::new(),
        per_restart: Vec::new(),
        acceptance_rates: Vec::new(),
        trace: Vec::new(),
    };
    for out in outputs {
        sample.per_restart.push(out.retained.len() / dim);
        sample.acceptance_rates.push(out.accepted as f64 / cfg.iterations as f64);
        sample.values.extend(out.retained);
        sample.trace.extend(out.trace);
    }
    Ok(sample)
}
