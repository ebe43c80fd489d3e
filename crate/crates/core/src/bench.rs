//! Estimation quality metrics, posterior summaries and the lag scan.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::likelihood::{MdnSettings, Precision};
use crate::mdn::{eval_density, train, MdnArchitecture};
use crate::models::{generate_ensemble, ModelConfig};
use crate::params::{Interval, ParameterVector};
use crate::real::Real;
use crate::sampler::PosteriorSample;
use crate::series::Ensemble;
use crate::window::build_windows;

/// Maps each coordinate to `(theta - lo) / (hi - lo)`.
pub fn normalize_params(theta: &[f64], bounds: &[Interval]) -> Vec<f64> {
    assert_eq!(theta.len(), bounds.len());
    theta.iter().zip(bounds).map(|(&v, b)| b.to_unit(v)).collect()
}

/// Euclidean distance between the true and estimated parameters after
/// mapping both into the unit box.
pub fn loss_ls(theta_true: &[f64], theta_hat: &[f64], bounds: &[Interval]) -> f64 {
    assert_eq!(theta_true.len(), theta_hat.len());
    let a = normalize_params(theta_true, bounds);
    let b = normalize_params(theta_hat, bounds);
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub names: Vec<String>,
    pub mu_posterior: Vec<f64>,
    pub sigma_posterior: Vec<f64>,
    /// Sample standard deviation of the per-restart posterior means; absent
    /// with a single restart.
    pub sigma_sampling: Option<Vec<f64>>,
    #[serde(rename = "LS")]
    pub ls: Option<f64>,
    pub theta_true: Option<Vec<f64>>,
    pub acceptance_rates: Vec<f64>,
}

pub fn summarize(sample: &PosteriorSample, theta_true: Option<&[f64]>, bounds: &[Interval]) -> Result<PosteriorSummary> {
    if sample.is_empty() {
        return Err(invalid("cannot summarize an empty posterior sample"));
    }
    let mu = sample.mean();
    let sigma_sampling = (sample.restarts() > 1).then(|| {
        let means = sample.restart_means();
        let r = means.len() as f64;
        (0..sample.dim)
            .map(|d| {
                let m = means.iter().map(|v| v[d]).sum::<f64>() / r;
                (means.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
            })
            .collect()
    });
    if let Some(t) = theta_true {
        if t.len() != sample.dim {
            return Err(invalid("true parameter vector has the wrong dimension"));
        }
    }
    Ok(PosteriorSummary {
        names: sample.names.clone(),
        ls: theta_true.map(|t| loss_ls(t, &mu, bounds)),
        mu_posterior: mu,
        sigma_posterior: sample.std(),
        sigma_sampling,
        theta_true: theta_true.map(<[f64]>::to_vec),
        acceptance_rates: sample.acceptance_rates.clone(),
    })
}

impl PosteriorSummary {
    /// Difference of two posterior means, e.g. a post-break minus pre-break
    /// drift.
    pub fn delta(&self, after: &str, before: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == after)?;
        let j = self.names.iter().position(|n| n == before)?;
        Some(self.mu_posterior[i] - self.mu_posterior[j])
    }
}

/// Head-to-head comparison across paired experiments, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub experiments: usize,
    pub parameters: usize,
    /// Experiments where the first method's loss is strictly lower.
    pub ls_better: f64,
    /// Parameters whose posterior mean is strictly closer to the truth.
    pub error_better: f64,
    /// Parameters with a strictly smaller posterior standard deviation.
    pub std_better: f64,
}

/// Compares `(first, second)` summaries pairwise, counting strict wins of
/// the first method.
pub fn aggregate_metrics(pairs: &[(PosteriorSummary, PosteriorSummary)]) -> Result<AggregateMetrics> {
    if pairs.is_empty() {
        return Err(invalid("no experiments to aggregate"));
    }
    let (mut ls_wins, mut err_wins, mut std_wins, mut params) = (0, 0, 0, 0);
    for (a, b) in pairs {
        let (ta, tb) = match (&a.theta_true, &b.theta_true) {
            (Some(ta), Some(tb)) => (ta, tb),
            _ => return Err(invalid("paired summaries need true parameter values")),
        };
        if a.names != b.names || ta != tb {
            return Err(invalid("paired summaries refer to different experiments"));
        }
        let (la, lb) = (a.ls.unwrap_or(f64::INFINITY), b.ls.unwrap_or(f64::INFINITY));
        ls_wins += usize::from(la < lb);
        for d in 0..a.names.len() {
            params += 1;
            let ea = (a.mu_posterior[d] - ta[d]).abs();
            let eb = (b.mu_posterior[d] - tb[d]).abs();
            err_wins += usize::from(ea < eb);
            std_wins += usize::from(a.sigma_posterior[d] < b.sigma_posterior[d]);
        }
    }
    let pct = |wins: usize, of: usize| 100.0 * wins as f64 / of as f64;
    Ok(AggregateMetrics {
        experiments: pairs.len(),
        parameters: params,
        ls_better: pct(ls_wins, pairs.len()),
        error_better: pct(err_wins, params),
        std_better: pct(std_wins, params),
    })
}

/// `0.5 * sum |f1 - f2| * dy` on a shared uniform grid.
pub fn tv_distance(f1: &[f64], f2: &[f64], dy: f64) -> f64 {
    assert_eq!(f1.len(), f2.len());
    0.5 * f1.iter().zip(f2).map(|(a, b)| (a - b).abs()).sum::<f64>() * dy
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagScanConfig {
    pub model: ModelConfig,
    pub replications: usize,
    pub sim_len: usize,
    pub base_seed: u64,
    pub lags: Vec<usize>,
    /// Network settings; the lag field is ignored.
    #[serde(default)]
    pub mdn: MdnSettings,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_points() -> usize {
    2001
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagCurve {
    pub lag: usize,
    pub density: std::result::Result<Vec<f64>, Error>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagScanResult {
    pub grid: Vec<f64>,
    pub curves: Vec<LagCurve>,
    /// `(L_a, L_b, TV)` for every pair of successfully trained lags.
    pub distances: Vec<(usize, usize, f64)>,
}

impl LagScanResult {
    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn distance(&self, a: usize, b: usize) -> Option<f64> {
        self.distances.iter().find(|(x, y, _)| (*x, *y) == (a, b) || (*x, *y) == (b, a)).map(|t| t.2)
    }

    pub fn curve(&self, lag: usize) -> Option<&[f64]> {
        self.curves.iter().find(|c| c.lag == lag).and_then(|c| c.density.as_deref().ok())
    }
}

/// Grid of `points` values spanning the pooled data range widened by four
/// sample standard deviations on each side.
pub fn lag_scan_grid(ens: &Ensemble<f64>, points: usize) -> Vec<f64> {
    let all: Vec<f64> = ens.replications().iter().flat_map(|r| r.as_slice().iter().copied()).collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * sd;
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * sd;
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + i as f64 * step).collect()
}

/// Trains one network per lag on a common simulated ensemble and evaluates
/// each conditional density, given the last `L` values of `window` (oldest
/// first), on a shared grid.
pub fn lag_scan(cfg: &LagScanConfig, window: &[f64]) -> Result<LagScanResult> {
    if cfg.lags.is_empty() || cfg.lags.contains(&0) {
        return Err(invalid("lags must be a non-empty list of positive integers"));
    }
    let max_lag = *cfg.lags.iter().max().unwrap();
    if window.len() < max_lag {
        return Err(invalid(format!("window has {} values but the largest lag is {max_lag}", window.len())));
    }
    if cfg.grid_points < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    let no_free = ParameterVector::new(vec![], vec![], vec![])?;
    let ens = generate_ensemble::<f64>(&cfg.model, &no_free, cfg.replications, cfg.sim_len, cfg.base_seed)?;
    let pre = cfg.model.default_preprocessing();
    let ens = ens.map(|s| pre.apply(s))?;
    if ens.dim() != 1 {
        return Err(invalid("lag scans are defined for univariate series"));
    }
    let grid = lag_scan_grid(&ens, cfg.grid_points);
    let curves: Vec<LagCurve> = cfg
        .lags
        .iter()
        .map(|&lag| {
            let density = scan_one(&ens, &cfg.mdn, lag, &window[window.len() - lag..], &grid);
            if let Err(e) = &density {
                log::warn!("lag {lag}: {e}");
            }
            LagCurve { lag, density }
        })
        .collect();
    let dy = grid[1] - grid[0];
    let mut distances = Vec::new();
    for (i, a) in curves.iter().enumerate() {
        for b in &curves[i + 1..] {
            if let (Ok(fa), Ok(fb)) = (&a.density, &b.density) {
                distances.push((a.lag, b.lag, tv_distance(fa, fb, dy)));
            }
        }
    }
    Ok(LagScanResult { grid, curves, distances })
}

fn scan_one(ens: &Ensemble<f64>, mdn: &MdnSettings, lag: usize, window: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    match mdn.precision {
        Precision::F32 => scan_as::<f32>(ens, mdn, lag, window, grid),
        Precision::F64 => scan_as::<f64>(ens, mdn, lag, window, grid),
    }
}

fn scan_as<T: Real>(ens: &Ensemble<f64>, mdn: &MdnSettings, lag: usize, window: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let ds = build_windows(&ens.map(|s| Ok(s.cast::<T>()))?, lag)?;
    let arch = MdnArchitecture { input_dim: lag, hidden: mdn.hidden.clone(), components: mdn.components, target_dim: 1 };
    let model = train(&ds, &arch, &mdn.train)?;
    let x: Vec<T> = window.iter().map(|&v| T::cst(v)).collect();
    grid.iter().map(|&y| eval_density(&model, &x, &[T::cst(y)])).collect()
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means (any remainder at the end is dropped).
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    assert!(batches >= 2 && series.len() >= batches, "need at least two non-empty batches");
    let size = series.len() / batches;
    let means: Vec<f64> = series.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `sample` and `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS distance `d` from `n` observations, with
/// Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
