//! Rolling lag windows and next-step targets for conditional density training.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::real::Real;
use crate::rng::SimRng;
use crate::series::{Ensemble, TimeSeriesMatrix};

/// Standard deviations below this are treated as zero and replaced by one.
pub const MIN_STD: f64 = 1e-12;

/// `count` examples: an `lag * dim` input window and a `dim` target each.
///
/// Inputs are stored row-major, one window per row, oldest observation first.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset<T> {
    inputs: Vec<T>,
    targets: Vec<T>,
    lag: usize,
    dim: usize,
    count: usize,
}

impl<T: Real> WindowedDataset<T> {
    pub fn from_parts(inputs: Vec<T>, targets: Vec<T>, lag: usize, dim: usize) -> Result<Self> {
        if lag == 0 || dim == 0 {
            return Err(invalid("lag and dim must be positive"));
        }
        if targets.len() % dim != 0 || inputs.len() != (targets.len() / dim) * lag * dim {
            return Err(invalid("input and target buffers have inconsistent sizes"));
        }
        let count = targets.len() / dim;
        Ok(Self { inputs, targets, lag, dim, count })
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_dim(&self) -> usize {
        self.lag * self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn inputs(&self) -> &[T] {
        &self.inputs
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn input(&self, m: usize) -> &[T] {
        let w = self.input_dim();
        &self.inputs[m * w..(m + 1) * w]
    }

    pub fn target(&self, m: usize) -> &[T] {
        &self.targets[m * self.dim..(m + 1) * self.dim]
    }
}

/// Windows `(x_t, ..., x_{t+L-1})` with target `x_{t+L}` from one series.
pub fn series_windows<T: Real>(series: &TimeSeriesMatrix<T>, lag: usize) -> Result<WindowedDataset<T>> {
    if lag == 0 {
        return Err(invalid("lag must be at least 1"));
    }
    if series.len() <= lag {
        return Err(invalid(format!("series of length {} is too short for lag {lag}", series.len())));
    }
    let n = series.dim();
    let data = series.as_slice();
    let count = series.len() - lag;
    let mut inputs = Vec::with_capacity(count * lag * n);
    let mut targets = Vec::with_capacity(count * n);
    for t in 0..count {
        inputs.extend_from_slice(&data[t * n..(t + lag) * n]);
        targets.extend_from_slice(series.row(t + lag));
    }
    WindowedDataset::from_parts(inputs, targets, lag, n)
}

/// Training set of an ensemble: per-replication windows concatenated in
/// replication order, so no window spans two replications.
pub fn build_windows<T: Real>(ens: &Ensemble<T>, lag: usize) -> Result<WindowedDataset<T>> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for rep in ens.replications() {
        let ds = series_windows(rep, lag)?;
        inputs.extend_from_slice(&ds.inputs);
        targets.extend_from_slice(&ds.targets);
    }
    WindowedDataset::from_parts(inputs, targets, lag, ens.dim())
}

/// Per-dimension means and standard deviations of inputs and targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormStats<T> {
    pub mu_x: Vec<T>,
    pub sigma_x: Vec<T>,
    pub mu_y: Vec<T>,
    pub sigma_y: Vec<T>,
    /// Some dimension had (near) zero spread and was scaled by one.
    pub degenerate: bool,
}

impl<T: Real> NormStats<T> {
    /// Stats that leave data unchanged.
    pub fn identity(input_dim: usize, target_dim: usize) -> Self {
        Self {
            mu_x: vec![T::zero(); input_dim],
            sigma_x: vec![T::one(); input_dim],
            mu_y: vec![T::zero(); target_dim],
            sigma_y: vec![T::one(); target_dim],
            degenerate: false,
        }
    }

    pub fn normalize_input(&self, x: &mut [T]) {
        standardize(x, &self.mu_x, &self.sigma_x);
    }

    pub fn normalize_target(&self, y: &mut [T]) {
        standardize(y, &self.mu_y, &self.sigma_y);
    }

    /// `sum_j ln sigma_y[j]`: the log Jacobian between raw and normalized targets.
    pub fn log_target_scale(&self) -> f64 {
        self.sigma_y.iter().map(|s| s.f64().ln()).sum()
    }

    pub fn cast<U: Real>(&self) -> NormStats<U> {
        let c = |v: &[T]| v.iter().map(|x| U::cst(x.f64())).collect();
        NormStats {
            mu_x: c(&self.mu_x),
            sigma_x: c(&self.sigma_x),
            mu_y: c(&self.mu_y),
            sigma_y: c(&self.sigma_y),
            degenerate: self.degenerate,
        }
    }
}

fn standardize<T: Real>(x: &mut [T], mu: &[T], sigma: &[T]) {
    let d = mu.len();
    for (i, v) in x.iter_mut().enumerate() {
        let j = i % d;
        *v = (*v - mu[j]) / sigma[j];
    }
}

fn column_stats<T: Real>(data: &[T], width: usize) -> (Vec<T>, Vec<T>, bool) {
    let rows = data.len() / width;
    let mut mean = vec![0.0f64; width];
    for row in data.chunks_exact(width) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0f64; width];
    for row in data.chunks_exact(width) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v.f64() - m;
            *s += d * d;
        }
    }
    let mut degenerate = false;
    let sd = var
        .iter()
        .map(|s| {
            let sd = (s / rows as f64).sqrt();
            if sd < MIN_STD {
                degenerate = true;
                T::one()
            } else {
                T::cst(sd)
            }
        })
        .collect();
    (mean.into_iter().map(T::cst).collect(), sd, degenerate)
}

/// Sample means and population standard deviations per dimension.
pub fn compute_norm_stats<T: Real>(ds: &WindowedDataset<T>) -> Result<NormStats<T>> {
    if ds.len() < 2 {
        return Err(invalid("normalization statistics need at least two examples"));
    }
    let (mu_x, sigma_x, dx) = column_stats(&ds.inputs, ds.input_dim());
    let (mu_y, sigma_y, dy) = column_stats(&ds.targets, ds.dim);
    Ok(NormStats { mu_x, sigma_x, mu_y, sigma_y, degenerate: dx || dy })
}

fn check_dims<T: Real>(ds: &WindowedDataset<T>, stats: &NormStats<T>) -> Result<()> {
    if stats.mu_x.len() != ds.input_dim()
        || stats.sigma_x.len() != ds.input_dim()
        || stats.mu_y.len() != ds.dim
        || stats.sigma_y.len() != ds.dim
    {
        return Err(invalid("normalization statistics do not match dataset dimensions"));
    }
    Ok(())
}

/// `(value - mu) / sigma` on every input and target dimension.
pub fn normalize<T: Real>(ds: &WindowedDataset<T>, stats: &NormStats<T>) -> Result<WindowedDataset<T>> {
    check_dims(ds, stats)?;
    let mut out = ds.clone();
    stats.normalize_input(&mut out.inputs);
    stats.normalize_target(&mut out.targets);
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize<T: Real>(ds: &WindowedDataset<T>, stats: &NormStats<T>) -> Result<WindowedDataset<T>> {
    check_dims(ds, stats)?;
    let mut out = ds.clone();
    let d = stats.mu_x.len();
    for (i, v) in out.inputs.iter_mut().enumerate() {
        *v = *v * stats.sigma_x[i % d] + stats.mu_x[i % d];
    }
    let d = stats.mu_y.len();
    for (i, v) in out.targets.iter_mut().enumerate() {
        *v = *v * stats.sigma_y[i % d] + stats.mu_y[i % d];
    }
    Ok(out)
}

/// Adds independent `N(0, eta_x^2)` noise to every input value and
/// `N(0, eta_y^2)` to every target value. Zero scales leave the data (and
/// the generator) untouched.
pub fn apply_noise<T: Real>(inputs: &mut [T], targets: &mut [T], eta_x: f64, eta_y: f64, rng: &mut SimRng) {
    assert!(eta_x >= 0.0 && eta_y >= 0.0, "noise scales must be non-negative");
    if eta_x > 0.0 {
        for v in inputs.iter_mut() {
            *v += T::cst(eta_x * rng.normal());
        }
    }
    if eta_y > 0.0 {
        for v in targets.iter_mut() {
            *v += T::cst(eta_y * rng.normal());
        }
    }
}
