use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, AdamState};
use super::grad::{nll_and_gradients, Workspace};
use super::{forward, forward_batch, head_log_density, HeadScratch, init_network, mixture_log_density, MdnArchitecture, MdnParams};
use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use crate::series::TimeSeriesMatrix;
use crate::window::{apply_noise, compute_norm_stats, normalize, series_windows, NormStats, WindowedDataset};

/// Rows per forward pass when scoring a series.
const EVAL_CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Standard deviation of the Gaussian noise added to normalized inputs.
    pub eta_x: f64,
    /// Standard deviation of the Gaussian noise added to normalized targets.
    pub eta_y: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch_size: 512,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eta_x: 0.2,
            eta_y: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return Err(invalid("learning rate and epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("adam betas must lie in [0, 1)"));
        }
        if !(self.eta_x >= 0.0 && self.eta_y >= 0.0) {
            return Err(invalid("noise scales must be non-negative"));
        }
        Ok(())
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

/// A fitted network together with the normalization it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedMdn<T> {
    pub params: MdnParams<T>,
    pub stats: NormStats<T>,
    pub lag: usize,
    /// Mean training loss of each epoch (on noisy, normalized data).
    pub epoch_losses: Vec<f64>,
}

impl<T: Real> TrainedMdn<T> {
    pub fn arch(&self) -> &MdnArchitecture {
        self.params.arch()
    }
}

/// Fits the network by minibatch Adam on the normalized dataset.
///
/// Each epoch visits the examples in a fresh random order; each minibatch
/// gets freshly drawn input and target noise. The last batch of an epoch may
/// be smaller than `batch_size`. The final-epoch parameters are returned.
pub fn train<T: Real>(ds: &WindowedDataset<T>, arch: &MdnArchitecture, cfg: &TrainConfig) -> Result<TrainedMdn<T>> {
    cfg.validate()?;
    arch.validate()?;
    if arch.input_dim != ds.input_dim() || arch.target_dim != ds.dim() {
        return Err(invalid("architecture does not match the dataset dimensions"));
    }
    let stats = compute_norm_stats(ds)?;
    let nd = normalize(ds, &stats)?;
    let mut params = init_network::<T>(arch, cfg.seed)?;
    let mut grads = MdnParams::zeros(arch)?;
    let mut adam = AdamState::new(params.as_slice().len());
    let mut ws = Workspace::new();
    let mut rng = SimRng::with_stream(cfg.seed, 1);
    let hp = cfg.hyper();

    let (din, n) = (ds.input_dim(), ds.dim());
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * din);
    let mut by = Vec::with_capacity(cfg.batch_size * n);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut weighted = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            bx.clear();
            by.clear();
            for &i in idx {
                bx.extend_from_slice(nd.input(i));
                by.extend_from_slice(nd.target(i));
            }
            apply_noise(&mut bx, &mut by, cfg.eta_x, cfg.eta_y, &mut rng);
            let loss = nll_and_gradients(&params, &bx, &by, idx.len(), &mut grads, &mut ws).map_err(|e| match e {
                Error::TrainingDiverged { loss, .. } => Error::TrainingDiverged { epoch, batch, loss },
                other => other,
            })?;
            params.adam_update(&mut adam, &grads, hp);
            weighted += loss * idx.len() as f64;
        }
        let mean = weighted / ds.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    if !params.is_finite() {
        return Err(Error::TrainingDiverged { epoch: cfg.epochs - 1, batch: 0, loss: f64::NAN });
    }
    Ok(TrainedMdn { params, stats, lag: ds.lag(), epoch_losses })
}

/// Log density of `y` given the raw window `x`, on the original scale of `y`.
pub fn eval_log_density<T: Real>(model: &TrainedMdn<T>, x: &[T], y: &[T]) -> Result<f64> {
    let arch = model.arch();
    if x.len() != arch.input_dim || y.len() != arch.target_dim {
        return Err(invalid("window or target has the wrong dimension"));
    }
    let mut xn = x.to_vec();
    let mut yn = y.to_vec();
    model.stats.normalize_input(&mut xn);
    model.stats.normalize_target(&mut yn);
    let mix = forward(&model.params, &xn)?;
    Ok(mixture_log_density(&mix, &yn) - model.stats.log_target_scale())
}

/// Density of `y` given the raw window `x`.
pub fn eval_density<T: Real>(model: &TrainedMdn<T>, x: &[T], y: &[T]) -> Result<f64> {
    eval_log_density(model, x, y).map(f64::exp)
}

/// `sum_t log f(x_{t+L} | x_t, ..., x_{t+L-1})` over the series.
///
/// Returns negative infinity when any factor vanishes.
pub fn mdn_log_likelihood<T: Real>(model: &TrainedMdn<T>, series: &TimeSeriesMatrix<T>) -> Result<f64> {
    let arch = model.arch();
    if series.dim() != arch.target_dim {
        return Err(invalid("series dimension does not match the model"));
    }
    let ds = series_windows(series, model.lag)?;
    let nd = normalize(&ds, &model.stats)?;
    let (din, n, k) = (arch.input_dim, arch.target_dim, arch.components);
    let width = arch.head_width();
    let mut acts = Vec::new();
    let mut sc = HeadScratch::new(k, n);
    let mut total = 0.0;
    let mut start = 0;
    while start < nd.len() {
        let rows = EVAL_CHUNK.min(nd.len() - start);
        forward_batch(&model.params, &nd.inputs()[start * din..(start + rows) * din], rows, &mut acts);
        let out = &acts[model.params.head()];
        for r in 0..rows {
            let y = &nd.targets()[(start + r) * n..(start + r + 1) * n];
            let ld = head_log_density(&out[r * width..(r + 1) * width], y, k, n, &mut sc, None);
            if ld == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            total += ld;
        }
        start += rows;
    }
    Ok(total - nd.len() as f64 * model.stats.log_target_scale())
}
