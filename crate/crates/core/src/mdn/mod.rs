//! Mixture density network: a ReLU multilayer perceptron whose final layer
//! parameterizes a diagonal Gaussian mixture over the next observation.

mod adam;
mod grad;
mod io;
mod train;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamHyper, AdamState};
pub use grad::{nll_and_gradients, Workspace};
pub use io::{load_model, save_model};
pub use train::{eval_density, eval_log_density, mdn_log_likelihood, train, TrainConfig, TrainedMdn};

use crate::error::{invalid, Result};
use crate::real::{gemm, MatRef, Real};
use crate::rng::SimRng;

/// Variances are clamped from below to this value wherever they are used.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_VARIANCE_FLOOR: f64 = -18.420_680_743_952_367;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdnArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub components: usize,
    pub target_dim: usize,
}

impl MdnArchitecture {
    /// Three hidden layers of 32 units and 16 components.
    pub fn standard(lag: usize, dim: usize) -> Self {
        Self { input_dim: lag * dim, hidden: vec![32, 32, 32], components: 16, target_dim: dim }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.target_dim == 0 {
            return Err(invalid("network input and target dimensions must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("network needs at least one non-empty hidden layer"));
        }
        if self.components == 0 {
            return Err(invalid("mixture needs at least one component"));
        }
        Ok(())
    }

    /// Width of the head: K logits, K*n means, K*n log variances.
    pub fn head_width(&self) -> usize {
        self.components * (1 + 2 * self.target_dim)
    }

    /// `(fan_in, fan_out)` of every dense layer, head last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend_from_slice(&self.hidden);
        widths.push(self.head_width());
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// All weights and biases in one flat buffer.
///
/// Layer `l` occupies a `fan_in x fan_out` row-major weight block followed
/// by its `fan_out` biases. The head columns are ordered as mixture logits,
/// then means (component-major), then log variances (component-major).
#[derive(Clone, Debug, PartialEq)]
pub struct MdnParams<T> {
    arch: MdnArchitecture,
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> MdnParams<T> {
    pub fn zeros(arch: &MdnArchitecture) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut total = 0;
        for (i, o) in &shapes {
            offsets.push(total);
            total += i * o + o;
        }
        Ok(Self { arch: arch.clone(), shapes, offsets, data: vec![T::zero(); total] })
    }

    pub fn arch(&self) -> &MdnArchitecture {
        &self.arch
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn shape(&self, layer: usize) -> (usize, usize) {
        self.shapes[layer]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        let (i, o) = self.shapes[layer];
        &self.data[self.offsets[layer]..self.offsets[layer] + i * o]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        let (i, o) = self.shapes[layer];
        let start = self.offsets[layer] + i * o;
        &self.data[start..start + o]
    }

    /// Mutable weights and bias of one layer.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut [T], &mut [T]) {
        let (i, o) = self.shapes[layer];
        let start = self.offsets[layer];
        self.data[start..start + i * o + o].split_at_mut(i * o)
    }

    pub fn head(&self) -> usize {
        self.shapes.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> MdnParams<U> {
        MdnParams {
            arch: self.arch.clone(),
            shapes: self.shapes.clone(),
            offsets: self.offsets.clone(),
            data: self.data.iter().map(|v| U::cst(v.f64())).collect(),
        }
    }

    pub(crate) fn from_data(arch: &MdnArchitecture, data: Vec<T>) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if data.len() != p.data.len() {
            return Err(invalid("weight buffer does not match the architecture"));
        }
        p.data = data;
        Ok(p)
    }
}

/// Hidden weights uniform in `+-sqrt(6 / fan_in)` (He), head weights uniform
/// in `+-1/sqrt(fan_in)`, all biases zero.
///
/// Zero head biases mean every component starts at unit variance.
pub fn init_network<T: Real>(arch: &MdnArchitecture, seed: u64) -> Result<MdnParams<T>> {
    let mut params = MdnParams::zeros(arch)?;
    let mut rng = SimRng::new(seed);
    let head = params.head();
    for l in 0..params.num_layers() {
        let (fan_in, _) = params.shape(l);
        let limit = if l == head { 1.0 / (fan_in as f64).sqrt() } else { (6.0 / fan_in as f64).sqrt() };
        let (w, _) = params.layer_mut(l);
        for v in w.iter_mut() {
            *v = T::cst(rng.uniform_in(-limit, limit));
        }
    }
    Ok(params)
}

/// Mixture parameters produced for one input window.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureOutput<T> {
    pub alpha: Vec<T>,
    /// `K x n`, component-major.
    pub mu: Vec<T>,
    /// `K x n`, component-major.
    pub log_var: Vec<T>,
}

impl<T: Real> MixtureOutput<T> {
    pub fn components(&self) -> usize {
        self.alpha.len()
    }

    pub fn target_dim(&self) -> usize {
        self.mu.len() / self.alpha.len()
    }
}

/// Runs the network on `rows` stacked inputs. `acts[l]` receives the output
/// of layer `l` (after the rectifier for hidden layers, raw for the head).
pub(crate) fn forward_batch<T: Real>(params: &MdnParams<T>, x: &[T], rows: usize, acts: &mut Vec<Vec<T>>) {
    acts.resize_with(params.num_layers(), Vec::new);
    let head = params.head();
    for l in 0..params.num_layers() {
        let (fan_in, fan_out) = params.shape(l);
        let (prev, rest) = acts.split_at_mut(l);
        let input: &[T] = if l == 0 { x } else { &prev[l - 1] };
        let out = &mut rest[0];
        out.clear();
        let b = params.bias(l);
        for _ in 0..rows {
            out.extend_from_slice(b);
        }
        gemm(MatRef::new(input, rows, fan_in), MatRef::new(params.weights(l), fan_in, fan_out), T::one(), out);
        if l != head {
            for v in out.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }
}

fn split_head<T: Real>(out: &[T], k: usize, n: usize) -> (&[T], &[T], &[T]) {
    let (logits, rest) = out.split_at(k);
    let (mu, lv) = rest.split_at(k * n);
    (logits, mu, lv)
}

/// Variance and its log after applying the floor.
#[inline]
fn floored_variance(log_var: f64) -> (f64, f64) {
    if log_var > LN_VARIANCE_FLOOR {
        (log_var.exp(), log_var)
    } else {
        (VARIANCE_FLOOR, LN_VARIANCE_FLOOR)
    }
}

/// Per-row scratch space for [`head_log_density`].
#[derive(Debug, Default)]
pub(crate) struct HeadScratch<T> {
    /// `exp(logit - max logit)`
    weight: Vec<T>,
    /// Log of each weighted component density, then its exponential.
    comp: Vec<T>,
    inv_var: Vec<T>,
}

impl<T: Real> HeadScratch<T> {
    pub(crate) fn new(k: usize, n: usize) -> Self {
        Self { weight: vec![T::zero(); k], comp: vec![T::zero(); k], inv_var: vec![T::zero(); k * n] }
    }

    pub(crate) fn fits(&self, k: usize, n: usize) -> bool {
        self.comp.len() == k && self.inv_var.len() == k * n
    }
}

/// Mixture log density of `y` given one row of head output, computed in the
/// network's precision.
///
/// With `grad`, also writes `scale * d(-log density)/d(head output)` into it.
pub(crate) fn head_log_density<T: Real>(
    out: &[T],
    y: &[T],
    k: usize,
    n: usize,
    sc: &mut HeadScratch<T>,
    grad: Option<(&mut [T], T)>,
) -> f64 {
    let (logits, mu, lv) = split_head(out, k, n);
    let (weight, comp, inv_var) = (&mut sc.weight[..k], &mut sc.comp[..k], &mut sc.inv_var[..k * n]);
    let y = &y[..n];
    let floor = T::cst(VARIANCE_FLOOR);
    let ln_floor = T::cst(LN_VARIANCE_FLOOR);
    let half = T::cst(0.5);

    let lmax = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut wsum = T::zero();
    for (w, &l) in weight.iter_mut().zip(logits) {
        *w = (l - lmax).exp();
        wsum += *w;
    }
    let log_norm = lmax + wsum.ln() + T::cst(0.5 * n as f64 * LN_2PI);
    let mut cmax = T::neg_infinity();
    for c in 0..k {
        let (mu_c, lv_c, iv_c) = (&mu[c * n..(c + 1) * n], &lv[c * n..(c + 1) * n], &mut inv_var[c * n..(c + 1) * n]);
        let mut s = T::zero();
        for j in 0..n {
            let (iv, ln_v) = if lv_c[j] > ln_floor { ((-lv_c[j]).exp(), lv_c[j]) } else { (floor.recip(), ln_floor) };
            iv_c[j] = iv;
            let r = y[j] - mu_c[j];
            s += ln_v + r * r * iv;
        }
        let lc = logits[c] - log_norm - half * s;
        comp[c] = lc;
        cmax = cmax.max(lc);
    }
    if cmax == T::neg_infinity() {
        return f64::NEG_INFINITY;
    }
    let mut csum = T::zero();
    for lc in comp.iter_mut() {
        *lc = (*lc - cmax).exp();
        csum += *lc;
    }
    let total = cmax.f64() + csum.f64().ln();
    if let Some((g, scale)) = grad {
        let (g_logit, g_rest) = g.split_at_mut(k);
        let (g_mu, g_lv) = g_rest.split_at_mut(k * n);
        let (inv_c, inv_w) = (scale / csum, scale / wsum);
        for c in 0..k {
            let gamma = comp[c] * inv_c;
            g_logit[c] = weight[c] * inv_w - gamma;
            for j in 0..n {
                let i = c * n + j;
                let iv = inv_var[i];
                let rv = (y[j] - mu[i]) * iv;
                g_mu[i] = -gamma * rv;
                g_lv[i] = if lv[i] > ln_floor { half * gamma * (T::one() - rv * (y[j] - mu[i])) } else { T::zero() };
            }
        }
    }
    total
}

/// Mixture parameters for a single window.
pub fn forward<T: Real>(params: &MdnParams<T>, window: &[T]) -> Result<MixtureOutput<T>> {
    let arch = params.arch();
    if window.len() != arch.input_dim {
        return Err(invalid(format!("window has {} values, network expects {}", window.len(), arch.input_dim)));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(invalid("window contains non-finite values"));
    }
    let mut acts = Vec::new();
    forward_batch(params, window, 1, &mut acts);
    let (k, n) = (arch.components, arch.target_dim);
    let (logits, mu, lv) = split_head(&acts[params.head()], k, n);
    let lmax = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - lmax).exp()).collect();
    let z: T = e.iter().copied().sum();
    Ok(MixtureOutput { alpha: e.into_iter().map(|v| v / z).collect(), mu: mu.to_vec(), log_var: lv.to_vec() })
}

/// `log sum_k alpha_k N(y | mu_k, diag(sigma_k^2))`, with floored variances.
pub fn mixture_log_density<T: Real>(mix: &MixtureOutput<T>, y: &[T]) -> f64 {
    let (k, n) = (mix.components(), mix.target_dim());
    assert_eq!(y.len(), n, "target dimension mismatch");
    let mut terms = Vec::with_capacity(k);
    for c in 0..k {
        let mut s = 0.0;
        for j in 0..n {
            let (v, ln_v) = floored_variance(mix.log_var[c * n + j].f64());
            let r = y[j].f64() - mix.mu[c * n + j].f64();
            s += LN_2PI + ln_v + r * r / v;
        }
        terms.push(mix.alpha[c].f64().ln() - 0.5 * s);
    }
    crate::real::log_sum_exp(&terms)
}
