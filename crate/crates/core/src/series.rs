//! Simulated and empirical series.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::params::ParameterVector;
use crate::real::Real;

/// A `len x dim` series stored row-major (one row per time step).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TimeSeriesMatrix<T> {
    data: Vec<T>,
    len: usize,
    dim: usize,
    /// Seed the series was simulated with, if any.
    pub seed: Option<u64>,
}

impl<T: Real> TimeSeriesMatrix<T> {
    pub fn new(data: Vec<T>, dim: usize, seed: Option<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("series dimension must be positive"));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(invalid(format!(
                "series buffer of {} values is not a positive multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("series contains non-finite values"));
        }
        let len = data.len() / dim;
        Ok(Self { data, len, dim, seed })
    }

    /// Univariate series.
    pub fn univariate(values: Vec<T>) -> Result<Self> {
        Self::new(values, 1, None)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Values of dimension `j` over time.
    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.data.iter().skip(j).step_by(self.dim).copied()
    }

    /// Converts the scalar type (e.g. an `f64` simulation to `f32` for training).
    pub fn cast<U: Real>(&self) -> TimeSeriesMatrix<U> {
        TimeSeriesMatrix {
            data: self.data.iter().map(|v| U::cst(v.f64())).collect(),
            len: self.len,
            dim: self.dim,
            seed: self.seed,
        }
    }

    /// Drops the first `n` rows.
    pub fn skip(&self, n: usize) -> Result<Self> {
        if n >= self.len {
            return Err(invalid(format!("cannot drop {n} of {} rows", self.len)));
        }
        Ok(Self {
            data: self.data[n * self.dim..].to_vec(),
            len: self.len - n,
            dim: self.dim,
            seed: self.seed,
        })
    }
}

/// Series of first differences, `out[t] = x[t+1] - x[t]`.
pub fn first_difference<T: Real>(series: &TimeSeriesMatrix<T>) -> Result<TimeSeriesMatrix<T>> {
    if series.len() < 2 {
        return Err(invalid("first difference needs at least two observations"));
    }
    let d = series.dim();
    let src = series.as_slice();
    let data: Vec<T> = (d..src.len()).map(|i| src[i] - src[i - d]).collect();
    TimeSeriesMatrix::new(data, d, series.seed)
}

/// `R` replications of one simulator with seeds `base_seed + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<T> {
    replications: Vec<TimeSeriesMatrix<T>>,
    pub base_seed: u64,
    pub theta: Option<ParameterVector>,
}

impl<T: Real> Ensemble<T> {
    pub fn new(
        replications: Vec<TimeSeriesMatrix<T>>,
        base_seed: u64,
        theta: Option<ParameterVector>,
    ) -> Result<Self> {
        let first = replications.first().ok_or_else(|| invalid("ensemble needs a replication"))?;
        let (len, dim) = (first.len(), first.dim());
        if replications.iter().any(|r| r.len() != len || r.dim() != dim) {
            return Err(invalid("replications differ in length or dimension"));
        }
        Ok(Self { replications, base_seed, theta })
    }

    pub fn replications(&self) -> &[TimeSeriesMatrix<T>] {
        &self.replications
    }

    pub fn count(&self) -> usize {
        self.replications.len()
    }

    pub fn series_len(&self) -> usize {
        self.replications[0].len()
    }

    pub fn dim(&self) -> usize {
        self.replications[0].dim()
    }

    /// Applies `f` to every replication.
    pub fn map<U: Real>(
        &self,
        f: impl Fn(&TimeSeriesMatrix<T>) -> Result<TimeSeriesMatrix<U>>,
    ) -> Result<Ensemble<U>> {
        let reps = self.replications.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ensemble::new(reps, self.base_seed, self.theta.clone())
    }
}
