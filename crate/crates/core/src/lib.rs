//! Likelihood-free Bayesian estimation of simulation models.
//!
//! A simulator is run at a candidate parameter vector, a conditional density
//! estimator (mixture density network or kernel density baseline) is fitted
//! to the simulated data, and the resulting likelihood of the observed series
//! drives a population Metropolis-Hastings sampler.

pub mod bench;
pub mod error;
pub mod kde;
pub mod likelihood;
pub mod mdn;
pub mod models;
pub mod params;
pub mod real;
pub mod rng;
pub mod sampler;
pub mod series;
pub mod window;

pub use error::{Error, Result};
pub use params::{Interval, ParameterVector};
pub use real::Real;
pub use rng::SimRng;

pub type Series = series::TimeSeriesMatrix<f64>;
pub type Series32 = series::TimeSeriesMatrix<f32>;
pub type Ensemble = series::Ensemble<f64>;
pub type Windows = window::WindowedDataset<f64>;
pub type Windows32 = window::WindowedDataset<f32>;
pub type Mdn = mdn::TrainedMdn<f64>;
pub type Mdn32 = mdn::TrainedMdn<f32>;
