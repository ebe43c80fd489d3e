//! Named parameter vectors with box bounds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("bound [{lo}, {hi}] must satisfy lo < hi")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Maps `v` affinely so that `lo -> 0` and `hi -> 1`.
    #[inline]
    pub fn to_unit(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

/// Ordered free-parameter values with per-parameter bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    names: Vec<String>,
    values: Vec<f64>,
    bounds: Vec<Interval>,
    /// Set for out-of-support proposals; such vectors may violate their bounds.
    #[serde(default)]
    out_of_support: bool,
}

impl ParameterVector {
    /// Builds an in-support vector. Values outside their bounds are rejected.
    pub fn new(names: Vec<String>, values: Vec<f64>, bounds: Vec<Interval>) -> Result<Self> {
        let pv = Self::proposal(names, values, bounds)?;
        if !pv.in_support() {
            return Err(invalid("parameter value outside its bounds"));
        }
        Ok(Self { out_of_support: false, ..pv })
    }

    /// Builds a vector that may lie outside the box (flagged when it does).
    pub fn proposal(names: Vec<String>, values: Vec<f64>, bounds: Vec<Interval>) -> Result<Self> {
        if names.len() != values.len() || names.len() != bounds.len() {
            return Err(invalid(format!(
                "parameter vector lengths differ: {} names, {} values, {} bounds",
                names.len(),
                values.len(),
                bounds.len()
            )));
        }
        for b in &bounds {
            Interval::new(b.lo, b.hi)?;
        }
        let mut pv = Self { names, values, bounds, out_of_support: false };
        pv.out_of_support = !pv.in_support();
        Ok(pv)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_out_of_support(&self) -> bool {
        self.out_of_support
    }

    pub fn in_support(&self) -> bool {
        self.values.iter().zip(&self.bounds).all(|(v, b)| b.contains(*v))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Same names and bounds, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::proposal(self.names.clone(), values, self.bounds.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Vec<Interval> {
        vec![Interval::new(0.0, 1.0).unwrap(); n]
    }

    #[test]
    fn rejects_bad_bounds_and_lengths() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(ParameterVector::new(vec!["a".into()], vec![0.5, 0.1], unit(1)).is_err());
    }

    #[test]
    fn out_of_support_only_as_flagged_proposal() {
        assert!(ParameterVector::new(vec!["a".into()], vec![1.5], unit(1)).is_err());
        let p = ParameterVector::proposal(vec!["a".into()], vec![1.5], unit(1)).unwrap();
        assert!(p.is_out_of_support());
        let q = ParameterVector::proposal(vec!["a".into()], vec![0.5], unit(1)).unwrap();
        assert!(!q.is_out_of_support());
        assert_eq!(q.get("a"), Some(0.5));
    }
}
