//! Gaussian kernel density likelihood over observations pooled from an
//! ensemble, treating every value as an independent draw.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::series::{Ensemble, TimeSeriesMatrix};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Kernel terms whose log weight falls this far below the largest one are
/// skipped. Together they change the sum by less than `m * exp(-60)` of its
/// value, far below double precision rounding for any realistic `m`.
const LOG_CUTOFF: f64 = 60.0;

/// Observations of an ensemble stacked as one sample (row-major, `dim`
/// values per observation).
#[derive(Clone, Debug, PartialEq)]
pub struct PooledSample {
    values: Vec<f64>,
    dim: usize,
    /// Base seed of the ensemble the values came from.
    pub source_seed: Option<u64>,
}

impl PooledSample {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(invalid("pooled sample needs a positive number of complete observations"));
        }
        Ok(Self { values, dim, source_seed: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.dim).copied().collect()
    }
}

/// All observations of every replication, replication by replication.
pub fn pool_samples(ens: &Ensemble<f64>) -> PooledSample {
    pool_samples_after(ens, 0).expect("ensembles are never empty")
}

/// Like [`pool_samples`] but drops the first `discard` observations of each
/// replication.
pub fn pool_samples_after(ens: &Ensemble<f64>, discard: usize) -> Result<PooledSample> {
    if discard >= ens.series_len() {
        return Err(invalid(format!("cannot discard {discard} of {} observations", ens.series_len())));
    }
    let dim = ens.dim();
    let mut values = Vec::with_capacity(ens.count() * (ens.series_len() - discard) * dim);
    for rep in ens.replications() {
        values.extend_from_slice(&rep.as_slice()[discard * dim..]);
    }
    let mut s = PooledSample::new(values, dim)?;
    s.source_seed = Some(ens.base_seed);
    Ok(s)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `0.9 * min(std, IQR / 1.34) * m^(-1/5)` with the sample standard deviation.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::DegenerateSample("bandwidth needs at least two observations".into()));
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    // A heavy point mass can zero the IQR while the spread is still positive.
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::DegenerateSample("sample has zero spread".into()));
    }
    Ok(0.9 * spread * (m as f64).powf(-0.2))
}

/// Log of `(1 / (m h)) sum_j phi((x - v_j) / h)` for ascending `sorted`.
fn log_kde_sorted(sorted: &[f64], h: f64, x: f64) -> f64 {
    let m = sorted.len();
    let i = sorted.partition_point(|&v| v < x);
    let nearest = match (i.checked_sub(1).map(|j| x - sorted[j]), sorted.get(i).map(|v| v - x)) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("sample is non-empty"),
    };
    let z0 = nearest / h;
    let reach = h * (z0 * z0 + 2.0 * LOG_CUTOFF).sqrt();
    let lo = sorted.partition_point(|&v| v < x - reach);
    let hi = sorted.partition_point(|&v| v <= x + reach);
    let shift = 0.5 * z0 * z0;
    let sum: f64 = sorted[lo..hi]
        .iter()
        .map(|&v| {
            let z = (x - v) / h;
            (shift - 0.5 * z * z).exp()
        })
        .sum();
    -shift + sum.ln() - (m as f64 * h).ln() - LN_SQRT_2PI
}

/// Kernel density estimate at `x` from an arbitrary-order univariate sample.
pub fn gaussian_kde_density(sample: &[f64], h: f64, x: f64) -> f64 {
    assert!(h > 0.0, "bandwidth must be positive");
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    log_kde_sorted(&sorted, h, x).exp()
}

/// A fitted product-of-marginals kernel density.
#[derive(Clone, Debug)]
pub struct Kde {
    /// One ascending sample per dimension.
    sorted: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
}

impl Kde {
    /// Sorts each dimension and picks its bandwidth by Silverman's rule.
    pub fn fit(sample: &PooledSample) -> Result<Self> {
        let mut sorted = Vec::with_capacity(sample.dim());
        let mut bandwidths = Vec::with_capacity(sample.dim());
        for j in 0..sample.dim() {
            let mut col = sample.column(j);
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateSample("pooled sample has non-finite values".into()));
            }
            bandwidths.push(silverman_bandwidth(&col)?);
            col.sort_by(f64::total_cmp);
            sorted.push(col);
        }
        Ok(Self { sorted, bandwidths })
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.sorted.len(), "dimension mismatch");
        x.iter().zip(&self.sorted).zip(&self.bandwidths).map(|((&xi, s), &h)| log_kde_sorted(s, h, xi)).sum()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// `(x, density)` pairs of the first marginal on `points` evenly spaced
    /// values over `[lo, hi]`.
    pub fn curve(&self, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
        assert!(points >= 2 && hi > lo);
        let step = (hi - lo) / (points - 1) as f64;
        (0..points)
            .map(|i| {
                let x = lo + i as f64 * step;
                (x, log_kde_sorted(&self.sorted[0], self.bandwidths[0], x).exp())
            })
            .collect()
    }

    /// `sum_t log f(x_t)` over the rows of `series`.
    pub fn log_likelihood(&self, series: &TimeSeriesMatrix<f64>) -> Result<f64> {
        if series.dim() != self.sorted.len() {
            return Err(invalid("series dimension does not match the density"));
        }
        let terms: Vec<f64> = (0..series.len()).into_par_iter().map(|t| self.log_density(series.row(t))).collect();
        Ok(terms.iter().sum())
    }
}

/// Pools `ens` (after dropping `discard` leading observations per replication),
/// fits the kernel density and scores every observation of `emp`.
///
/// Zero density at some observation yields negative infinity; a sample with
/// no spread is a [`Error::DegenerateSample`].
pub fn kde_log_likelihood(ens: &Ensemble<f64>, emp: &TimeSeriesMatrix<f64>, discard: usize) -> Result<f64> {
    let kde = Kde::fit(&pool_samples_after(ens, discard)?)?;
    kde.log_likelihood(emp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;

    fn ens(reps: Vec<Vec<f64>>) -> Ensemble<f64> {
        Ensemble::new(reps.into_iter().map(|r| TimeSeriesMatrix::univariate(r).unwrap()).collect(), 3, None).unwrap()
    }

    fn normals(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = SimRng::new(seed);
        (0..m).map(|_| rng.normal()).collect()
    }

    #[test]
    fn pooling_concatenates_in_order() {
        let p = pool_samples(&ens(vec![vec![1.0, 2.0], vec![3.0, 4.0]]));
        assert_eq!(p.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.source_seed, Some(3));
        let d = pool_samples_after(&ens(vec![vec![1.0, 2.0], vec![3.0, 4.0]]), 1).unwrap();
        assert_eq!(d.values(), &[2.0, 4.0]);
    }

    #[test]
    fn pooled_size() {
        let reps = (0..100).map(|i| vec![i as f64; 1000]).collect();
        assert_eq!(pool_samples(&ens(reps)).len(), 100_000);
    }

    #[test]
    fn silverman_on_standard_normal() {
        let v = normals(10_000, 1);
        let h = silverman_bandwidth(&v).unwrap();
        assert!((h / (0.9 * 10f64.powf(-0.8)) - 1.0).abs() < 0.1, "{h}");
        let doubled: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!((silverman_bandwidth(&doubled).unwrap() - 2.0 * h).abs() < 1e-12);
        let four = [v.clone(), v.clone(), v.clone(), v].concat();
        let ratio = silverman_bandwidth(&four).unwrap() / h;
        // replicating leaves std and IQR (nearly) unchanged
        assert!((ratio - 4f64.powf(-0.2)).abs() < 1e-3);
    }

    #[test]
    fn zero_spread_is_degenerate() {
        assert!(matches!(silverman_bandwidth(&[2.0; 10]), Err(Error::DegenerateSample(_))));
        assert!(matches!(silverman_bandwidth(&[2.0]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn single_point_kernel_peak() {
        let h = 0.3;
        let d = gaussian_kde_density(&[1.5], h, 1.5);
        assert!((d - 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-14);
    }

    #[test]
    fn symmetric_pair() {
        let h = 0.7;
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let naive = (phi(1.0 / h) + phi(-1.0 / h)) / (2.0 * h);
        assert!((gaussian_kde_density(&[-1.0, 1.0], h, 0.0) - naive).abs() < 1e-12);
    }

    #[test]
    fn far_query_stays_finite_in_log_space() {
        let kde = Kde::fit(&PooledSample::new(normals(100, 2), 1).unwrap()).unwrap();
        let lp = kde.log_density(&[60.0]);
        assert!(lp.is_finite() && lp < -1000.0);
    }

    #[test]
    fn density_integrates_to_one() {
        let v = normals(100, 3);
        let kde = Kde::fit(&PooledSample::new(v, 1).unwrap()).unwrap();
        let curve = kde.curve(-12.0, 12.0, 24_001);
        let step = curve[1].0 - curve[0].0;
        let integral: f64 = curve.iter().map(|(_, d)| d).sum::<f64>() * step;
        assert!((integral - 1.0).abs() < 1e-3);
    }

    #[test]
    fn entropy_of_standard_normal() {
        let pooled = ens(vec![normals(100_000, 4)]);
        let emp = TimeSeriesMatrix::univariate(normals(1000, 5)).unwrap();
        let ll = kde_log_likelihood(&pooled, &emp, 0).unwrap() / 1000.0;
        assert!((ll + 1.418_938_533).abs() < 0.05 + 3.0 * (0.5f64).sqrt() / 1000f64.sqrt(), "{ll}");
    }

    #[test]
    fn likelihood_is_sum_of_pointwise_logs() {
        let sample = normals(200, 6);
        let h = silverman_bandwidth(&sample).unwrap();
        let emp = normals(30, 7);
        let ll = kde_log_likelihood(&ens(vec![sample.clone()]), &TimeSeriesMatrix::univariate(emp.clone()).unwrap(), 0).unwrap();
        let by_hand: f64 = emp.iter().map(|&x| gaussian_kde_density(&sample, h, x).ln()).sum();
        assert!((ll - by_hand).abs() < 1e-10 * by_hand.abs());
        let one = kde_log_likelihood(&ens(vec![sample.clone()]), &TimeSeriesMatrix::univariate(vec![emp[0]]).unwrap(), 0).unwrap();
        assert!((one - gaussian_kde_density(&sample, h, emp[0]).ln()).abs() < 1e-12);
    }

    #[test]
    fn panel_density_is_product_of_marginals() {
        let a = normals(300, 8);
        let b: Vec<f64> = normals(300, 9).iter().map(|v| 3.0 * v + 1.0).collect();
        let vals: Vec<f64> = a.iter().zip(&b).flat_map(|(x, y)| [*x, *y]).collect();
        let kde = Kde::fit(&PooledSample::new(vals, 2).unwrap()).unwrap();
        let (ha, hb) = (silverman_bandwidth(&a).unwrap(), silverman_bandwidth(&b).unwrap());
        let expect = gaussian_kde_density(&a, ha, 0.2) * gaussian_kde_density(&b, hb, 2.0);
        assert!((kde.density(&[0.2, 2.0]) - expect).abs() < 1e-14);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn permutations_do_not_matter(
            sample in proptest::collection::vec(-50.0f64..50.0, 2..80),
            emp in proptest::collection::vec(-60.0f64..60.0, 1..20),
            seed in any::<u64>(),
        ) {
            prop_assume!(silverman_bandwidth(&sample).is_ok());
            let mut rng = SimRng::new(seed);
            let mut s2 = sample.clone();
            rng.shuffle(&mut s2);
            let mut e2 = emp.clone();
            rng.shuffle(&mut e2);
            let k1 = Kde::fit(&PooledSample::new(sample, 1).unwrap()).unwrap();
            let k2 = Kde::fit(&PooledSample::new(s2, 1).unwrap()).unwrap();
            for &x in &emp {
                let (a, b) = (k1.log_density(&[x]), k2.log_density(&[x]));
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                prop_assert!(a.exp() >= 0.0);
            }
            let l1 = k1.log_likelihood(&TimeSeriesMatrix::univariate(emp).unwrap()).unwrap();
            let l2 = k1.log_likelihood(&TimeSeriesMatrix::univariate(e2).unwrap()).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0));
        }
    }
}
