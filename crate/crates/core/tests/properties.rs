use proptest::prelude::*;
use simest::bench::{aggregate_metrics, PosteriorSummary};
use simest::kde::kde_log_likelihood;
use simest::likelihood::{EstimationProblem, FnDensity, Method};
use simest::mdn::{forward, init_network, MdnArchitecture};
use simest::models::{ModelConfig, RandomWalkBreakConfig};
use simest::sampler::{run_chain, McmcConfig};
use simest::series::{Ensemble, TimeSeriesMatrix};
use simest::window::build_windows;
use simest::{Interval, SimRng};

fn rw(d1: f64, d2: f64, sigma1: f64, sigma2: f64, tau: usize) -> ModelConfig {
    ModelConfig::RandomWalkBreak(RandomWalkBreakConfig { d1, d2, sigma1, sigma2, tau, x_init: 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulators_are_pure_functions_of_seed(seed in any::<u64>(), len in 51usize..300) {
        let m = rw(0.1, -0.2, 1.0, 0.5, 50);
        let a = m.simulate::<f64>(len, seed).unwrap();
        prop_assert_eq!(&a, &m.simulate::<f64>(len, seed).unwrap());
        prop_assert_ne!(a, m.simulate::<f64>(len, seed.wrapping_add(1)).unwrap());
    }

    #[test]
    fn noiseless_walk_is_piecewise_linear(d1 in -1.0f64..1.0, d2 in -1.0f64..1.0, tau in 1usize..60, extra in 1usize..120) {
        let len = tau + extra;
        let x = rw(d1, d2, 0.0, 0.0, tau).simulate::<f64>(len, 3).unwrap();
        for (i, &v) in x.as_slice().iter().enumerate() {
            let t = i + 1;
            let expect = d1 * t.min(tau) as f64 + d2 * t.saturating_sub(tau) as f64;
            prop_assert!((v - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn windows_follow_their_inputs(n in 4usize..40, reps in 1usize..5, lag in 1usize..4) {
        let lens = vec![n; reps];
        let mut next = 0.0;
        let reps: Vec<TimeSeriesMatrix<f64>> = lens
            .iter()
            .map(|&n| {
                let v: Vec<f64> = (0..n).map(|_| { next += 1.0; next }).collect();
                TimeSeriesMatrix::univariate(v).unwrap()
            })
            .collect();
        let ens = Ensemble::new(reps, 0, None).unwrap();
        let ds = build_windows(&ens, lag).unwrap();
        prop_assert_eq!(ds.len(), lens.iter().map(|n| n - lag).sum::<usize>());
        // values are consecutive within a replication, so the target is the
        // last input plus one
        for m in 0..ds.len() {
            let x = ds.input(m);
            prop_assert_eq!(ds.target(m)[0], x[lag - 1] + 1.0);
            prop_assert!(x.windows(2).all(|w| w[1] == w[0] + 1.0));
        }
    }

    #[test]
    fn mixture_weights_form_a_distribution(seed in any::<u64>(), w in proptest::collection::vec(-50.0f64..50.0, 3)) {
        let arch = MdnArchitecture { input_dim: 3, hidden: vec![16, 16], components: 6, target_dim: 1 };
        let p = init_network::<f64>(&arch, seed).unwrap();
        let mix = forward(&p, &w).unwrap();
        prop_assert!(((mix.alpha.iter().sum::<f64>()) - 1.0).abs() <= 1e-9);
        prop_assert!(mix.alpha.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn kde_likelihood_ignores_time_order(seed in any::<u64>(), t in 2usize..40) {
        let mut rng = SimRng::new(seed);
        let reps = (0..3).map(|_| TimeSeriesMatrix::univariate((0..50).map(|_| rng.normal()).collect()).unwrap()).collect();
        let ens = Ensemble::new(reps, 0, None).unwrap();
        let mut emp: Vec<f64> = (0..t).map(|_| 2.0 * rng.normal()).collect();
        let a = kde_log_likelihood(&ens, &TimeSeriesMatrix::univariate(emp.clone()).unwrap(), 0).unwrap();
        rng.shuffle(&mut emp);
        let b = kde_log_likelihood(&ens, &TimeSeriesMatrix::univariate(emp).unwrap(), 0).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn sampler_moves_one_member_at_a_time_inside_the_box(seed in any::<u64>()) {
        let bounds = vec![Interval::new(-1.0, 2.0).unwrap(), Interval::new(0.0, 0.5).unwrap()];
        let target = FnDensity::new(bounds.clone(), |t: &[f64]| -4.0 * (t[0] - 0.3).powi(2) - t[1]);
        let cfg = McmcConfig { iterations: 60, set_size: 5, burn_in: 10, restarts: 2, seed, ..McmcConfig::default() };
        let s = run_chain(&target, &cfg).unwrap();
        prop_assert!(s.rows().all(|r| bounds.iter().zip(r).all(|(b, &v)| b.contains(v))));
        for r in 0..s.restarts() {
            let sets: Vec<&[f64]> = s.restart_values(r).chunks_exact(10).collect();
            for pair in sets.windows(2) {
                let changed = pair[0].chunks_exact(2).zip(pair[1].chunks_exact(2)).filter(|(a, b)| a != b).count();
                prop_assert!(changed <= 1);
            }
        }
        prop_assert_eq!(s, run_chain(&target, &cfg).unwrap());
    }

    #[test]
    fn aggregate_percentages_are_bounded(mu in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0, 0.01f64..1.0), 1..8)) {
        let summary = |m: f64, s: f64| PosteriorSummary {
            names: vec!["a".into()],
            mu_posterior: vec![m],
            sigma_posterior: vec![s],
            sigma_sampling: None,
            ls: Some((m - 0.5).abs()),
            theta_true: Some(vec![0.5]),
            acceptance_rates: vec![],
        };
        let pairs: Vec<_> = mu.iter().map(|&(a, b, sa, sb)| (summary(a, sa), summary(b, sb))).collect();
        let m = aggregate_metrics(&pairs).unwrap();
        for v in [m.ls_better, m.error_better, m.std_better] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        prop_assert_eq!(m, aggregate_metrics(&pairs).unwrap());
    }
}

fn tiny_problem() -> EstimationProblem {
    let truth = rw(0.4, 0.5, 1.0, 2.0, 70);
    let emp = truth.simulate::<f64>(100, 1).unwrap();
    let free = vec![("d1".to_string(), Interval::new(0.0, 1.0).unwrap()), ("d2".to_string(), Interval::new(0.0, 1.0).unwrap())];
    let mut p = EstimationProblem::new(truth, free, &emp, Method::Kde).unwrap();
    p.replications = 5;
    p
}

#[test]
fn prior_offset_is_constant_and_preprocessing_shortens_series() {
    let p = tiny_problem();
    assert_eq!(p.empirical().len(), 99);
    assert_eq!(p.simulate(&[0.2, 0.2]).unwrap().series_len(), 99);
    let mut rng = SimRng::new(5);
    let offsets: Vec<f64> = (0..10)
        .map(|_| {
            let th = [rng.uniform(), rng.uniform()];
            p.log_posterior(&th).unwrap() - p.log_likelihood(&th).unwrap()
        })
        .collect();
    assert!(offsets.iter().all(|&o| o == offsets[0]));
    assert_eq!(offsets[0], p.log_prior());
}

#[test]
fn estimation_end_to_end_stays_in_box() {
    let p = tiny_problem();
    let cfg = McmcConfig { iterations: 40, set_size: 6, burn_in: 10, restarts: 2, seed: 3, ..McmcConfig::default() };
    let s = run_chain(&p, &cfg).unwrap();
    assert_eq!(s.len(), 2 * 30 * 6);
    assert!(s.rows().all(|r| r.iter().all(|v| (0.0..=1.0).contains(v))));
    assert_eq!(s, run_chain(&p, &cfg).unwrap());
}
