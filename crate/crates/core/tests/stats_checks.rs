mod common;

use gadforge::rng::Stream;
use gadforge::stats::gmm::{fit_gmm, fit_gmm_k, sample_gmm, GmmModel};
use gadforge::stats::kmeans::kmeans;
use gadforge::stats::ks::{ks_matrix, ks_p_value, ks_two_sample};
use ndarray::{array, Array2};
use proptest::prelude::*;

use common::{brute_force_d, mixture_data};

fn small_sample() -> impl Strategy<Value = Vec<f64>> {
    // coarse grid values so ties are common
    prop::collection::vec((0i32..20).prop_map(|v| v as f64 * 0.5), 1..=50)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ks_statistic_matches_brute_force(a in small_sample(), b in small_sample()) {
        let r = ks_two_sample(&a, &b).unwrap();
        prop_assert!((r.statistic - brute_force_d(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn ks_is_symmetric(a in small_sample(), b in small_sample()) {
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn p_value_decreases_with_statistic(d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, ne in 1.0f64..5000.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(ks_p_value(hi, ne) <= ks_p_value(lo, ne));
    }
}

#[test]
fn uniform_null_rejection_rate() {
    let trials = 2000;
    let mut rejected = 0;
    for t in 0..trials {
        let mut rng = Stream::new(20, "ks-null", t);
        let a: Vec<f64> = (0..200).map(|_| rng.next_f64()).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.next_f64()).collect();
        if ks_two_sample(&a, &b).unwrap().p_value < 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / trials as f64;
    assert!((0.03..=0.07).contains(&rate), "rejection rate {rate}");
}

#[test]
fn ks_matrix_median_rule() {
    let a = Array2::from_shape_fn((300, 3), |(i, j)| ((i * 7 + j * 13) % 300) as f32 / 300.0);
    let same = ks_matrix(a.view(), a.view()).unwrap();
    assert!(same.passed);
    assert_eq!(same.median_p, 1.0);
    let shifted = a.mapv(|x| x + 0.5);
    let apart = ks_matrix(a.view(), shifted.view()).unwrap();
    assert!(!apart.passed);
    assert_eq!(apart.pass_fraction, 0.0);
}

#[test]
fn em_log_likelihood_never_decreases() {
    for seed in 0..100u64 {
        let x = mixture_data(seed, 300);
        let k = 1 + (seed % 4) as usize;
        let model = fit_gmm_k(&x, k, seed).unwrap();
        for w in model.ll_trace.windows(2) {
            assert!(w[1] >= w[0], "seed {seed}: {} -> {}", w[0], w[1]);
        }
        model.validate().unwrap();
    }
}

#[test]
fn gmm_recovers_known_mixture() {
    let truth = GmmModel {
        weights: vec![0.3, 0.7],
        means: array![[-2.0, 1.0], [3.0, 0.0]],
        variances: array![[0.5, 1.0], [1.0, 0.25]],
        log_likelihood: 0.0,
        bic: 0.0,
        ll_trace: Vec::new(),
    };
    let x = sample_gmm(&truth, 50_000, &Stream::new(20, "recovery", 0));
    let fit = fit_gmm(&x, &[2], 20).unwrap();
    let mut order: Vec<usize> = vec![0, 1];
    order.sort_by(|&a, &b| fit.means[[a, 0]].total_cmp(&fit.means[[b, 0]]));
    for (t, &f) in order.iter().enumerate() {
        for j in 0..2 {
            let err = (fit.means[[f, j]] - truth.means[[t, j]]).abs();
            assert!(err < 0.05, "component {t} dim {j}: error {err}");
        }
        assert!((fit.weights[f] - truth.weights[t]).abs() < 0.02);
    }
}

#[test]
fn bic_prefers_true_component_count() {
    let x = mixture_data(3, 3000);
    let model = fit_gmm(&x, &[1, 2, 3, 4, 5], 20).unwrap();
    assert_eq!(model.k(), 3);
}

#[test]
fn kmeans_one_dimensional_oracle() {
    let x = array![[0.0], [0.1], [10.0], [10.1]];
    let c = kmeans(x.view(), 2, 20).unwrap();
    let mut cents: Vec<f64> = c.centroids.column(0).to_vec();
    cents.sort_by(f64::total_cmp);
    assert!((cents[0] - 0.05).abs() < 1e-12);
    assert!((cents[1] - 10.05).abs() < 1e-12);
    assert_eq!(c.assignment[0], c.assignment[1]);
    assert_eq!(c.assignment[2], c.assignment[3]);
    assert_ne!(c.assignment[0], c.assignment[2]);
}

#[test]
fn kmeans_inertia_never_increases() {
    for seed in 0..30u64 {
        let x = mixture_data(seed, 400);
        let c = kmeans(x.view(), 2 + (seed % 5) as usize, seed).unwrap();
        for w in c.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {} -> {}", w[0], w[1]);
        }
        assert_eq!(c.sizes.iter().sum::<usize>(), 400);
    }
}
