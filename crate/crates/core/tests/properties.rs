use covertseq::calibration::{calibrate_cusum, calibrate_shewhart, calibrate_sr, delay_phi0, solve_phi0};
use covertseq::covert::{covert_prob_shewhart, cusum_cond_cdf, sr_cond_cdf, CusumModel};
use covertseq::detectors::Detector;
use covertseq::montecarlo::estimate_covert_prob;
use covertseq::optimizer::{
    approx_shewhart, covert_sequences, exhaustive_shewhart, lmax_shewhart, optimal_q_for_l_shewhart, shewhart_feasible, utility,
    SearchGrid,
};
use covertseq::signal::{normalize, omega, Phase};
use covertseq::TestKind;
use proptest::prelude::*;

fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![Just(Phase::Pre), Just(Phase::Post)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shewhart_covert_is_a_probability_decreasing_in_duration_and_power(
        q in 0.01f64..3.0, dq in 0.001f64..1.0, l in 1u64..200, gamma in 2.0f64..5000.0,
    ) {
        let at = |q: f64, l: u64| covert_prob_shewhart(q, l, gamma).unwrap().value;
        let v = at(q, l);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(at(q, l + 1) <= v);
        prop_assert!(at(q + dq, l) <= v);
    }

    #[test]
    fn conditional_cdfs_are_monotone_probabilities(
        q in 0.01f64..2.0, u in 0.0f64..30.0, x in 0.0f64..60.0, dx in 0.0f64..5.0, ph in phase(),
    ) {
        for cdf in [cusum_cond_cdf, sr_cond_cdf] {
            let a = cdf(x, u, q, ph).unwrap();
            let b = cdf(x + dx, u, q, ph).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn post_change_statistic_is_stochastically_larger(
        q in 0.01f64..2.0, u in 0.0f64..30.0, x in 0.0f64..60.0,
    ) {
        for cdf in [cusum_cond_cdf, sr_cond_cdf] {
            prop_assert!(cdf(x, u, q, Phase::Post).unwrap() <= cdf(x, u, q, Phase::Pre).unwrap() + 1e-15);
        }
    }

    #[test]
    fn omega_exceeds_one_and_grows_with_power(q in 1e-4f64..10.0, dq in 1e-4f64..1.0) {
        prop_assert!(omega(q) > 1.0);
        prop_assert!(omega(q + dq) > omega(q));
    }

    #[test]
    fn normalization_divides_out_adversary_noise(
        q in 0.0f64..10.0, w in 0.01f64..100.0, b in 0.01f64..100.0,
    ) {
        let c = normalize(q * w, w, b).unwrap();
        prop_assert!((c.q - q).abs() <= 1e-12 * q.max(1.0));
        prop_assert!((c.sigma_ratio - w / b).abs() <= 1e-12 * (w / b));
    }

    #[test]
    fn sr_threshold_scales_with_gamma(q in 0.01f64..2.0, gamma in 200.0f64..5000.0) {
        prop_assume!(gamma / (1.0 + q) >= 1.0 / q);
        let s = calibrate_sr(gamma, q).unwrap();
        prop_assert!((s.eta_r * (1.0 + q) - gamma).abs() <= 1e-9 * gamma);
        prop_assert!((s.arl_at_zero - gamma).abs() <= 1e-9 * gamma);
    }

    #[test]
    fn shewhart_threshold_is_log_gamma(gamma in 1.5f64..1e6) {
        prop_assert!((calibrate_shewhart(gamma).unwrap() - gamma.ln()).abs() < 1e-12);
    }

    #[test]
    fn active_constraint_power_meets_theta_exactly(
        gamma in 60.0f64..5000.0, theta in 0.5f64..0.999, l in 1u64..50,
    ) {
        prop_assume!(shewhart_feasible(gamma, theta));
        prop_assume!(l <= lmax_shewhart(gamma, theta).unwrap());
        let q = optimal_q_for_l_shewhart(l, gamma, theta).unwrap();
        prop_assume!(q > 0.0);
        let v = covert_prob_shewhart(q, l, gamma).unwrap().value;
        prop_assert!((v - theta).abs() < 1e-9);
    }

    #[test]
    fn approximation_never_beats_exhaustive(
        gamma in 60.0f64..5000.0, theta in 0.8f64..0.99, ratio in 0.1f64..10.0,
    ) {
        prop_assume!(shewhart_feasible(gamma, theta));
        let exact = exhaustive_shewhart(gamma, theta, ratio).unwrap();
        let approx = approx_shewhart(gamma, theta, ratio).unwrap();
        prop_assert!(approx.i_star <= exact.i_star + 1e-12);
        prop_assert!(exact.covert >= theta - 1e-9);
        prop_assert!(approx.covert >= theta - 1e-9);
    }

    #[test]
    fn utility_grows_with_power_duration_and_ratio(
        q in 0.0f64..5.0, l in 1u64..1000, r in 0.01f64..10.0,
    ) {
        let u = utility(q, l, r);
        prop_assert!(utility(q, l + 1, r) >= u);
        prop_assert!(utility(q + 0.1, l, r) > u);
        prop_assert!(utility(q, l, r * 2.0) >= u);
    }

    #[test]
    fn grid_powers_are_increasing_and_in_bounds(
        lo in 1e-3f64..1.0, span in 1e-2f64..3.0, dq in 1e-3f64..0.5,
    ) {
        let grid = SearchGrid { q_min: lo, q_max: lo + span, dq, ..SearchGrid::default() };
        let p = grid.powers();
        prop_assert_eq!(p[0], lo);
        prop_assert!(p.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(*p.last().unwrap() <= lo + span + 1e-9);
        prop_assert!(*p.last().unwrap() + dq > lo + span - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn delay_equation_agrees_with_closed_form_for_short_thresholds(
        q in 0.05f64..1.0, k in 0.5f64..3.0,
    ) {
        // With η below a few ω the alternating closed form is well conditioned.
        let w = omega(q);
        let eta = k * w;
        let delay = delay_phi0(eta, w).unwrap().phi0;
        let closed = solve_phi0(eta, w, q).unwrap().phi0;
        prop_assert!(((delay - closed) / closed).abs() < 1e-8, "{} vs {}", delay, closed);
    }

    #[test]
    fn cusum_covert_decreases_along_duration(q in 0.05f64..1.0, nu in 0u64..60) {
        let eta = calibrate_cusum(200.0, q).unwrap().eta_hat_c;
        let mut model = CusumModel::new(q, eta).unwrap();
        let law = model.law(nu).unwrap();
        let mut prev = 1.0;
        for l in 1..=20 {
            let v = model.covert_with_law(l, &law).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev + 1e-10, "L = {}: {} after {}", l, v, prev);
            prev = v;
        }
    }

    #[test]
    fn sequences_start_below_one_and_respect_the_cap(q in 0.05f64..1.0, cap in 1u64..30) {
        let grid = SearchGrid { l_cap: cap, sr_nodes: 200, ..SearchGrid::default() };
        for test in TestKind::ALL {
            let seqs = covert_sequences(test, q, 500.0, &[0, 10], 0.0, &grid).unwrap();
            for s in seqs {
                prop_assert_eq!(s.values.len() as u64, cap);
                prop_assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_per_seed(seed in any::<u64>(), nu in 0u64..20) {
        let det = Detector::new(TestKind::Cusum, 0.3, 4.0).unwrap();
        let a = estimate_covert_prob(&det, nu, 5, 2000, seed).unwrap();
        let b = estimate_covert_prob(&det, nu, 5, 2000, seed).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.n_kept <= a.n_trials);
    }
}
