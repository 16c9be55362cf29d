use proptest::prelude::*;
use survpower_core::formulas::*;
use survpower_core::overlap::BetaOverlap;

fn rct_events_balanced(tau: f64) -> f64 {
    // Event-scale variance at r = 1/2 equals the unit-scale variance at d = 1.
    v_rct_equal_censoring(0.5, tau, 1.0).unwrap().value
}

#[test]
fn variance_ordering_on_tau_grid() {
    for i in -40..=40 {
        let tau = i as f64 / 20.0;
        let rct = rct_events_balanced(tau);
        let freed = v_freedman(0.5, tau).unwrap().value;
        let schoen = v_schoenfeld(0.5).unwrap().value;
        if i == 0 {
            assert!((rct - freed).abs() < 1e-12 && (freed - schoen).abs() < 1e-12);
        } else {
            assert!(rct > freed && freed > schoen, "tau = {tau}: {rct} {freed} {schoen}");
        }
    }
}

#[test]
fn ratios_even_and_increasing_in_magnitude() {
    let mut prev = (1.0, 1.0);
    for i in 1..=40 {
        let tau = i as f64 / 20.0;
        let (s, f) = (ratio_schoenfeld(tau), ratio_freedman(tau));
        assert_eq!(s, ratio_schoenfeld(-tau));
        assert!((f - ratio_freedman(-tau)).abs() < 1e-15 * f);
        assert!(s > prev.0 && f > prev.1, "tau = {tau}");
        prev = (s, f);
    }
}

#[test]
fn observational_variance_dominates_and_falls_with_overlap() {
    // Along b = a (1 - r) / r the score mean stays r and overlap grows with a.
    let scales = [1.05, 1.3, 2.0, 3.5, 7.0, 20.0, 100.0, 1e4];
    for &(r, tau, d1, d0) in &[(0.5, -0.51, 0.7, 0.8), (0.3, 0.4, 0.9, 0.6), (0.7, -1.2, 0.5, 1.0)] {
        let rct = v_rct(r, tau, d1, d0).unwrap().value;
        let odds = (1.0 - r) / r;
        let mut prev = f64::INFINITY;
        for &s in &scales {
            let (a, b) = if odds >= 1.0 { (s, s * odds) } else { (s / odds, s) };
            let beta = BetaOverlap::from_ab(a, b).unwrap();
            let v = v_obs(r, tau, d1, d0, &beta).unwrap().value;
            assert!(v >= rct, "a = {a}, b = {b}");
            assert!(v < prev, "a = {a}, b = {b}");
            prev = v;
        }
        assert!((prev - rct) / rct < 1e-3);
    }
}

#[test]
fn two_sided_threshold_matches_half_alpha() {
    let v = VarianceValue::units(5.0);
    let two = raw_sample_size(v, -0.4, 0.05, 0.9, Sides::Two).unwrap();
    let one = raw_sample_size(v, -0.4, 0.025, 0.9, Sides::One).unwrap();
    assert!((two - one).abs() < 1e-12 * one);
}

proptest! {
    #[test]
    fn lambda_product_is_one(r in 0.01f64..0.99, tau in -3.0f64..3.0) {
        let l = lambda_pair(r, tau).unwrap();
        prop_assert!((l.lambda1 * l.lambda0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_symmetry(r in 0.02f64..0.98, tau in -2.5f64..2.5, d1 in 0.05f64..1.0, d0 in 0.05f64..1.0) {
        let v = v_rct(r, tau, d1, d0).unwrap().value;
        let w = v_rct(1.0 - r, -tau, d0, d1).unwrap().value;
        prop_assert!((v - w).abs() <= 1e-12 * v);
    }

    #[test]
    fn observational_variance_at_least_trial(r in 0.05f64..0.95, tau in -2.0f64..2.0, d1 in 0.05f64..1.0, d0 in 0.05f64..1.0, s in 1.001f64..500.0) {
        let odds = (1.0 - r) / r;
        let (a, b) = if odds >= 1.0 { (s, s * odds) } else { (s / odds, s) };
        let beta = BetaOverlap::from_ab(a, b).unwrap();
        let v = v_obs(r, tau, d1, d0, &beta).unwrap().value;
        let rct = v_rct(r, tau, d1, d0).unwrap().value;
        prop_assert!(v >= rct * (1.0 - 1e-12));
        let wider = BetaOverlap::from_ab(a * 1.1, b * 1.1).unwrap();
        prop_assert!(v_obs(r, tau, d1, d0, &wider).unwrap().value < v);
    }

    #[test]
    fn sample_size_monotone(v in 0.5f64..50.0, t1 in 0.05f64..2.0, dt in 0.0f64..1.0, p1 in 0.5f64..0.95, dp in 0.0f64..0.04) {
        let vv = VarianceValue::units(v);
        let small = sample_size(vv, -t1, 0.05, p1, Sides::One).unwrap();
        let large_effect = sample_size(vv, -(t1 + dt), 0.05, p1, Sides::One).unwrap();
        prop_assert!(large_effect <= small);
        let more_power = sample_size(vv, -t1, 0.05, p1 + dp, Sides::One).unwrap();
        prop_assert!(more_power >= small);
    }

    #[test]
    fn power_at_n_inverts_sample_size(v in 0.5f64..50.0, tau in 0.1f64..1.5, p in 0.55f64..0.95) {
        let vv = VarianceValue::units(v);
        let raw = raw_sample_size(vv, -tau, 0.05, p, Sides::One).unwrap();
        let back = power_at_n(vv, -tau, 0.05, raw, Sides::One).unwrap();
        prop_assert!((back - p).abs() < 1e-9);
        let n = sample_size(vv, -tau, 0.05, p, Sides::One).unwrap();
        prop_assert!(power_at_n(vv, -tau, 0.05, n as f64, Sides::One).unwrap() >= p - 1e-12);
    }

    #[test]
    fn gamma_threshold_in_unit_interval(r in 0.05f64..0.95, tau in -2.0f64..2.0) {
        match conservativeness_gamma(r, tau).unwrap() {
            Conservativeness::Threshold(g) => prop_assert!(g > 0.0 && g < 1.0, "{g}"),
            Conservativeness::NotApplicable => prop_assert!((r < 0.5) == (tau > 0.0) && r != 0.5),
            Conservativeness::TriviallyConservative => prop_assert_eq!(tau, 0.0),
        }
    }
}
