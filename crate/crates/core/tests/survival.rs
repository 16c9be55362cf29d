mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use survpower_core::formulas::Sides;
use survpower_core::special::expit;
use survpower_core::survival::*;

use common::{grid_argmax, sandwich_by_hand, toy_datasets};

#[test]
fn cox_matches_grid_argmax() {
    for (k, data) in toy_datasets().iter().enumerate() {
        let fit = fit_weighted_cox(data).unwrap();
        let grid = grid_argmax(data);
        assert!(
            (fit.tau_hat - grid).abs() < 1e-5,
            "dataset {k}: {} vs {grid}",
            fit.tau_hat
        );
        assert!(fit.converged);
        assert!(fit.score.abs() < 1e-8);
        assert!(fit.information > 0.0);
    }
}

#[test]
fn robust_variance_matches_transcription() {
    for (k, data) in toy_datasets().iter().enumerate() {
        let fit = fit_weighted_cox(data).unwrap();
        let want = sandwich_by_hand(data, fit.tau_hat);
        let got = fit.robust_se.powi(2);
        assert!(
            (got - want).abs() < 1e-10 * want.max(1.0),
            "dataset {k}: {got} vs {want}"
        );
        // Also away from the estimate.
        for tau in [-1.0, 0.0, 0.7] {
            let got = robust_variance(data, tau).unwrap();
            let want = sandwich_by_hand(data, tau);
            assert!((got - want).abs() < 1e-10 * want.max(1.0), "dataset {k}, tau {tau}");
        }
    }
}

#[test]
fn information_is_negative_curvature() {
    for data in toy_datasets() {
        let fit = fit_weighted_cox(&data).unwrap();
        let h = 1e-4;
        let t = fit.tau_hat;
        let curv = -(common::log_partial_likelihood(&data, t + h) - 2.0 * common::log_partial_likelihood(&data, t)
            + common::log_partial_likelihood(&data, t - h))
            / (h * h);
        assert!((curv - fit.information).abs() < 1e-5 * fit.information);
        assert!((fit.naive_se - fit.information.powf(-0.5)).abs() < 1e-15);
        let (u, i) = cox_score(&data, t).unwrap();
        assert!(u.abs() < 1e-8 && (i - fit.information).abs() < 1e-12);
    }
}

#[test]
fn replicated_data_scales_standard_error() {
    let base = &toy_datasets()[1];
    let fit1 = fit_weighted_cox(base).unwrap();
    for copies in [2usize, 5, 10] {
        let big: Vec<SubjectRecord> = (0..copies).flat_map(|_| base.iter().cloned()).collect();
        let fit = fit_weighted_cox(&big).unwrap();
        assert!((fit.tau_hat - fit1.tau_hat).abs() < 1e-9);
        let scaled = fit.robust_se * (copies as f64).sqrt();
        assert!(
            (scaled - fit1.robust_se).abs() < 1e-8,
            "{copies}: {scaled} vs {}",
            fit1.robust_se
        );
    }
}

#[test]
fn arm_wise_rescaling_changes_the_estimate() {
    // Unlike the design effect, the Cox estimate is not invariant when only one
    // arm's weights are rescaled; only a common factor leaves it unchanged.
    let base = &toy_datasets()[0];
    let scaled: Vec<SubjectRecord> = base
        .iter()
        .map(|r| SubjectRecord {
            weight: if r.z { 2.0 } else { 1.0 },
            ..r.clone()
        })
        .collect();
    let a = fit_weighted_cox(base).unwrap().tau_hat;
    let b = fit_weighted_cox(&scaled).unwrap().tau_hat;
    assert!((a - b).abs() > 1e-3);
}

#[test]
fn one_arm_events_are_separation() {
    let data: Vec<SubjectRecord> = (0..6)
        .map(|i| SubjectRecord {
            time: i as f64 + 1.0,
            event: i % 2 == 0,
            z: i % 2 == 0,
            x: vec![],
            weight: 1.0,
        })
        .collect();
    assert_eq!(fit_weighted_cox(&data).unwrap_err().code(), "separation");
}

#[test]
fn csv_round_trip() {
    let text = "time,event,z,x2,x1,weight\n1.5,1,0,0.2,3,1.25\n2.0,0,1,-1,4,0.5\n";
    let recs = read_records(text.as_bytes()).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].x, vec![3.0, 0.2]);
    assert!(recs[1].z && !recs[1].event);
    assert_eq!(recs[1].weight, 0.5);
    assert!(read_records("time,event,z,x1,x3\n1,1,0,0,0\n".as_bytes()).is_err());
    assert!(read_records("time,event,z\n1,2,0\n".as_bytes()).is_err());
    let unit = read_records("time,event,z\n1,1,0\n".as_bytes()).unwrap();
    assert_eq!(unit[0].weight, 1.0);
}

#[test]
fn kaplan_meier_hand_values() {
    let t = [1.0, 2.0, 2.0, 3.0, 4.0];
    let e = [true, true, false, true, false];
    let km = KaplanMeier::fit(&t, &e, &[1.0; 5]);
    assert!((km.survival(0.5) - 1.0).abs() < 1e-15);
    assert!((km.survival(1.0) - 0.8).abs() < 1e-15);
    assert!((km.survival(2.5) - 0.6).abs() < 1e-15);
    assert!((km.survival(3.0) - 0.3).abs() < 1e-15);
    // Doubling every weight changes nothing.
    let km2 = KaplanMeier::fit(&t, &e, &[2.0; 5]);
    assert_eq!(km.steps, km2.steps);
}

#[test]
fn wald_p_values_match_normal_cdf() {
    let n = Normal::new(0.0, 1.0).unwrap();
    for stat in [-3.5, -2.0, -1.6449, -0.7, -0.1, 0.0, 0.3, 1.2, 2.5, 4.0] {
        let lower = wald_test(stat, 1.0, 0.0, 0.05, Sides::One, Direction::Lower).unwrap();
        assert!((lower.p_value - n.cdf(stat)).abs() < 1e-9, "{stat}");
        let upper = wald_test(stat, 1.0, 0.0, 0.05, Sides::One, Direction::Upper).unwrap();
        assert!((upper.p_value - n.sf(stat)).abs() < 1e-9);
        let two = wald_test(stat, 1.0, 0.0, 0.05, Sides::Two, Direction::Lower).unwrap();
        assert!((two.p_value - 2.0 * n.sf(stat.abs())).abs() < 1e-9);
        assert_eq!(lower.reject, lower.p_value < 0.05);
        assert_eq!(two.reject, two.p_value < 0.05);
    }
    assert!(wald_test(0.1, 0.0, 0.0, 0.05, Sides::One, Direction::Lower).is_err());
}

#[test]
fn logistic_recovers_coefficients() {
    let truth = [-0.4, 0.8, -0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 100_000;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            vec![
                rng.sample(StandardNormal),
                if rng.gen::<f64>() < 0.4 { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    let z: Vec<bool> = x
        .iter()
        .map(|r| rng.gen::<f64>() < expit(truth[0] + truth[1] * r[0] + truth[2] * r[1]))
        .collect();
    let fit = fit_logistic(&x, &z).unwrap();
    // Standard errors from the inverse Fisher information at the fit.
    let design = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let w = DVector::from_iterator(n, fit.fitted.iter().map(|p| p * (1.0 - p)));
    let mut info = DMatrix::zeros(3, 3);
    for i in 0..n {
        let row = design.row(i);
        info += w[i] * row.transpose() * row;
    }
    let cov = info.try_inverse().unwrap();
    for j in 0..3 {
        let se = cov[(j, j)].sqrt();
        assert!(
            (fit.coefficients[j] - truth[j]).abs() < 3.0 * se,
            "coef {j}: {} vs {}",
            fit.coefficients[j],
            truth[j]
        );
    }
}

#[test]
fn logistic_flags_degenerate_designs() {
    let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]];
    let z = vec![true, false, true, false];
    assert_eq!(fit_logistic(&x, &z).unwrap_err().code(), "rank-deficient");
    let x = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]];
    let z = vec![false, false, true, true];
    assert_eq!(fit_logistic(&x, &z).unwrap_err().code(), "separation");
}

#[test]
fn robust_interval_coverage() {
    let tau = 0.6f64.ln();
    let exp1 = Exp::new(1.0).unwrap();
    let mut covered = 0;
    let reps = 1000;
    for j in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + j);
        let data: Vec<SubjectRecord> = (0..200)
            .map(|i| {
                let z = i < 100;
                let t: f64 = exp1.sample(&mut rng) / if z { tau.exp() } else { 1.0 };
                let c = 3.0 * rng.gen::<f64>();
                SubjectRecord {
                    time: t.min(c),
                    event: t <= c,
                    z,
                    x: vec![],
                    weight: 1.0,
                }
            })
            .collect();
        let fit = fit_weighted_cox(&data).unwrap();
        if (fit.tau_hat - tau).abs() < 1.959964 * fit.robust_se {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    assert!((0.93..=0.97).contains(&rate), "coverage {rate}");
}

proptest! {
    #[test]
    fn common_weight_scale_invariance(k in 0usize..3, c in 0.01f64..100.0) {
        let data = &toy_datasets()[k];
        let scaled: Vec<SubjectRecord> = data.iter().map(|r| SubjectRecord { weight: r.weight * c, ..r.clone() }).collect();
        let a = fit_weighted_cox(data).unwrap();
        let b = fit_weighted_cox(&scaled).unwrap();
        prop_assert!((a.tau_hat - b.tau_hat).abs() < 1e-9);
        prop_assert!((a.robust_se - b.robust_se).abs() < 1e-9 * a.robust_se);
    }

    #[test]
    fn score_vanishes_at_fit(seed in 0u64..10_000, n in 20usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<SubjectRecord> = (0..n)
            .map(|i| SubjectRecord {
                time: (rng.gen::<f64>() * 10.0).round() / 2.0,
                event: rng.gen::<f64>() < 0.7,
                z: i % 2 == 0,
                x: vec![],
                weight: 0.2 + 3.0 * rng.gen::<f64>(),
            })
            .collect();
        match fit_weighted_cox(&data) {
            Ok(fit) => {
                prop_assert!(fit.score.abs() < 1e-8);
                prop_assert!(fit.information > 0.0);
                let want = sandwich_by_hand(&data, fit.tau_hat);
                prop_assert!((fit.robust_se.powi(2) - want).abs() < 1e-9 * want.max(1.0));
            }
            Err(e) => prop_assert_eq!(e.code(), "separation"),
        }
    }
}
