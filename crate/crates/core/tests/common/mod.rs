//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use survpower_core::survival::SubjectRecord;

fn rec(time: f64, event: bool, z: bool, weight: f64) -> SubjectRecord {
    SubjectRecord {
        time,
        event,
        z,
        x: Vec::new(),
        weight,
    }
}

/// Three small datasets: unweighted without ties, weighted with tied event
/// times, and weighted with ties across arms and censoring at event times.
pub fn toy_datasets() -> Vec<Vec<SubjectRecord>> {
    let a = vec![
        rec(1.0, true, true, 1.0),
        rec(2.0, true, false, 1.0),
        rec(3.0, false, true, 1.0),
        rec(4.0, true, false, 1.0),
        rec(5.0, true, true, 1.0),
        rec(6.0, true, false, 1.0),
        rec(7.0, false, false, 1.0),
        rec(8.0, true, true, 1.0),
    ];
    let b = vec![
        rec(0.5, true, false, 1.3),
        rec(0.5, true, true, 0.7),
        rec(1.2, true, false, 2.1),
        rec(1.2, false, true, 1.0),
        rec(2.0, true, true, 0.4),
        rec(2.0, true, true, 1.6),
        rec(2.7, false, false, 0.9),
        rec(3.1, true, false, 1.1),
        rec(3.5, true, true, 2.4),
        rec(4.0, false, true, 0.8),
    ];
    let c = vec![
        rec(0.3, false, false, 1.5),
        rec(0.8, true, true, 1.0),
        rec(0.8, true, false, 0.6),
        rec(0.8, false, true, 1.9),
        rec(1.1, true, false, 3.0),
        rec(1.4, true, true, 0.25),
        rec(1.4, true, false, 1.2),
        rec(1.9, false, false, 0.7),
        rec(2.2, true, true, 1.4),
        rec(2.2, true, false, 0.5),
        rec(2.6, true, false, 2.2),
        rec(3.3, false, true, 1.0),
        rec(3.8, true, true, 0.9),
    ];
    vec![a, b, c]
}

/// Weighted Breslow log partial likelihood, one event at a time.
pub fn log_partial_likelihood(data: &[SubjectRecord], tau: f64) -> f64 {
    let theta = tau.exp();
    let mut ll = 0.0;
    for j in data.iter().filter(|r| r.event) {
        let s0: f64 = data
            .iter()
            .filter(|k| k.time >= j.time)
            .map(|k| k.weight * if k.z { theta } else { 1.0 })
            .sum();
        let zj = if j.z { tau } else { 0.0 };
        ll += j.weight * (zj - s0.ln());
    }
    ll
}

/// Grid search on [-5, 5] at step 1e-3, then refinement at step 1e-6.
pub fn grid_argmax(data: &[SubjectRecord]) -> f64 {
    let search = |lo: f64, step: f64, n: usize| {
        let mut best = (f64::NEG_INFINITY, lo);
        for k in 0..=n {
            let t = lo + step * k as f64;
            let v = log_partial_likelihood(data, t);
            if v > best.0 {
                best = (v, t);
            }
        }
        best.1
    };
    let coarse = search(-5.0, 1e-3, 10_000);
    search(coarse - 1e-3, 1e-6, 2000)
}

/// Sandwich variance in the O(n^2) textbook form: per subject
/// `eta_i = w_i [delta_i (z_i - pi(t_i)) - sum over events j with t_j <= t_i
/// of w_j / S0(t_j) * exp(tau z_i) (z_i - pi(t_j))]`, then
/// `sum eta_i^2 / I(tau)^2`.
pub fn sandwich_by_hand(data: &[SubjectRecord], tau: f64) -> f64 {
    let theta = tau.exp();
    let risk = |r: &SubjectRecord| if r.z { theta } else { 1.0 };
    let zf = |r: &SubjectRecord| if r.z { 1.0 } else { 0.0 };
    let s = |t: f64| {
        let s0: f64 = data.iter().filter(|k| k.time >= t).map(|k| k.weight * risk(k)).sum();
        let s1: f64 = data
            .iter()
            .filter(|k| k.time >= t && k.z)
            .map(|k| k.weight * risk(k))
            .sum();
        (s0, s1 / s0)
    };
    let mut info = 0.0;
    for j in data.iter().filter(|r| r.event) {
        let (_, pi) = s(j.time);
        info += j.weight * pi * (1.0 - pi);
    }
    let mut meat = 0.0;
    for i in data {
        let mut eta = 0.0;
        if i.event {
            eta += zf(i) - s(i.time).1;
        }
        for j in data.iter().filter(|r| r.event && r.time <= i.time) {
            let (s0, pi) = s(j.time);
            eta -= j.weight / s0 * risk(i) * (zf(i) - pi);
        }
        meat += (i.weight * eta).powi(2);
    }
    meat / (info * info)
}
