//! Root-finders that tune the superpopulation to target overlap, follow-up,
//! marginal hazard ratio and censoring shares.

use serde::{Deserialize, Serialize};

use crate::design_effect::{WeightKind, WeightScheme};
use crate::error::{Error, Result};
use crate::special::logit;
use crate::survival::{fit_weighted_cox_data, CoxData};

use super::population::{chunked_mean, Superpopulation};

pub const PHI_BINS: usize = 200;
const PHI_TOL: f64 = 0.001;
const ALPHA_TOL: f64 = 1e-5;
const ALPHA_BRACKET: (f64, f64) = (-5.0, 1.0);

/// Bhattacharyya coefficient between the histograms (200 equal bins on
/// (0, 1)) of the scores in the treated and control groups.
pub fn empirical_phi(ps: &[f64], z: &[bool]) -> f64 {
    let mut h1 = vec![0u64; PHI_BINS];
    let mut h0 = vec![0u64; PHI_BINS];
    for (&e, &t) in ps.iter().zip(z) {
        let bin = ((e * PHI_BINS as f64) as usize).min(PHI_BINS - 1);
        if t {
            h1[bin] += 1;
        } else {
            h0[bin] += 1;
        }
    }
    let n1: u64 = h1.iter().sum();
    let n0: u64 = h0.iter().sum();
    if n1 == 0 || n0 == 0 {
        return 0.0;
    }
    h1.iter()
        .zip(&h0)
        .map(|(&a, &b)| ((a as f64 / n1 as f64) * (b as f64 / n0 as f64)).sqrt())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapCalibration {
    pub c: f64,
    pub beta0: f64,
    pub empirical_phi: f64,
    pub mean_ps: f64,
}

/// Intercept giving mean propensity `target_r` at scale `c`.
pub fn calibrate_beta0(pop: &Superpopulation, c: f64, target_r: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-30.0, 30.0);
    let mean_at = |b0: f64| {
        let ps: Vec<f64> = (0..pop.len()).map(|i| pop.ps_at(i, c, b0)).collect();
        chunked_mean(&ps)
    };
    if c == 0.0 {
        return Ok(logit(target_r));
    }
    if !(mean_at(lo) < target_r && mean_at(hi) > target_r) {
        return Err(Error::Bracket {
            what: "propensity intercept",
            detail: format!("mean score {target_r} unreachable at c = {c}"),
        });
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let m = mean_at(mid);
        if (m - target_r).abs() < 1e-12 {
            return Ok(mid);
        }
        if m < target_r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn phi_at(pop: &mut Superpopulation, c: f64, target_r: f64) -> Result<(f64, f64)> {
    let b0 = calibrate_beta0(pop, c, target_r)?;
    pop.set_assignment(c, b0);
    Ok((empirical_phi(&pop.ps, &pop.z), b0))
}

/// Nested search: `beta0` matches the mean score to `target_r` for each `c`,
/// and `c` is bisected until the histogram overlap hits `target_phi`.
/// Leaves the population assigned at the calibrated values.
pub fn calibrate_overlap(pop: &mut Superpopulation, target_r: f64, target_phi: f64) -> Result<OverlapCalibration> {
    if !(target_phi > 0.0 && target_phi < 1.0) {
        return Err(Error::Domain {
            field: "phi",
            value: target_phi,
            requirement: "0 < phi < 1",
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    loop {
        let (phi, _) = phi_at(pop, hi, target_r)?;
        if phi < target_phi {
            break;
        }
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 12 {
            return Err(Error::Bracket {
                what: "overlap scale c",
                detail: format!("overlap {target_phi} not reached for c up to {hi}"),
            });
        }
    }
    let mut best = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (phi, b0) = phi_at(pop, mid, target_r)?;
        best = Some((mid, b0, phi));
        if (phi - target_phi).abs() < PHI_TOL {
            break;
        }
        if phi > target_phi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (c, beta0, phi) = best.expect("at least one bisection step");
    pop.set_assignment(c, beta0);
    if (phi - target_phi).abs() > 0.003 {
        return Err(Error::Convergence {
            what: "overlap calibration",
            iterations: 60,
        });
    }
    Ok(OverlapCalibration {
        c,
        beta0,
        empirical_phi: phi,
        mean_ps: pop.mean_ps(),
    })
}

/// End of follow-up: the time a fraction `control_survival` of control
/// potential times exceeds.
pub fn calibrate_followup(pop: &mut Superpopulation, control_survival: f64) -> Result<f64> {
    if !(control_survival > 0.0 && control_survival < 1.0) {
        return Err(Error::Domain {
            field: "control_survival",
            value: control_survival,
            requirement: "0 < fraction < 1",
        });
    }
    let mut t0 = pop.t0.clone();
    t0.sort_by(f64::total_cmp);
    let m = t0.len();
    let k = (((1.0 - control_survival) * m as f64).round() as usize).clamp(1, m);
    let t_dagger = t0[k - 1];
    let nu = pop.mechanism.nu;
    pop.set_censoring(t_dagger, nu);
    Ok(t_dagger)
}

/// Weights with the true scores; `None` means unit weights.
pub fn true_weights(pop: &Superpopulation, scheme: Option<&WeightScheme>) -> Vec<f64> {
    match scheme {
        None => vec![1.0; pop.len()],
        Some(s) => (0..pop.len()).map(|i| s.weight(pop.z[i], pop.ps[i])).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaCalibration {
    pub alpha_trt: f64,
    pub achieved_tau: f64,
}

fn marginal_tau(pop: &Superpopulation, weights: &[f64]) -> Result<f64> {
    let data = CoxData {
        time: &pop.time,
        event: &pop.event,
        z: &pop.z,
        weight: weights,
    };
    Ok(fit_weighted_cox_data(&data)?.tau_hat)
}

/// Conditional treatment effect whose weighted marginal Cox estimate on the
/// superpopulation equals `target_tau`. Uses factual data censored only at
/// the end of follow-up; random censoring is switched off during the search
/// and restored afterwards.
pub fn calibrate_alpha(
    pop: &mut Superpopulation,
    target_tau: f64,
    scheme: Option<&WeightScheme>,
) -> Result<AlphaCalibration> {
    let saved_nu = pop.mechanism.nu;
    let t_dagger = pop.mechanism.t_dagger;
    pop.set_censoring(t_dagger, [0.0, 0.0]);
    let result = bisect_alpha(pop, target_tau, scheme);
    let alpha = result.as_ref().map(|a| a.alpha_trt).unwrap_or(pop.mechanism.alpha_trt);
    pop.set_alpha(alpha);
    pop.set_censoring(t_dagger, saved_nu);
    result
}

fn bisect_alpha(pop: &mut Superpopulation, target_tau: f64, scheme: Option<&WeightScheme>) -> Result<AlphaCalibration> {
    let weights = true_weights(pop, scheme);
    let tau_at = |pop: &mut Superpopulation, a: f64| -> Result<f64> {
        pop.set_alpha(a);
        marginal_tau(pop, &weights)
    };
    let (mut lo, mut hi) = ALPHA_BRACKET;
    let (t_lo, t_hi) = (tau_at(pop, lo)?, tau_at(pop, hi)?);
    if !(t_lo < target_tau && t_hi > target_tau) {
        return Err(Error::Bracket {
            what: "treatment effect alpha",
            detail: format!("marginal log hazard ratio spans [{t_lo:.4}, {t_hi:.4}], target {target_tau:.4}"),
        });
    }
    let mut best = (0.5 * (lo + hi), f64::NAN);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let t = tau_at(pop, mid)?;
        best = (mid, t);
        if (t - target_tau).abs() < ALPHA_TOL {
            break;
        }
        if t < target_tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(AlphaCalibration {
        alpha_trt: best.0,
        achieved_tau: best.1,
    })
}

/// Exponential censoring rates `[control, treated]` giving each arm its target
/// share of randomly censored units. The share is a step function of the rate,
/// so the rate is placed between the two order statistics that realise
/// `round(target * n_arm)` censored units.
pub fn calibrate_censoring(pop: &mut Superpopulation, targets: [f64; 2]) -> Result<[f64; 2]> {
    let t_dagger = pop.mechanism.t_dagger;
    let mut nu = [0.0; 2];
    for (arm, &target) in targets.iter().enumerate() {
        if !(0.0..1.0).contains(&target) {
            return Err(Error::Domain {
                field: "censoring",
                value: target,
                requirement: "0 <= share < 1",
            });
        }
        if target == 0.0 {
            continue;
        }
        let mut q: Vec<f64> = (0..pop.len())
            .filter(|&i| usize::from(pop.z[i]) == arm)
            .map(|i| pop.censor_threshold(i))
            .collect();
        if q.is_empty() {
            return Err(Error::Degenerate("an arm of the superpopulation is empty".into()));
        }
        q.sort_by(f64::total_cmp);
        let k = (target * q.len() as f64).round() as usize;
        nu[arm] = match k {
            0 => 0.0,
            k if k >= q.len() => {
                return Err(Error::Bracket {
                    what: "censoring rate",
                    detail: format!("censoring share {target} is infeasible"),
                })
            }
            k => 0.5 * (q[k - 1] + q[k]),
        };
    }
    pop.set_censoring(t_dagger, nu);
    Ok(nu)
}

/// Weight scheme used for calibration and analysis; randomized designs use
/// unit weights.
pub fn analysis_scheme(kind: WeightKind, r: f64, randomized: bool) -> Option<WeightScheme> {
    (!randomized).then(|| kind.scheme(r))
}
