//! Replicate studies drawn from a calibrated superpopulation and the share of
//! them whose Wald test rejects.

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_effect::WeightKind;
use crate::error::{Error, Result};
use crate::formulas::Sides;
use crate::rng::stream_rng;
use crate::survival::{fit_logistic, fit_weighted_cox_data, wald_test, CoxData, Direction};

use super::population::Superpopulation;

/// Replicate streams start here so they never coincide with the streams used
/// to generate the population.
const REPLICATE_STREAM_BASE: u64 = 1 << 40;
const CHUNK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectionMode {
    /// Wald statistic with the standard deviation of the estimates across
    /// replicates.
    #[default]
    EmpiricalSd,
    /// Wald statistic with each replicate's robust standard error.
    RobustSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sampling {
    /// Stratified by arm with `round(n r)` treated; unit weights.
    Randomized { r: f64 },
    /// Unstratified; propensity scores refitted by logistic regression in
    /// every replicate and turned into weights of the given kind.
    Observational { weights: WeightKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    pub sampling: Sampling,
    pub mode: RejectionMode,
    pub alpha: f64,
    pub sides: Sides,
    pub direction: Direction,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub n_used: u64,
    /// Replicates with a usable estimate; the denominator of `power`.
    pub b_replicates: u64,
    pub b_requested: u64,
    /// Replicates dropped because the fit failed (separation, one-arm draws).
    pub failed: u64,
    pub rejections: u64,
    pub power: f64,
    pub mc_half_width: f64,
    pub mean_tau_hat: f64,
    pub sd_tau_hat: f64,
    pub mode: RejectionMode,
    /// Set when the wall-clock budget stopped the run early.
    pub budget_exhausted: bool,
    #[serde(skip)]
    pub tau_hats: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct ReplicateFit {
    tau_hat: f64,
    se: f64,
}

struct Arms {
    treated: Vec<usize>,
    control: Vec<usize>,
}

fn draw_indices<R: Rng>(rng: &mut R, pop: &Superpopulation, arms: &Arms, n: usize, sampling: &Sampling) -> Vec<usize> {
    match sampling {
        Sampling::Randomized { r } => {
            let n1 = ((n as f64) * r).round() as usize;
            let mut idx = Vec::with_capacity(n);
            for _ in 0..n1 {
                idx.push(arms.treated[rng.gen_range(0..arms.treated.len())]);
            }
            for _ in n1..n {
                idx.push(arms.control[rng.gen_range(0..arms.control.len())]);
            }
            idx
        }
        Sampling::Observational { .. } => (0..n).map(|_| rng.gen_range(0..pop.len())).collect(),
    }
}

fn fit_replicate(pop: &Superpopulation, idx: &[usize], sampling: &Sampling) -> Result<ReplicateFit> {
    let time: Vec<f64> = idx.iter().map(|&i| pop.time[i]).collect();
    let event: Vec<bool> = idx.iter().map(|&i| pop.event[i]).collect();
    let z: Vec<bool> = idx.iter().map(|&i| pop.z[i]).collect();
    let weight = match sampling {
        Sampling::Randomized { .. } => vec![1.0; idx.len()],
        Sampling::Observational { weights } => {
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| pop.x[i].to_vec()).collect();
            let ps = fit_logistic(&x, &z)?;
            let r_hat = z.iter().filter(|&&t| t).count() as f64 / z.len() as f64;
            let scheme = weights.scheme(r_hat);
            z.iter().zip(&ps.fitted).map(|(&t, &e)| scheme.weight(t, e)).collect()
        }
    };
    let fit = fit_weighted_cox_data(&CoxData {
        time: &time,
        event: &event,
        z: &z,
        weight: &weight,
    })?;
    Ok(ReplicateFit {
        tau_hat: fit.tau_hat,
        se: fit.robust_se,
    })
}

/// Empirical power of the weighted Cox Wald test at sample size `n` over `b`
/// replicates. Replicate `j` uses stream `j` of the seeded generator, so the
/// result does not depend on the thread count; with a `budget`, replicates
/// run in chunks of 100 and the run stops after the chunk that exhausts it.
pub fn empirical_power(
    pop: &Superpopulation,
    n: u64,
    b: u64,
    spec: &AnalysisSpec,
    budget: Option<Duration>,
) -> Result<PowerEstimate> {
    if n < 4 || n as usize > pop.len() {
        return Err(Error::Domain {
            field: "n",
            value: n as f64,
            requirement: "4 <= n <= superpopulation size",
        });
    }
    if b < 100 {
        return Err(Error::Domain {
            field: "replicates",
            value: b as f64,
            requirement: ">= 100",
        });
    }
    let arms = Arms {
        treated: (0..pop.len()).filter(|&i| pop.z[i]).collect(),
        control: (0..pop.len()).filter(|&i| !pop.z[i]).collect(),
    };
    if arms.treated.is_empty() || arms.control.is_empty() {
        return Err(Error::Degenerate("an arm of the superpopulation is empty".into()));
    }

    let start = Instant::now();
    let mut fits: Vec<Option<ReplicateFit>> = Vec::with_capacity(b as usize);
    let mut budget_exhausted = false;
    let mut next = 0u64;
    while next < b {
        let end = (next + CHUNK as u64).min(b);
        let chunk: Vec<Option<ReplicateFit>> = (next..end)
            .into_par_iter()
            .map(|j| {
                let mut rng = stream_rng(spec.seed, REPLICATE_STREAM_BASE + j);
                let idx = draw_indices(&mut rng, pop, &arms, n as usize, &spec.sampling);
                fit_replicate(pop, &idx, &spec.sampling).ok()
            })
            .collect();
        fits.extend(chunk);
        next = end;
        if let Some(limit) = budget {
            if next < b && start.elapsed() >= limit {
                budget_exhausted = true;
                break;
            }
        }
    }

    let ok: Vec<ReplicateFit> = fits.iter().flatten().copied().collect();
    let failed = (fits.len() - ok.len()) as u64;
    if ok.len() < 2 {
        return Err(Error::Degenerate(
            "fewer than two replicates produced an estimate".into(),
        ));
    }
    let k = ok.len() as f64;
    let mean = ok.iter().map(|f| f.tau_hat).sum::<f64>() / k;
    let sd = (ok.iter().map(|f| (f.tau_hat - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();

    let mut rejections = 0u64;
    for f in &ok {
        let se = match spec.mode {
            RejectionMode::EmpiricalSd => sd,
            RejectionMode::RobustSe => f.se,
        };
        if wald_test(f.tau_hat, se, 0.0, spec.alpha, spec.sides, spec.direction)?.reject {
            rejections += 1;
        }
    }
    let power = rejections as f64 / k;
    Ok(PowerEstimate {
        n_used: n,
        b_replicates: ok.len() as u64,
        b_requested: b,
        failed,
        rejections,
        power,
        mc_half_width: 1.96 * (power * (1.0 - power) / k).sqrt(),
        mean_tau_hat: mean,
        sd_tau_hat: sd,
        mode: spec.mode,
        budget_exhausted,
        tau_hats: fits.iter().map(|f| f.map(|f| f.tau_hat)).collect(),
    })
}
