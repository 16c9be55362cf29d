//! Bounds on the confounding residual between the true IPW variance and the
//! observational working variance, and the sample-size range they imply.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulas::{lambda_pair, sample_size, v_obs, DesignInputs, VarianceValue};
use crate::overlap::{beta_moments, solve_ab, BetaOverlap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityInputs {
    #[serde(default = "default_rho")]
    pub rho1: f64,
    #[serde(default = "default_rho")]
    pub rho0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn default_rho() -> f64 {
    0.5
}

impl Default for SensitivityInputs {
    fn default() -> Self {
        SensitivityInputs {
            rho1: default_rho(),
            rho0: default_rho(),
            gamma: None,
        }
    }
}

impl SensitivityInputs {
    pub fn validate(&self) -> Result<()> {
        for (field, rho) in [("rho1", self.rho1), ("rho0", self.rho0)] {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Domain {
                    field,
                    value: rho,
                    requirement: "0 <= rho <= 1",
                });
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::Domain {
                    field: "gamma",
                    value: g,
                    requirement: "0 < gamma < 1",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBound {
    pub m1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m4: Option<f64>,
    pub bound: f64,
    /// Working observational variance the bound is applied to.
    pub v_obs: f64,
    pub n: u64,
    pub n_low: u64,
    pub n_high: u64,
    /// Set when `v_obs - bound <= 0`; `n_low` is then reported as 1.
    pub n_low_clamped: bool,
}

pub fn epsilon_bound(design: &DesignInputs, beta: &BetaOverlap, sens: &SensitivityInputs) -> Result<EpsilonBound> {
    design.validate()?;
    sens.validate()?;
    if (beta.r - design.r).abs() > 1e-9 {
        return Err(Error::Domain {
            field: "r",
            value: design.r,
            requirement: "equal to the mean a/(a+b) of the Beta score model",
        });
    }
    let moments = beta_moments(beta)?;
    let sd1 = moments.var_w1()?.sqrt();
    let sd0 = moments.var_w0()?.sqrt();
    let (r, tau) = (design.r, design.tau0);
    let d = design.d();
    let lam = lambda_pair(r, tau)?;
    let lsum2 = lam.sum().powi(2);
    let t1 = sens.rho1 * r * lam.lambda0 * lam.lambda0 * sd1;
    let t0 = sens.rho0 * (1.0 - r) * lam.lambda1 * lam.lambda1 * sd0;

    let m1 = PI * lsum2 / (2.0 * d * d) * (t1 + t0);
    let (m2, m3, m4) = match sens.gamma {
        None => (None, None, None),
        Some(g) => {
            let neg_log = -g.ln();
            let half = t1 * (0.5 * tau).exp() + t0;
            let m2 = lsum2 * neg_log / (2.0 * d * d) * (t1 * tau.exp() + t0);
            let m3 = lsum2 * neg_log.sqrt() / (d * d * d).sqrt() * half;
            let m4 = lsum2 * neg_log.sqrt() / (SQRT_2 * d * d) * half;
            (Some(m2), Some(m3), Some(m4))
        }
    };
    let bound = [m2, m3, m4].into_iter().flatten().fold(m1, f64::min);

    let v = v_obs(r, tau, design.d1, design.d0, beta)?.value;
    let size = |var: f64| sample_size(VarianceValue::units(var), tau, design.alpha, design.power, design.sides);
    let n = size(v)?;
    let n_high = size(v + bound)?;
    let low_var = v - bound;
    let (n_low, n_low_clamped) = if low_var > 0.0 {
        (size(low_var)?.max(1), false)
    } else {
        (1, true)
    };
    Ok(EpsilonBound {
        m1,
        m2,
        m3,
        m4,
        bound,
        v_obs: v,
        n,
        n_low,
        n_high,
        n_low_clamped,
    })
}

/// `M1` along a sequence of overlaps at the design's treatment share.
pub fn epsilon_vanishes_check(design: &DesignInputs, sens: &SensitivityInputs, phis: &[f64]) -> Result<Vec<f64>> {
    phis.iter()
        .map(|&phi| {
            let beta = solve_ab(design.r, phi)?;
            Ok(epsilon_bound(design, &beta, sens)?.m1)
        })
        .collect()
}
