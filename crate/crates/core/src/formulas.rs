//! Closed-form variances, sample sizes, the log-rank comparators and the
//! conservativeness threshold for the proportional risk-set working variance.
//!
//! Every variance here is on the scale where `Var(tau_hat) ≈ V / n`; the
//! `Scale` tag records whether `n` counts units or events.

use serde::{Deserialize, Serialize};

use crate::error::{half_open, open_interval, Error, Result};
use crate::overlap::{min_phi_for_finite_variance, BetaOverlap};
use crate::special::{normal_cdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sides {
    #[default]
    One,
    Two,
}

impl Sides {
    /// Level used for the critical value: `alpha` or `alpha / 2`.
    pub fn effective_alpha(self, alpha: f64) -> f64 {
        match self {
            Sides::One => alpha,
            Sides::Two => alpha / 2.0,
        }
    }

    /// `z_{1 - alpha'}`.
    pub fn critical_value(self, alpha: f64) -> f64 {
        normal_quantile(1.0 - self.effective_alpha(alpha))
    }
}

/// Design-stage summary quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignInputs {
    /// Treatment proportion.
    pub r: f64,
    /// Postulated marginal log hazard ratio.
    pub tau0: f64,
    /// Observed event rate in the treated arm.
    pub d1: f64,
    /// Observed event rate in the control arm.
    pub d0: f64,
    pub alpha: f64,
    pub power: f64,
    #[serde(default)]
    pub sides: Sides,
}

impl DesignInputs {
    pub fn new(r: f64, tau0: f64, d1: f64, d0: f64) -> Self {
        DesignInputs {
            r,
            tau0,
            d1,
            d0,
            alpha: 0.05,
            power: 0.8,
            sides: Sides::One,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_r(self.r)?;
        check_rate("d1", self.d1)?;
        check_rate("d0", self.d0)?;
        check_tau("tau0", self.tau0)?;
        check_alpha_power(self.alpha, self.power, self.sides)?;
        Ok(())
    }

    /// Combined event rate `r d1 + (1 - r) d0`.
    pub fn d(&self) -> f64 {
        combined_rate(self.r, self.d1, self.d0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Units,
    Events,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceValue {
    pub value: f64,
    pub scale: Scale,
}

impl VarianceValue {
    pub fn units(value: f64) -> Self {
        VarianceValue {
            value,
            scale: Scale::Units,
        }
    }

    pub fn events(value: f64) -> Self {
        VarianceValue {
            value,
            scale: Scale::Events,
        }
    }

    /// Converts to the event scale given the combined event rate `d`.
    pub fn to_events(self, d: f64) -> Self {
        match self.scale {
            Scale::Events => self,
            Scale::Units => VarianceValue::events(self.value * d),
        }
    }

    pub fn to_units(self, d: f64) -> Self {
        match self.scale {
            Scale::Units => self,
            Scale::Events => VarianceValue::units(self.value / d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda1: f64,
    pub lambda0: f64,
}

impl LambdaPair {
    pub fn sum(&self) -> f64 {
        self.lambda1 + self.lambda0
    }
}

/// Outcome of the conservativeness check for the randomized-trial variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "gamma", rename_all = "kebab-case")]
pub enum Conservativeness {
    /// Minimal control survival at the end of follow-up that makes the
    /// working variance an upper bound under equal censoring.
    Threshold(f64),
    /// The sign condition on `(r, tau0)` fails; no sufficient condition is known.
    NotApplicable,
    /// `tau0 = 0`: the risk-set ratio is constant and the working variance is exact.
    TriviallyConservative,
}

pub(crate) fn check_r(r: f64) -> Result<f64> {
    open_interval("r", r, 0.0, 1.0, "0 < r < 1")
}

pub(crate) fn check_rate(field: &'static str, d: f64) -> Result<f64> {
    half_open(field, d, 0.0, 1.0, "0 < d <= 1")
}

fn check_tau(field: &'static str, tau: f64) -> Result<f64> {
    if tau.is_finite() {
        Ok(tau)
    } else {
        Err(Error::Domain {
            field,
            value: tau,
            requirement: "finite",
        })
    }
}

fn check_nonzero_tau(tau: f64) -> Result<f64> {
    check_tau("tau0", tau)?;
    if tau == 0.0 {
        return Err(Error::Degenerate(
            "tau0 = 0: no sample size detects a null effect".into(),
        ));
    }
    Ok(tau)
}

fn check_alpha_power(alpha: f64, power: f64, sides: Sides) -> Result<()> {
    open_interval("alpha", alpha, 0.0, 1.0, "0 < alpha < 1")?;
    open_interval("power", power, 0.0, 1.0, "0 < power < 1")?;
    if power < sides.effective_alpha(alpha) {
        return Err(Error::Domain {
            field: "power",
            value: power,
            requirement: "power >= alpha (alpha/2 for two-sided tests)",
        });
    }
    Ok(())
}

fn check_variance(v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain {
            field: "variance",
            value: v,
            requirement: "finite and > 0",
        })
    }
}

pub(crate) fn combined_rate(r: f64, d1: f64, d0: f64) -> f64 {
    r * d1 + (1.0 - r) * d0
}

pub fn lambda_pair(r: f64, tau0: f64) -> Result<LambdaPair> {
    check_r(r)?;
    check_tau("tau0", tau0)?;
    let lambda1 = (r / (1.0 - r)).sqrt() * (0.5 * tau0).exp();
    Ok(LambdaPair {
        lambda1,
        lambda0: 1.0 / lambda1,
    })
}

/// Randomized-trial working variance with arm-specific event rates.
pub fn v_rct(r: f64, tau0: f64, d1: f64, d0: f64) -> Result<VarianceValue> {
    let lam = lambda_pair(r, tau0)?;
    check_rate("d1", d1)?;
    check_rate("d0", d0)?;
    let d = combined_rate(r, d1, d0);
    let l1sq = lam.lambda1 * lam.lambda1;
    let l0sq = lam.lambda0 * lam.lambda0;
    let v = lam.sum().powi(2) * (r * l0sq * d1 + (1.0 - r) * l1sq * d0) / (d * d);
    Ok(VarianceValue::units(v))
}

/// Randomized-trial working variance when both arms share the event rate `d`.
pub fn v_rct_equal_censoring(r: f64, tau0: f64, d: f64) -> Result<VarianceValue> {
    let lam = lambda_pair(r, tau0)?;
    check_rate("d", d)?;
    let v = lam.sum().powi(2) * (r * lam.lambda0 * lam.lambda0 + (1.0 - r) * lam.lambda1 * lam.lambda1) / d;
    Ok(VarianceValue::units(v))
}

/// Schoenfeld's null log-rank variance, per event.
pub fn v_schoenfeld(r: f64) -> Result<VarianceValue> {
    check_r(r)?;
    Ok(VarianceValue::events(1.0 / (r * (1.0 - r))))
}

/// Freedman's variance in its `(r, tau0)` algebraic form, per event.
///
/// At `tau0 = 0` the analytic limit (Schoenfeld's variance) is returned.
pub fn v_freedman(r: f64, tau0: f64) -> Result<VarianceValue> {
    let schoen = v_schoenfeld(r)?.value;
    check_tau("tau0", tau0)?;
    if tau0 == 0.0 {
        return Ok(VarianceValue::events(schoen));
    }
    // 1 - exp(tau0) = -expm1(tau0) keeps precision for small effects.
    let factor = tau0 * (1.0 - r + r * tau0.exp()) / (-tau0.exp_m1());
    Ok(VarianceValue::events(schoen * factor * factor))
}

/// Ratio of the balanced-trial working variance (event scale) to Schoenfeld's.
pub fn ratio_schoenfeld(tau0: f64) -> f64 {
    let c = tau0.cosh();
    c * (c + 1.0) / 2.0
}

/// Ratio of the balanced-trial working variance (event scale) to Freedman's.
pub fn ratio_freedman(tau0: f64) -> f64 {
    if tau0 == 0.0 {
        return 1.0;
    }
    // cosh(t) - 1 = 2 sinh^2(t/2)
    let s = (0.5 * tau0).sinh();
    4.0 * tau0.cosh() * s * s / (tau0 * tau0)
}

/// Observational-study working variance under a Beta propensity model.
pub fn v_obs(r: f64, tau0: f64, d1: f64, d0: f64, beta: &BetaOverlap) -> Result<VarianceValue> {
    let lam = lambda_pair(r, tau0)?;
    check_rate("d1", d1)?;
    check_rate("d0", d0)?;
    let (a, b) = (beta.a, beta.b);
    if !(a > 1.0 && b > 1.0) {
        let r_beta = a / (a + b);
        return Err(Error::InfiniteVariance {
            r: r_beta,
            phi: beta.phi,
            min_phi: min_phi_for_finite_variance(r_beta)?,
        });
    }
    let d = combined_rate(r, d1, d0);
    let mean_inv_e = (a + b - 1.0) / (a - 1.0);
    let mean_inv_1me = (a + b - 1.0) / (b - 1.0);
    let l1sq = lam.lambda1 * lam.lambda1;
    let l0sq = lam.lambda0 * lam.lambda0;
    let v =
        (lam.sum() / d).powi(2) * (r * r * l0sq * d1 * mean_inv_e + (1.0 - r) * (1.0 - r) * l1sq * d0 * mean_inv_1me);
    Ok(VarianceValue::units(v))
}

/// Hsieh–Lavori comparator: Schoenfeld's variance inflated by `1/(1 - R²)`
/// with `R² = 1/(a + b + 1)` from the Beta model.
pub fn v_hsieh_lavori(r: f64, beta: &BetaOverlap) -> Result<VarianceValue> {
    let schoen = v_schoenfeld(r)?.value;
    if !(beta.a > 0.0 && beta.b > 0.0) {
        return Err(Error::Domain {
            field: "a",
            value: beta.a.min(beta.b),
            requirement: "a, b > 0",
        });
    }
    Ok(VarianceValue::events(schoen * (1.0 + 1.0 / (beta.a + beta.b))))
}

/// Unrounded `(z_{1-alpha'} + z_power)^2 V / tau0^2`.
pub fn raw_sample_size(v: VarianceValue, tau0: f64, alpha: f64, power: f64, sides: Sides) -> Result<f64> {
    check_variance(v.value)?;
    check_nonzero_tau(tau0)?;
    check_alpha_power(alpha, power, sides)?;
    let z = sides.critical_value(alpha) + normal_quantile(power);
    Ok(z * z * v.value / (tau0 * tau0))
}

/// Minimal sample size on the scale of `v` (units or events); the ceiling is
/// the last operation.
pub fn sample_size(v: VarianceValue, tau0: f64, alpha: f64, power: f64, sides: Sides) -> Result<u64> {
    Ok(ceil_count(raw_sample_size(v, tau0, alpha, power, sides)?))
}

/// Units needed for an event-scale requirement: `ceil(raw_events / d)`.
pub fn units_from_events(raw_events: f64, d: f64) -> Result<u64> {
    check_rate("d", d)?;
    Ok(ceil_count(raw_events / d))
}

pub(crate) fn ceil_count(raw: f64) -> u64 {
    // Guard against 94.99999999999999-style noise pushing an exact integer up.
    let rounded = raw.round();
    if (raw - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as u64
    } else {
        raw.ceil() as u64
    }
}

/// Power of the Wald test at sample size `n`.
pub fn power_at_n(v: VarianceValue, tau0: f64, alpha: f64, n: f64, sides: Sides) -> Result<f64> {
    check_variance(v.value)?;
    check_nonzero_tau(tau0)?;
    open_interval("alpha", alpha, 0.0, 1.0, "0 < alpha < 1")?;
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Domain {
            field: "n",
            value: n,
            requirement: "n >= 0",
        });
    }
    let shift = (n * tau0 * tau0 / v.value).sqrt();
    Ok(normal_cdf(shift - sides.critical_value(alpha)))
}

/// Minimal end-of-follow-up control survival for which the randomized-trial
/// working variance is guaranteed conservative under equal censoring.
pub fn conservativeness_gamma(r: f64, tau0: f64) -> Result<Conservativeness> {
    check_r(r)?;
    check_tau("tau0", tau0)?;
    if tau0 == 0.0 {
        return Ok(Conservativeness::TriviallyConservative);
    }
    let sign_ok = (r < 0.5 && tau0 < 0.0) || (r > 0.5 && tau0 > 0.0) || r == 0.5;
    if !sign_ok {
        return Ok(Conservativeness::NotApplicable);
    }
    let base = (1.0 - r) / (r * tau0.exp());
    let gamma = base.powf(2.0 / tau0.exp_m1());
    Ok(Conservativeness::Threshold(gamma))
}
