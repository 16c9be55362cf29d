//! Beta propensity-score model indexed by treatment share `r` and the
//! Bhattacharyya overlap `phi` between the two arms' score distributions.

use serde::{Deserialize, Serialize};

use crate::error::{open_interval, Error, Result};
use crate::formulas::check_r;
use crate::special::ln_half_gamma_ratio;

const MAX_BRACKET_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 400;
const PHI_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaOverlap {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub phi: f64,
}

impl BetaOverlap {
    pub fn from_ab(a: f64, b: f64) -> Result<Self> {
        let phi = phi_from_ab(a, b)?;
        Ok(BetaOverlap {
            a,
            b,
            r: a / (a + b),
            phi,
        })
    }

    pub fn moments(&self) -> Result<BetaMoments> {
        beta_moments(self)
    }
}

/// Moments of the inverse propensity score and the IPW weights.
///
/// The weight variances need `a > 2` (resp. `b > 2`) and are `None` otherwise;
/// use the accessors to get an existence error instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaMoments {
    pub mean_inv_e: f64,
    pub mean_inv_1me: f64,
    pub var_w1: Option<f64>,
    pub var_w0: Option<f64>,
    pub r_squared: f64,
    a: f64,
    b: f64,
}

impl BetaMoments {
    pub fn var_w1(&self) -> Result<f64> {
        self.var_w1.ok_or(Error::Existence {
            condition: "a > 2",
            a: self.a,
            b: self.b,
        })
    }

    pub fn var_w0(&self) -> Result<f64> {
        self.var_w0.ok_or(Error::Existence {
            condition: "b > 2",
            a: self.a,
            b: self.b,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapCategory {
    VeryPoor,
    Poor,
    Moderate,
    Good,
}

impl OverlapCategory {
    pub fn label(self) -> &'static str {
        match self {
            OverlapCategory::VeryPoor => "very poor",
            OverlapCategory::Poor => "poor",
            OverlapCategory::Moderate => "moderate",
            OverlapCategory::Good => "good",
        }
    }
}

fn check_shape(field: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::Domain {
            field,
            value: x,
            requirement: "> 0",
        })
    }
}

/// `Γ(a+½)/(√a Γ(a)) · Γ(b+½)/(√b Γ(b))`, computed in log space.
pub fn phi_from_ab(a: f64, b: f64) -> Result<f64> {
    check_shape("a", a)?;
    check_shape("b", b)?;
    Ok((ln_half_gamma_ratio(a) + ln_half_gamma_ratio(b)).exp())
}

fn phi_on_line(a: f64, odds: f64) -> f64 {
    (ln_half_gamma_ratio(a) + ln_half_gamma_ratio(a * odds)).exp()
}

/// Beta parameters with mean `r` and overlap `phi`.
pub fn solve_ab(r: f64, phi: f64) -> Result<BetaOverlap> {
    check_r(r)?;
    open_interval("phi", phi, 0.0, 1.0, "0 < phi < 1")?;
    let odds = (1.0 - r) / r;

    let mut lo = 0.0_f64;
    let mut hi = 2.0_f64;
    let mut doublings = 0;
    while phi_on_line(hi, odds) < phi {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(Error::Bracket {
                what: "Beta shape a",
                detail: format!("phi = {phi} not reached for a up to {lo:e}"),
            });
        }
    }

    let mut iterations = 0;
    while hi - lo > 1e-14 * hi && iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi_on_line(mid, odds) < phi {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    let a = if lo > 0.0 { 0.5 * (lo + hi) } else { hi };
    let out = BetaOverlap {
        a,
        b: a * odds,
        r,
        phi: phi_on_line(a, odds),
    };
    if (out.phi - phi).abs() > PHI_TOLERANCE {
        return Err(Error::Convergence {
            what: "overlap bisection",
            iterations,
        });
    }
    // Report the target value; the achieved one agrees within the tolerance.
    Ok(BetaOverlap { phi, ..out })
}

/// Smallest overlap for which `E[1/e]` and `E[1/(1-e)]` are finite at share `r`:
/// `phi` at the point of the line `b = a(1-r)/r` where `min(a, b) = 1`.
pub fn min_phi_for_finite_variance(r: f64) -> Result<f64> {
    check_r(r)?;
    let odds = (1.0 - r) / r;
    let (a, b) = if odds >= 1.0 { (1.0, odds) } else { (1.0 / odds, 1.0) };
    phi_from_ab(a, b)
}

pub fn beta_moments(beta: &BetaOverlap) -> Result<BetaMoments> {
    let (a, b, r) = (beta.a, beta.b, beta.r);
    check_shape("a", a)?;
    check_shape("b", b)?;
    if !(a > 1.0 && b > 1.0) {
        let condition = if a > 1.0 { "b > 1" } else { "a > 1" };
        return Err(Error::Existence { condition, a, b });
    }
    let s = a + b - 1.0;
    let var_w1 = (a > 2.0).then(|| r * r * b * s / ((a - 1.0).powi(2) * (a - 2.0)));
    let var_w0 = (b > 2.0).then(|| (1.0 - r).powi(2) * a * s / ((b - 1.0).powi(2) * (b - 2.0)));
    Ok(BetaMoments {
        mean_inv_e: s / (a - 1.0),
        mean_inv_1me: s / (b - 1.0),
        var_w1,
        var_w0,
        r_squared: 1.0 / (a + b + 1.0),
        a,
        b,
    })
}

pub fn overlap_category(phi: f64) -> OverlapCategory {
    if phi < 0.8 {
        OverlapCategory::VeryPoor
    } else if phi < 0.9 {
        OverlapCategory::Poor
    } else if phi < 0.95 {
        OverlapCategory::Moderate
    } else {
        OverlapCategory::Good
    }
}
