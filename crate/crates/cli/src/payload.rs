//! Request documents. Every struct rejects unknown fields; after defaults are
//! filled in, re-serializing a request gives the replayable inputs echo.

use serde::{Deserialize, Serialize};
use survpower_core::design_effect::{KappaOptions, WeightKind};
use survpower_core::epsilon::SensitivityInputs;
use survpower_core::formulas::{DesignInputs, Sides};

use crate::error::ApiError;

fn default_alpha() -> f64 {
    0.05
}

fn default_power() -> f64 {
    0.8
}

/// Effect size and event-rate fields shared by the design requests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignFields {
    pub r: f64,
    pub hr: Option<f64>,
    pub tau0: Option<f64>,
    pub d: Option<f64>,
    pub d1: Option<f64>,
    pub d0: Option<f64>,
    pub alpha: f64,
    pub power: f64,
    pub sides: Sides,
}

impl DesignFields {
    /// Log hazard ratio from exactly one of `hr` and `tau0`.
    pub fn tau0(&self) -> Result<f64, ApiError> {
        match (self.hr, self.tau0) {
            (Some(_), Some(_)) => Err(ApiError::validation(
                "give exactly one of `hr` and `tau0`",
                Some("tau0"),
            )),
            (None, None) => Err(ApiError::validation(
                "an effect size `hr` or `tau0` is required",
                Some("hr"),
            )),
            (None, Some(tau)) => Ok(tau),
            (Some(hr), None) if hr > 0.0 && hr.is_finite() => Ok(hr.ln()),
            (Some(hr), None) => Err(survpower_core::Error::Domain {
                field: "hr",
                value: hr,
                requirement: "finite and > 0",
            }
            .into()),
        }
    }

    /// Arm event rates; `d1`/`d0` win over a combined `d` when both are given.
    pub fn rates(&self) -> Result<(f64, f64), ApiError> {
        match (self.d1, self.d0, self.d) {
            (Some(d1), Some(d0), _) => Ok((d1, d0)),
            (Some(_), None, _) => Err(ApiError::validation("`d1` needs `d0`", Some("d0"))),
            (None, Some(_), _) => Err(ApiError::validation("`d0` needs `d1`", Some("d1"))),
            (None, None, Some(d)) => Ok((d, d)),
            (None, None, None) => Err(ApiError::validation(
                "an event rate `d` or `d1` and `d0` is required",
                Some("d"),
            )),
        }
    }

    /// Validated design; `tau` replaces the effect fields when given.
    pub fn resolve(&self, tau: Option<f64>) -> Result<DesignInputs, ApiError> {
        let tau0 = match tau {
            Some(t) => t,
            None => self.tau0()?,
        };
        let (d1, d0) = self.rates()?;
        let design = DesignInputs {
            r: self.r,
            tau0,
            d1,
            d0,
            alpha: self.alpha,
            power: self.power,
            sides: self.sides,
        };
        design.validate()?;
        Ok(design)
    }
}

/// Declares a request struct with the shared design fields up front.
macro_rules! design_request {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            pub r: f64,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub hr: Option<f64>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub tau0: Option<f64>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub d: Option<f64>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub d1: Option<f64>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub d0: Option<f64>,
            #[serde(default = "default_alpha")]
            pub alpha: f64,
            #[serde(default = "default_power")]
            pub power: f64,
            #[serde(default)]
            pub sides: Sides,
            $($(#[$fmeta])* pub $field: $ty,)*
        }

        impl $name {
            pub fn design(&self) -> DesignFields {
                DesignFields {
                    r: self.r,
                    hr: self.hr,
                    tau0: self.tau0,
                    d: self.d,
                    d1: self.d1,
                    d0: self.d0,
                    alpha: self.alpha,
                    power: self.power,
                    sides: self.sides,
                }
            }
        }
    };
}

design_request!(
    /// Randomized trial.
    RctRequest {}
);

design_request!(
    /// Observational study under the Beta score model with overlap `phi`.
    ObsRequest {
        phi: f64,
        #[serde(default)]
        scheme: WeightKind,
        /// Monte Carlo draws for non-IPW schemes.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        draws: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_cap: Option<f64>,
        /// Adds the confounding-residual range `[n_low, n_high]` (IPW only).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sensitivity: Option<SensitivityInputs>,
    }
);

design_request!(
    /// Confounding-residual bounds for an IPW design.
    BoundsRequest {
        phi: f64,
        #[serde(default)]
        sensitivity: SensitivityInputs,
    }
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Power at each sample size of the grid.
    N,
    /// Required size and its power across overlaps.
    Phi,
    /// Required size and its power across hazard ratios.
    Hr,
}

fn default_points() -> u32 {
    20
}

design_request!(
    /// Power or size along one axis. The swept field's own value is ignored.
    CurveRequest {
        sweep: Sweep,
        from: f64,
        to: f64,
        #[serde(default = "default_points")]
        points: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<f64>,
        #[serde(default)]
        scheme: WeightKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        draws: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_cap: Option<f64>,
    }
);

/// Monte Carlo design effect of a weighting scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VifRequest {
    pub r: f64,
    pub phi: f64,
    #[serde(default)]
    pub scheme: WeightKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_cap: Option<f64>,
}

/// Monte Carlo options with the defaults written back into the request
/// fields, so the echo names the draws and seed actually used.
pub fn kappa_options(draws: &mut Option<u64>, seed: &mut Option<u64>, weight_cap: Option<f64>) -> KappaOptions {
    let defaults = KappaOptions::default();
    KappaOptions {
        n_draws: *draws.get_or_insert(defaults.n_draws),
        seed: *seed.get_or_insert(defaults.seed),
        weight_cap,
        ..defaults
    }
}
