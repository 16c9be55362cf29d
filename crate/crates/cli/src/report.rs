//! Result documents. Field order here is the order on the wire.

use serde::Serialize;
use survpower_core::design_effect::{KappaEstimate, WeightKind};
use survpower_core::epsilon::EpsilonBound;
use survpower_core::formulas::Conservativeness;
use survpower_core::overlap::{overlap_category, BetaOverlap, OverlapCategory};
use survpower_core::sim::{Calibration, PowerEstimate, SizedDesign};

use crate::payload::Sweep;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparators {
    pub schoenfeld_n: u64,
    pub freedman_n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hsieh_lavori_n: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    pub n_low: u64,
    pub n_high: u64,
    pub bound: f64,
    pub n_low_clamped: bool,
}

impl From<&EpsilonBound> for Sensitivity {
    fn from(e: &EpsilonBound) -> Self {
        Sensitivity {
            n_low: e.n_low,
            n_high: e.n_high,
            bound: e.bound,
            n_low_clamped: e.n_low_clamped,
        }
    }
}

/// Beta score model behind an overlap value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapInfo {
    pub phi: f64,
    pub a: f64,
    pub b: f64,
    pub category: OverlapCategory,
    /// Smallest `phi` at this `r` with finite IPW variance.
    pub min_phi: f64,
}

impl OverlapInfo {
    pub fn new(beta: &BetaOverlap, min_phi: f64) -> Self {
        OverlapInfo {
            phi: beta.phi,
            a: beta.a,
            b: beta.b,
            category: overlap_category(beta.phi),
            min_phi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerReport<I> {
    pub command: &'static str,
    pub n: u64,
    pub expected_events: f64,
    pub variance_units: f64,
    /// Power of the test at the rounded-up `n`.
    pub achieved_power: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vif: Option<f64>,
    pub comparators: Comparators,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Sensitivity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<KappaEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservativeness: Option<Conservativeness>,
    pub inputs: I,
    pub engine_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifReport<I> {
    pub command: &'static str,
    pub scheme: WeightKind,
    pub kappa: f64,
    pub mc_std_error: f64,
    pub n_draws: u64,
    /// Closed-form IPW value, when the scheme is IPW and it exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_ipw_analytic: Option<f64>,
    pub overlap: OverlapInfo,
    pub inputs: I,
    pub engine_version: &'static str,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport<I> {
    pub command: &'static str,
    #[serde(flatten)]
    pub bounds: EpsilonBound,
    pub overlap: OverlapInfo,
    pub inputs: I,
    pub engine_version: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Value of the swept axis.
    pub x: f64,
    pub n: u64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport<I> {
    pub command: &'static str,
    pub sweep: Sweep,
    pub points: Vec<CurvePoint>,
    pub inputs: I,
    pub engine_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport<I> {
    pub command: &'static str,
    pub calibration: Calibration,
    pub design: SizedDesign,
    pub power: PowerEstimate,
    pub inputs: I,
    pub engine_version: &'static str,
    pub seed: u64,
}
