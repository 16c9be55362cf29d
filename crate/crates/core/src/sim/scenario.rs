//! End-to-end scenario: calibrate a superpopulation, size the study with a
//! chosen formula, then estimate the power that size actually delivers.

use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::design_effect::{kappa_de_monte_carlo, sample_size_with_vif, KappaEstimate, KappaOptions, WeightKind};
use crate::error::{Error, Result};
use crate::formulas::{
    check_r, combined_rate, raw_sample_size, sample_size, units_from_events, v_freedman, v_hsieh_lavori, v_obs, v_rct,
    v_schoenfeld, Scale, Sides, VarianceValue,
};
use crate::overlap::solve_ab;
use crate::special::logit;
use crate::survival::Direction;

use super::calibrate::{
    analysis_scheme, calibrate_alpha, calibrate_censoring, calibrate_followup, calibrate_overlap, empirical_phi,
};
use super::population::{generate_superpopulation, Mechanism, PopulationModel, Superpopulation};
use super::power::{empirical_power, AnalysisSpec, PowerEstimate, RejectionMode, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaChoice {
    /// Randomized: arm-specific working variance. Observational: the Beta-model
    /// variance for IPW, the Monte Carlo design effect for other weights.
    Proposed,
    Schoenfeld,
    Freedman,
    HsiehLavori,
    /// Monte Carlo design effect of the scenario's weights times the
    /// randomized-trial size.
    DesignEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensoringTargets {
    #[serde(default)]
    pub treated: f64,
    #[serde(default)]
    pub control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub population: PopulationModel,
    #[serde(default = "half")]
    pub r: f64,
    /// Target overlap; absent for a randomized trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    pub hr: f64,
    #[serde(default)]
    pub weights: WeightKind,
    #[serde(default)]
    pub censoring: CensoringTargets,
    #[serde(default = "default_control_survival")]
    pub control_survival: f64,
    #[serde(default = "default_formula")]
    pub formula: FormulaChoice,
    /// Fixed sample size instead of the formula's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub mode: RejectionMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default)]
    pub sides: Sides,
    #[serde(default = "default_kappa_draws")]
    pub kappa_draws: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_secs: Option<f64>,
}

fn half() -> f64 {
    0.5
}
fn default_control_survival() -> f64 {
    0.2
}
fn default_formula() -> FormulaChoice {
    FormulaChoice::Proposed
}
fn default_replicates() -> u64 {
    1000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_power() -> f64 {
    0.8
}
fn default_kappa_draws() -> u64 {
    1_000_000
}

impl Scenario {
    pub fn new(hr: f64) -> Self {
        Scenario {
            population: PopulationModel::default(),
            r: 0.5,
            phi: None,
            hr,
            weights: WeightKind::Ipw,
            censoring: CensoringTargets::default(),
            control_survival: default_control_survival(),
            formula: FormulaChoice::Proposed,
            n: None,
            replicates: default_replicates(),
            mode: RejectionMode::EmpiricalSd,
            alpha: default_alpha(),
            power: default_power(),
            sides: Sides::One,
            kappa_draws: default_kappa_draws(),
            seed: 0,
            budget_secs: None,
        }
    }

    pub fn randomized(&self) -> bool {
        self.phi.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        check_r(self.r)?;
        if !(self.hr > 0.0 && self.hr.is_finite()) {
            return Err(Error::Domain {
                field: "hr",
                value: self.hr,
                requirement: "> 0",
            });
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0 && phi < 1.0) {
                return Err(Error::Domain {
                    field: "phi",
                    value: phi,
                    requirement: "0 < phi < 1",
                });
            }
        } else if matches!(self.formula, FormulaChoice::HsiehLavori | FormulaChoice::DesignEffect) {
            return Err(Error::Domain {
                field: "phi",
                value: f64::NAN,
                requirement: "required by the chosen formula",
            });
        }
        if let Some(b) = self.budget_secs {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Domain {
                    field: "budget_secs",
                    value: b,
                    requirement: "> 0",
                });
            }
        }
        Ok(())
    }
}

/// Realised values of the calibrated superpopulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    pub beta0: f64,
    pub empirical_phi: f64,
    pub mean_ps: f64,
    pub treated_share: f64,
    pub t_dagger: f64,
    pub alpha_trt: f64,
    /// Marginal log hazard ratio reached by the effect calibration.
    pub achieved_tau: f64,
    /// Censoring rates `[control, treated]`.
    pub nu: [f64; 2],
    pub censoring_share: [f64; 2],
    pub d1: f64,
    pub d0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizedDesign {
    pub tau0: f64,
    pub d1: f64,
    pub d0: f64,
    pub d: f64,
    pub variance: f64,
    pub variance_scale: Scale,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<KappaEstimate>,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub calibration: Calibration,
    pub design: SizedDesign,
    pub power: PowerEstimate,
}

/// Generates and calibrates the superpopulation described by `scn`.
pub fn build_population(scn: &Scenario) -> Result<(Superpopulation, Calibration)> {
    scn.validate()?;
    let mechanism = Mechanism {
        c: 0.0,
        beta0: logit(scn.r),
        alpha_trt: 0.0,
        t_dagger: f64::INFINITY,
        nu: [0.0, 0.0],
    };
    let mut pop = generate_superpopulation(&scn.population, mechanism)?;
    if let Some(phi) = scn.phi {
        calibrate_overlap(&mut pop, scn.r, phi)?;
    }
    let t_dagger = calibrate_followup(&mut pop, scn.control_survival)?;
    let scheme = analysis_scheme(scn.weights, scn.r, scn.randomized());
    let alpha = calibrate_alpha(&mut pop, scn.hr.ln(), scheme.as_ref())?;
    let nu = calibrate_censoring(&mut pop, [scn.censoring.control, scn.censoring.treated])?;
    let calibration = Calibration {
        c: pop.mechanism.c,
        beta0: pop.mechanism.beta0,
        empirical_phi: empirical_phi(&pop.ps, &pop.z),
        mean_ps: pop.mean_ps(),
        treated_share: pop.treated_share(),
        t_dagger,
        alpha_trt: alpha.alpha_trt,
        achieved_tau: alpha.achieved_tau,
        nu,
        censoring_share: [pop.censoring_share(false), pop.censoring_share(true)],
        d1: pop.event_rate(true),
        d0: pop.event_rate(false),
    };
    Ok((pop, calibration))
}

/// Sample size the scenario's formula asks for, given arm event rates.
pub fn size_design(scn: &Scenario, d1: f64, d0: f64) -> Result<SizedDesign> {
    let (r, tau0) = (scn.r, scn.hr.ln());
    let d = combined_rate(r, d1, d0);
    let size = |v: VarianceValue| -> Result<u64> {
        match v.scale {
            Scale::Units => sample_size(v, tau0, scn.alpha, scn.power, scn.sides),
            Scale::Events => units_from_events(raw_sample_size(v, tau0, scn.alpha, scn.power, scn.sides)?, d),
        }
    };
    let mut kappa = None;
    let variance = match (scn.formula, scn.phi) {
        (FormulaChoice::Schoenfeld, _) => v_schoenfeld(r)?,
        (FormulaChoice::Freedman, _) => v_freedman(r, tau0)?,
        (FormulaChoice::HsiehLavori, Some(phi)) => v_hsieh_lavori(r, &solve_ab(r, phi)?)?,
        (FormulaChoice::Proposed, None) => v_rct(r, tau0, d1, d0)?,
        (FormulaChoice::Proposed, Some(phi)) if scn.weights == WeightKind::Ipw => {
            v_obs(r, tau0, d1, d0, &solve_ab(r, phi)?)?
        }
        (FormulaChoice::Proposed | FormulaChoice::DesignEffect, Some(phi)) => {
            let opts = KappaOptions {
                n_draws: scn.kappa_draws,
                seed: scn.seed,
                ..KappaOptions::default()
            };
            let k = kappa_de_monte_carlo(r, phi, &scn.weights.scheme(r), &opts)?;
            kappa = Some(k);
            let v_base = v_rct(r, tau0, d1, d0)?;
            let raw = raw_sample_size(v_base, tau0, scn.alpha, scn.power, scn.sides)?;
            let n = scn.n.unwrap_or(sample_size_with_vif(raw, k.value)?);
            return Ok(SizedDesign {
                tau0,
                d1,
                d0,
                d,
                variance: k.value * v_base.value,
                variance_scale: Scale::Units,
                kappa,
                n,
            });
        }
        (_, None) => {
            return Err(Error::Domain {
                field: "phi",
                value: f64::NAN,
                requirement: "required by the chosen formula",
            })
        }
    };
    let n = match scn.n {
        Some(n) => n,
        None => size(variance)?,
    };
    Ok(SizedDesign {
        tau0,
        d1,
        d0,
        d,
        variance: variance.value,
        variance_scale: variance.scale,
        kappa,
        n,
    })
}

pub fn analysis_spec(scn: &Scenario) -> AnalysisSpec {
    AnalysisSpec {
        sampling: if scn.randomized() {
            Sampling::Randomized { r: scn.r }
        } else {
            Sampling::Observational { weights: scn.weights }
        },
        mode: scn.mode,
        alpha: scn.alpha,
        sides: scn.sides,
        direction: Direction::of(scn.hr.ln()),
        seed: scn.seed,
    }
}

pub fn run_scenario(scn: &Scenario) -> Result<ScenarioReport> {
    let (pop, calibration) = build_population(scn)?;
    let design = size_design(scn, calibration.d1, calibration.d0)?;
    let budget = scn.budget_secs.map(Duration::from_secs_f64);
    let power = empirical_power(&pop, design.n, scn.replicates, &analysis_spec(scn), budget)?;
    Ok(ScenarioReport {
        calibration,
        design,
        power,
    })
}

/// Writes `replicate,tau_hat` rows; failed replicates have an empty estimate.
pub fn write_tau_hats<W: Write>(writer: W, tau_hats: &[Option<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["replicate", "tau_hat"]).map_err(io)?;
    for (j, t) in tau_hats.iter().enumerate() {
        let value = t.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([j.to_string(), value]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}
