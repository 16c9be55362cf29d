//! Synthetic-data validation: a calibrated superpopulation from which study
//! replicates are drawn to measure the power a formula's sample size delivers.

pub mod calibrate;
pub mod population;
pub mod power;
pub mod scenario;

pub use calibrate::{
    calibrate_alpha, calibrate_beta0, calibrate_censoring, calibrate_followup, calibrate_overlap, empirical_phi,
    AlphaCalibration, OverlapCalibration,
};
pub use population::{generate_superpopulation, Mechanism, PopulationModel, Superpopulation};
pub use power::{empirical_power, AnalysisSpec, PowerEstimate, RejectionMode, Sampling};
pub use scenario::{
    build_population, run_scenario, size_design, write_tau_hats, Calibration, CensoringTargets, FormulaChoice,
    Scenario, ScenarioReport, SizedDesign,
};
