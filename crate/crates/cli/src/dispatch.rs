use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use survpower_core::design_effect::{
    kappa_de_monte_carlo, kappa_ipw_analytic, sample_size_with_vif, KappaEstimate, KappaOptions, WeightKind,
};
use survpower_core::epsilon::epsilon_bound;
use survpower_core::formulas::{
    conservativeness_gamma, power_at_n, raw_sample_size, sample_size, units_from_events, v_freedman, v_hsieh_lavori,
    v_obs, v_rct, v_schoenfeld, DesignInputs, VarianceValue,
};
use survpower_core::overlap::{min_phi_for_finite_variance, solve_ab, BetaOverlap};
use survpower_core::sim::{run_scenario, Scenario};
use survpower_core::VERSION;

use crate::error::{ApiError, ErrorClass};
use crate::payload::{kappa_options, BoundsRequest, CurveRequest, ObsRequest, RctRequest, Sweep, VifRequest};
use crate::report::{
    BoundsReport, Comparators, CurvePoint, CurveReport, OverlapInfo, PowerReport, Sensitivity, SimulateReport,
    VifReport,
};

const MAX_CURVE_POINTS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rct,
    Obs,
    Vif,
    Bounds,
    Curve,
    Simulate,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Rct,
        Command::Obs,
        Command::Vif,
        Command::Bounds,
        Command::Curve,
        Command::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Rct => "rct",
            Command::Obs => "obs",
            Command::Vif => "vif",
            Command::Bounds => "bounds",
            Command::Curve => "curve",
            Command::Simulate => "simulate",
        }
    }

    /// Whether the payload has a `seed` field.
    pub fn takes_seed(self) -> bool {
        matches!(self, Command::Obs | Command::Vif | Command::Curve | Command::Simulate)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub body: Value,
    /// Per-replicate estimates of a simulation, for the optional CSV.
    pub tau_hats: Option<Vec<Option<f64>>>,
}

impl Outcome {
    pub fn render(&self, pretty: bool) -> String {
        let out = if pretty {
            serde_json::to_string_pretty(&self.body)
        } else {
            serde_json::to_string(&self.body)
        };
        out.expect("values always serialize")
    }
}

/// Parses `body` as the payload of `command`, runs it and returns the result
/// document. `seed` overrides the payload's own seed.
pub fn dispatch(command: Command, body: &[u8], seed: Option<u64>) -> Result<Outcome, ApiError> {
    let mut value = parse_json(body)?;
    let Value::Object(map) = &mut value else {
        return Err(ApiError::validation("the payload must be a JSON object", None));
    };
    if let Some(seed) = seed {
        if !command.takes_seed() {
            return Err(ApiError::validation(format!("`{command}` takes no seed"), Some("seed")));
        }
        map.insert("seed".into(), seed.into());
    }
    let mut tau_hats = None;
    let body = match command {
        Command::Rct => rct(from_value(value)?)?,
        Command::Obs => obs(from_value(value)?)?,
        Command::Vif => vif(from_value(value)?)?,
        Command::Bounds => bounds(from_value(value)?)?,
        Command::Curve => curve(from_value(value)?)?,
        Command::Simulate => {
            let (body, taus) = simulate(from_value(value)?)?;
            tau_hats = Some(taus);
            body
        }
    };
    Ok(Outcome { body, tau_hats })
}

fn parse_json(body: &[u8]) -> Result<Value, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let value: Value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = path_field(e.path());
        ApiError::new(
            ErrorClass::Validation,
            "invalid-json",
            e.into_inner().to_string(),
            field,
        )
    })?;
    de.end()
        .map_err(|e| ApiError::new(ErrorClass::Validation, "invalid-json", e.to_string(), None))?;
    Ok(value)
}

fn from_value<T: DeserializeOwned>(value: Value) -> Result<T, ApiError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = path_field(e.path());
        let message = e.into_inner().to_string();
        // Unknown fields already end the path; missing ones do not.
        let field = match (quoted_field(&message), path) {
            (Some(name), Some(p)) if p == name || p.ends_with(&format!(".{name}")) => Some(p),
            (Some(name), Some(p)) => Some(format!("{p}.{name}")),
            (Some(name), None) => Some(name.to_string()),
            (None, p) => p,
        };
        ApiError::new(ErrorClass::Validation, "invalid-request", message, field)
    })
}

fn path_field(path: &serde_path_to_error::Path) -> Option<String> {
    let s = path.to_string();
    (s != "." && !s.is_empty()).then_some(s)
}

/// Field named by serde's "unknown field `x`" and "missing field `x`" messages.
fn quoted_field(message: &str) -> Option<&str> {
    let rest = message
        .strip_prefix("unknown field `")
        .or_else(|| message.strip_prefix("missing field `"))?;
    rest.split('`').next()
}

fn to_value<T: Serialize>(report: &T) -> Result<Value, ApiError> {
    serde_json::to_value(report).map_err(|e| ApiError::internal(e.to_string()))
}

/// Variance, size and design effect of one design.
struct Sized {
    variance: VarianceValue,
    n: u64,
    vif: Option<f64>,
    kappa: Option<KappaEstimate>,
}

/// Randomized when `beta` is absent; otherwise IPW uses the closed form and
/// other schemes the Monte Carlo design effect times the trial variance.
fn size(
    design: &DesignInputs,
    beta: Option<&BetaOverlap>,
    scheme: WeightKind,
    opts: &KappaOptions,
) -> Result<Sized, ApiError> {
    let (r, tau0) = (design.r, design.tau0);
    let v_base = v_rct(r, tau0, design.d1, design.d0)?;
    let n_for = |v: VarianceValue| sample_size(v, tau0, design.alpha, design.power, design.sides);
    let sized = match (beta, scheme) {
        (None, _) => Sized {
            variance: v_base,
            n: n_for(v_base)?,
            vif: None,
            kappa: None,
        },
        (Some(beta), WeightKind::Ipw) => {
            let v = v_obs(r, tau0, design.d1, design.d0, beta)?;
            Sized {
                variance: v,
                n: n_for(v)?,
                vif: Some(v.value / v_base.value),
                kappa: None,
            }
        }
        (Some(beta), kind) => {
            let k = kappa_de_monte_carlo(r, beta.phi, &kind.scheme(r), opts)?;
            let raw = raw_sample_size(v_base, tau0, design.alpha, design.power, design.sides)?;
            Sized {
                variance: VarianceValue::units(k.value * v_base.value),
                n: sample_size_with_vif(raw, k.value)?,
                vif: Some(k.value),
                kappa: Some(k),
            }
        }
    };
    Ok(sized)
}

fn achieved_power(design: &DesignInputs, v: VarianceValue, n: u64) -> Result<f64, ApiError> {
    Ok(power_at_n(v, design.tau0, design.alpha, n as f64, design.sides)?)
}

fn comparators(design: &DesignInputs, beta: Option<&BetaOverlap>) -> Result<Comparators, ApiError> {
    let d = design.d();
    let units = |v: VarianceValue| -> Result<u64, ApiError> {
        let raw = raw_sample_size(v, design.tau0, design.alpha, design.power, design.sides)?;
        Ok(units_from_events(raw, d)?)
    };
    Ok(Comparators {
        schoenfeld_n: units(v_schoenfeld(design.r)?)?,
        freedman_n: units(v_freedman(design.r, design.tau0)?)?,
        hsieh_lavori_n: beta.map(|b| units(v_hsieh_lavori(design.r, b)?)).transpose()?,
    })
}

fn overlap(r: f64, phi: f64) -> Result<(BetaOverlap, OverlapInfo), ApiError> {
    let beta = solve_ab(r, phi)?;
    let info = OverlapInfo::new(&beta, min_phi_for_finite_variance(r)?);
    Ok((beta, info))
}

fn rct(req: RctRequest) -> Result<Value, ApiError> {
    let design = req.design().resolve(None)?;
    let sized = size(&design, None, WeightKind::Ipw, &KappaOptions::default())?;
    to_value(&PowerReport {
        command: "rct",
        n: sized.n,
        expected_events: sized.n as f64 * design.d(),
        variance_units: sized.variance.value,
        achieved_power: achieved_power(&design, sized.variance, sized.n)?,
        vif: None,
        comparators: comparators(&design, None)?,
        sensitivity: None,
        overlap: None,
        kappa: None,
        conservativeness: Some(conservativeness_gamma(design.r, design.tau0)?),
        inputs: req,
        engine_version: VERSION,
        seed: None,
    })
}

fn obs(mut req: ObsRequest) -> Result<Value, ApiError> {
    let design = req.design().resolve(None)?;
    if req.sensitivity.is_some() && req.scheme != WeightKind::Ipw {
        return Err(ApiError::validation(
            "sensitivity bounds apply to IPW weights only",
            Some("sensitivity"),
        ));
    }
    let (beta, info) = overlap(design.r, req.phi)?;
    let opts = if req.scheme == WeightKind::Ipw {
        KappaOptions::default()
    } else {
        kappa_options(&mut req.draws, &mut req.seed, req.weight_cap)
    };
    let sized = size(&design, Some(&beta), req.scheme, &opts)?;
    let sensitivity = match &req.sensitivity {
        Some(sens) => Some(Sensitivity::from(&epsilon_bound(&design, &beta, sens)?)),
        None => None,
    };
    to_value(&PowerReport {
        command: "obs",
        n: sized.n,
        expected_events: sized.n as f64 * design.d(),
        variance_units: sized.variance.value,
        achieved_power: achieved_power(&design, sized.variance, sized.n)?,
        vif: sized.vif,
        comparators: comparators(&design, Some(&beta))?,
        sensitivity,
        overlap: Some(info),
        kappa: sized.kappa,
        conservativeness: None,
        seed: sized.kappa.map(|k| k.seed),
        inputs: req,
        engine_version: VERSION,
    })
}

fn vif(mut req: VifRequest) -> Result<Value, ApiError> {
    let opts = kappa_options(&mut req.draws, &mut req.seed, req.weight_cap);
    let (beta, info) = overlap(req.r, req.phi)?;
    let k = kappa_de_monte_carlo(req.r, req.phi, &req.scheme.scheme(req.r), &opts)?;
    let analytic = match req.scheme {
        WeightKind::Ipw => kappa_ipw_analytic(req.r, beta.a, beta.b).ok(),
        _ => None,
    };
    to_value(&VifReport {
        command: "vif",
        scheme: req.scheme,
        kappa: k.value,
        mc_std_error: k.mc_std_error,
        n_draws: k.n_draws,
        kappa_ipw_analytic: analytic,
        overlap: info,
        seed: k.seed,
        inputs: req,
        engine_version: VERSION,
    })
}

fn bounds(req: BoundsRequest) -> Result<Value, ApiError> {
    let design = req.design().resolve(None)?;
    let (beta, info) = overlap(design.r, req.phi)?;
    let bounds = epsilon_bound(&design, &beta, &req.sensitivity)?;
    to_value(&BoundsReport {
        command: "bounds",
        bounds,
        overlap: info,
        inputs: req,
        engine_version: VERSION,
    })
}

fn curve(mut req: CurveRequest) -> Result<Value, ApiError> {
    if !(2..=MAX_CURVE_POINTS).contains(&req.points) {
        return Err(ApiError::validation(
            format!("`points` must be between 2 and {MAX_CURVE_POINTS}"),
            Some("points"),
        ));
    }
    if req.from == req.to {
        return Err(ApiError::validation("the sweep range has zero width", Some("to")));
    }
    let uses_mc = req.scheme != WeightKind::Ipw && (req.phi.is_some() || req.sweep == Sweep::Phi);
    let opts = if uses_mc {
        kappa_options(&mut req.draws, &mut req.seed, req.weight_cap)
    } else {
        KappaOptions::default()
    };
    let fields = req.design();
    let steps = f64::from(req.points - 1);
    let xs: Vec<f64> = (0..req.points)
        .map(|i| req.from + (req.to - req.from) * f64::from(i) / steps)
        .collect();
    let fixed_beta = req.phi.map(|phi| solve_ab(fields.r, phi)).transpose()?;

    let mut points = Vec::with_capacity(xs.len());
    match req.sweep {
        Sweep::N => {
            if req.from.min(req.to) < 1.0 {
                return Err(ApiError::validation("sample sizes start at 1", Some("from")));
            }
            let design = fields.resolve(None)?;
            let sized = size(&design, fixed_beta.as_ref(), req.scheme, &opts)?;
            for x in xs {
                let n = x.round() as u64;
                points.push(CurvePoint {
                    x,
                    n,
                    power: achieved_power(&design, sized.variance, n)?,
                });
            }
        }
        Sweep::Phi => {
            let design = fields.resolve(None)?;
            for x in xs {
                let beta = solve_ab(design.r, x)?;
                let sized = size(&design, Some(&beta), req.scheme, &opts)?;
                points.push(CurvePoint {
                    x,
                    n: sized.n,
                    power: achieved_power(&design, sized.variance, sized.n)?,
                });
            }
        }
        Sweep::Hr => {
            for x in xs {
                if x <= 0.0 {
                    return Err(ApiError::validation("hazard ratios must be positive", Some("from")));
                }
                let design = fields.resolve(Some(x.ln()))?;
                let sized = size(&design, fixed_beta.as_ref(), req.scheme, &opts)?;
                points.push(CurvePoint {
                    x,
                    n: sized.n,
                    power: achieved_power(&design, sized.variance, sized.n)?,
                });
            }
        }
    }
    to_value(&CurveReport {
        command: "curve",
        sweep: req.sweep,
        points,
        seed: uses_mc.then_some(opts.seed),
        inputs: req,
        engine_version: VERSION,
    })
}

fn simulate(scn: Scenario) -> Result<(Value, Vec<Option<f64>>), ApiError> {
    let mut report = run_scenario(&scn)?;
    let tau_hats = std::mem::take(&mut report.power.tau_hats);
    let body = to_value(&SimulateReport {
        command: "simulate",
        calibration: report.calibration,
        design: report.design,
        power: report.power,
        seed: scn.seed,
        inputs: scn,
        engine_version: VERSION,
    })?;
    Ok((body, tau_hats))
}
