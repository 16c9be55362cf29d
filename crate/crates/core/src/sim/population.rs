use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open_uniform, standard_exponential, standard_normal, stream_rng};
use crate::special::expit;

const CHUNK: usize = 4096;

/// Lower Cholesky factor of the 3x3 equicorrelation matrix with rho = 0.5.
const CHOL_EQUI_HALF: [[f64; 3]; 3] = [
    [1.0, 0.0, 0.0],
    [0.5, 0.866_025_403_784_438_6, 0.0],
    [0.5, 0.288_675_134_594_812_9, 0.816_496_580_927_726],
];

pub const BETA_PS: [f64; 6] = [0.2, 0.3, -0.3, -0.2, -0.3, 0.2];
pub const THETA: [f64; 6] = [-0.4, -0.2, 0.1, 0.1, 0.2, -0.3];

/// Model constants of the synthetic superpopulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationModel {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_beta_ps")]
    pub beta_ps: [f64; 6],
    #[serde(default = "default_theta")]
    pub theta: [f64; 6],
    #[serde(default = "default_k")]
    pub weibull_k: f64,
    #[serde(default = "default_s")]
    pub weibull_s: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_m() -> usize {
    100_000
}
fn default_beta_ps() -> [f64; 6] {
    BETA_PS
}
fn default_theta() -> [f64; 6] {
    THETA
}
fn default_k() -> f64 {
    1.2
}
fn default_s() -> f64 {
    3.0
}

impl Default for PopulationModel {
    fn default() -> Self {
        PopulationModel {
            m: default_m(),
            beta_ps: BETA_PS,
            theta: THETA,
            weibull_k: default_k(),
            weibull_s: default_s(),
            seed: 0,
        }
    }
}

impl PopulationModel {
    pub fn validate(&self) -> Result<()> {
        if self.m < 10_000 {
            return Err(Error::Domain {
                field: "m",
                value: self.m as f64,
                requirement: "m >= 10000",
            });
        }
        for (field, v) in [("weibull_k", self.weibull_k), ("weibull_s", self.weibull_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    field,
                    value: v,
                    requirement: "> 0",
                });
            }
        }
        if self.beta_ps.iter().chain(&self.theta).any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                field: "beta_ps",
                value: f64::NAN,
                requirement: "finite coefficients",
            });
        }
        Ok(())
    }
}

/// Tunable parameters of the data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    /// Overlap scale on the propensity linear predictor.
    pub c: f64,
    pub beta0: f64,
    /// Treatment effect on the conditional log hazard.
    pub alpha_trt: f64,
    pub t_dagger: f64,
    /// Exponential censoring rates for control and treated; 0 disables.
    pub nu: [f64; 2],
}

/// Superpopulation with its stored random inputs, so the mechanism can be
/// re-tuned without redrawing (common random numbers across calibration steps).
#[derive(Debug, Clone)]
pub struct Superpopulation {
    pub model: PopulationModel,
    /// Row-major covariates, 6 per unit.
    pub x: Vec<[f64; 6]>,
    /// `X beta_ps` and `X theta`.
    pub xb: Vec<f64>,
    pub xt: Vec<f64>,
    /// Standard exponentials behind T(0), T(1) and the censoring time.
    e0: Vec<f64>,
    e1: Vec<f64>,
    ec: Vec<f64>,
    /// Uniform deciding treatment.
    uz: Vec<f64>,

    pub mechanism: Mechanism,
    pub ps: Vec<f64>,
    pub z: Vec<bool>,
    pub t0: Vec<f64>,
    pub t1: Vec<f64>,
    pub censor: Vec<f64>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
}

struct UnitDraw {
    x: [f64; 6],
    e0: f64,
    e1: f64,
    ec: f64,
    uz: f64,
}

pub fn generate_superpopulation(model: &PopulationModel, mechanism: Mechanism) -> Result<Superpopulation> {
    model.validate()?;
    let m = model.m;
    let chunks = m.div_ceil(CHUNK);
    let draws: Vec<Vec<UnitDraw>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream_rng(model.seed, ci as u64);
            let len = CHUNK.min(m - ci * CHUNK);
            (0..len)
                .map(|_| {
                    let g = [
                        standard_normal(&mut rng),
                        standard_normal(&mut rng),
                        standard_normal(&mut rng),
                    ];
                    let mut x = [0.0; 6];
                    for (i, row) in CHOL_EQUI_HALF.iter().enumerate() {
                        x[i] = row[0] * g[0] + row[1] * g[1] + row[2] * g[2];
                    }
                    for xi in x.iter_mut().skip(3) {
                        *xi = if open_uniform(&mut rng) < 0.5 { 1.0 } else { 0.0 };
                    }
                    UnitDraw {
                        x,
                        e0: standard_exponential(&mut rng),
                        e1: standard_exponential(&mut rng),
                        ec: standard_exponential(&mut rng),
                        uz: open_uniform(&mut rng),
                    }
                })
                .collect()
        })
        .collect();

    let units = draws.into_iter().flatten();
    let mut x = Vec::with_capacity(m);
    let (mut e0, mut e1, mut ec, mut uz) = (
        Vec::with_capacity(m),
        Vec::with_capacity(m),
        Vec::with_capacity(m),
        Vec::with_capacity(m),
    );
    for u in units {
        x.push(u.x);
        e0.push(u.e0);
        e1.push(u.e1);
        ec.push(u.ec);
        uz.push(u.uz);
    }
    let dot = |row: &[f64; 6], coef: &[f64; 6]| row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
    let xb = x.iter().map(|r| dot(r, &model.beta_ps)).collect();
    let xt = x.iter().map(|r| dot(r, &model.theta)).collect();

    let mut pop = Superpopulation {
        model: model.clone(),
        x,
        xb,
        xt,
        e0,
        e1,
        ec,
        uz,
        mechanism,
        ps: vec![0.0; m],
        z: vec![false; m],
        t0: vec![0.0; m],
        t1: vec![0.0; m],
        censor: vec![f64::INFINITY; m],
        time: vec![0.0; m],
        event: vec![false; m],
    };
    pop.set_assignment(mechanism.c, mechanism.beta0);
    pop.set_alpha(mechanism.alpha_trt);
    pop.set_censoring(mechanism.t_dagger, mechanism.nu);
    Ok(pop)
}

impl Superpopulation {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Propensity score `expit(beta0 + c X beta)` at arbitrary `(c, beta0)`.
    pub fn ps_at(&self, i: usize, c: f64, beta0: f64) -> f64 {
        expit(beta0 + c * self.xb[i])
    }

    pub fn set_assignment(&mut self, c: f64, beta0: f64) {
        self.mechanism.c = c;
        self.mechanism.beta0 = beta0;
        for i in 0..self.len() {
            let e = self.ps_at(i, c, beta0);
            self.ps[i] = e;
            self.z[i] = self.uz[i] < e;
        }
        self.refresh_observed();
    }

    /// Inverse transform of the Weibull proportional-hazards model.
    pub fn set_alpha(&mut self, alpha_trt: f64) {
        self.mechanism.alpha_trt = alpha_trt;
        let (k, s) = (self.model.weibull_k, self.model.weibull_s);
        for i in 0..self.len() {
            self.t0[i] = s * (self.e0[i] / self.xt[i].exp()).powf(1.0 / k);
            self.t1[i] = s * (self.e1[i] / (alpha_trt + self.xt[i]).exp()).powf(1.0 / k);
        }
        self.refresh_observed();
    }

    pub fn set_censoring(&mut self, t_dagger: f64, nu: [f64; 2]) {
        self.mechanism.t_dagger = t_dagger;
        self.mechanism.nu = nu;
        self.refresh_observed();
    }

    /// `E_c / min(T*, t_dagger)`: unit `i` is randomly censored exactly when
    /// its arm's censoring rate exceeds this ratio.
    pub(crate) fn censor_threshold(&self, i: usize) -> f64 {
        self.ec[i] / self.factual_time(i).min(self.mechanism.t_dagger)
    }

    pub fn factual_time(&self, i: usize) -> f64 {
        if self.z[i] {
            self.t1[i]
        } else {
            self.t0[i]
        }
    }

    fn refresh_observed(&mut self) {
        let t_dagger = self.mechanism.t_dagger;
        let nu = self.mechanism.nu;
        for i in 0..self.len() {
            let rate = nu[usize::from(self.z[i])];
            self.censor[i] = if rate > 0.0 { self.ec[i] / rate } else { f64::INFINITY };
            let t_star = self.factual_time(i);
            let stop = self.censor[i].min(t_dagger);
            self.event[i] = t_star <= stop;
            self.time[i] = t_star.min(stop);
        }
    }

    /// Observed event rate among units with treatment `arm`.
    pub fn event_rate(&self, arm: bool) -> f64 {
        let (mut n, mut d) = (0usize, 0usize);
        for i in 0..self.len() {
            if self.z[i] == arm {
                n += 1;
                d += usize::from(self.event[i]);
            }
        }
        d as f64 / n.max(1) as f64
    }

    /// Share of arm-`arm` units whose random censoring precedes both the event
    /// and the end of follow-up.
    pub fn censoring_share(&self, arm: bool) -> f64 {
        let (mut n, mut c) = (0usize, 0usize);
        for i in 0..self.len() {
            if self.z[i] == arm {
                n += 1;
                let t_star = self.factual_time(i);
                c += usize::from(self.censor[i] < t_star.min(self.mechanism.t_dagger));
            }
        }
        c as f64 / n.max(1) as f64
    }

    pub fn treated_share(&self) -> f64 {
        self.z.iter().filter(|&&z| z).count() as f64 / self.len() as f64
    }

    pub fn mean_ps(&self) -> f64 {
        chunked_mean(&self.ps)
    }
}

/// Mean with a fixed summation order regardless of thread count.
pub(crate) fn chunked_mean(v: &[f64]) -> f64 {
    let parts: Vec<f64> = v.par_chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    parts.iter().sum::<f64>() / v.len() as f64
}
