//! Weighted Cox regression on a binary treatment with a robust sandwich
//! variance, logistic propensity scores, Kaplan–Meier and the Wald test.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulas::Sides;
use crate::special::{expit, normal_cdf};

const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 40;
const SCORE_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const DIVERGENCE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub time: f64,
    pub event: bool,
    pub z: bool,
    #[serde(default)]
    pub x: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub tau_hat: f64,
    pub robust_se: f64,
    pub naive_se: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Score at `tau_hat`.
    pub score: f64,
    /// Observed information at `tau_hat`.
    pub information: f64,
}

/// Column view of a dataset for the Cox routines.
#[derive(Debug, Clone, Copy)]
pub struct CoxData<'a> {
    pub time: &'a [f64],
    pub event: &'a [bool],
    pub z: &'a [bool],
    pub weight: &'a [f64],
}

/// Weighted risk-set totals at one distinct event time.
#[derive(Debug, Clone, Copy)]
struct RiskSet {
    time: f64,
    at_risk0: f64,
    at_risk1: f64,
    events0: f64,
    events1: f64,
}

impl RiskSet {
    fn pi(&self, theta: f64) -> f64 {
        let num = theta * self.at_risk1;
        num / (self.at_risk0 + num)
    }
}

struct Prepared {
    risk_sets: Vec<RiskSet>,
}

impl<'a> CoxData<'a> {
    fn validate(&self) -> Result<()> {
        let n = self.time.len();
        if self.event.len() != n || self.z.len() != n || self.weight.len() != n {
            return Err(Error::Data("column lengths differ".into()));
        }
        if n == 0 {
            return Err(Error::Data("no records".into()));
        }
        for i in 0..n {
            if !(self.time[i] >= 0.0 && self.time[i].is_finite()) {
                return Err(Error::Data(format!("record {i}: time must be finite and >= 0")));
            }
            if !(self.weight[i] >= 0.0 && self.weight[i].is_finite()) {
                return Err(Error::Data(format!("record {i}: weight must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let n = self.time.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.time[j].total_cmp(&self.time[i]));

        let mut risk_sets = Vec::new();
        let (mut w0, mut w1) = (0.0, 0.0);
        let mut k = 0;
        while k < n {
            let t = self.time[order[k]];
            let (mut d0, mut d1) = (0.0, 0.0);
            let mut any_event = false;
            while k < n && self.time[order[k]] == t {
                let i = order[k];
                let w = self.weight[i];
                if self.z[i] {
                    w1 += w;
                } else {
                    w0 += w;
                }
                if self.event[i] {
                    any_event = true;
                    if self.z[i] {
                        d1 += w;
                    } else {
                        d0 += w;
                    }
                }
                k += 1;
            }
            if any_event {
                risk_sets.push(RiskSet {
                    time: t,
                    at_risk0: w0,
                    at_risk1: w1,
                    events0: d0,
                    events1: d1,
                });
            }
        }
        risk_sets.reverse();

        let total1: f64 = risk_sets.iter().map(|r| r.events1).sum();
        let total0: f64 = risk_sets.iter().map(|r| r.events0).sum();
        if total1 + total0 <= 0.0 {
            return Err(Error::Degenerate("no weighted events".into()));
        }
        if total1 <= 0.0 || total0 <= 0.0 {
            return Err(Error::Separation(
                "all weighted events occur in one arm; the partial likelihood is monotone".into(),
            ));
        }
        Ok(Prepared { risk_sets })
    }
}

impl Prepared {
    fn score_info(&self, tau: f64) -> (f64, f64) {
        let theta = tau.exp();
        let (mut u, mut info) = (0.0, 0.0);
        for rs in &self.risk_sets {
            let pi = rs.pi(theta);
            let d = rs.events0 + rs.events1;
            u += rs.events1 - d * pi;
            info += d * pi * (1.0 - pi);
        }
        (u, info)
    }

    fn newton(&self) -> Result<(f64, usize)> {
        let mut tau = 0.0;
        let (mut u, mut info) = self.score_info(tau);
        for iter in 1..=MAX_NEWTON {
            if u.abs() < SCORE_TOL {
                return Ok((tau, iter - 1));
            }
            if !(info > 0.0) {
                return Err(Error::SingularInformation(info));
            }
            let mut step = u / info;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let cand = tau + step;
                if cand.abs() > DIVERGENCE {
                    return Err(Error::Separation(format!(
                        "log hazard ratio diverged past ±{DIVERGENCE}"
                    )));
                }
                let (cu, ci) = self.score_info(cand);
                if cu.abs() < u.abs() || step.abs() < STEP_TOL {
                    accepted = Some((cand, cu, ci));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, cu, ci)) = accepted else {
                return Err(Error::Convergence {
                    what: "Cox Newton step halving",
                    iterations: iter,
                });
            };
            let moved = (cand - tau).abs();
            tau = cand;
            u = cu;
            info = ci;
            if moved < STEP_TOL || u.abs() < SCORE_TOL {
                return Ok((tau, iter));
            }
        }
        Err(Error::Convergence {
            what: "Cox Newton iteration",
            iterations: MAX_NEWTON,
        })
    }

    /// Per-subject influence terms `eta_i` at `tau`.
    fn influence(&self, data: &CoxData<'_>, tau: f64) -> Vec<f64> {
        let theta = tau.exp();
        let m = self.risk_sets.len();
        // Cumulative dΛ and π dΛ over event times.
        let mut cum_haz = Vec::with_capacity(m);
        let mut cum_pi_haz = Vec::with_capacity(m);
        let mut pis = Vec::with_capacity(m);
        let (mut a, mut b) = (0.0, 0.0);
        for rs in &self.risk_sets {
            let pi = rs.pi(theta);
            let dl = (rs.events0 + rs.events1) / (rs.at_risk0 + theta * rs.at_risk1);
            a += dl;
            b += pi * dl;
            cum_haz.push(a);
            cum_pi_haz.push(b);
            pis.push(pi);
        }
        (0..data.time.len())
            .map(|i| {
                let t = data.time[i];
                let zi = if data.z[i] { 1.0 } else { 0.0 };
                let w = data.weight[i];
                // Number of event times <= t.
                let k = self.risk_sets.partition_point(|rs| rs.time <= t);
                let mut eta = 0.0;
                if k > 0 {
                    if data.event[i] {
                        eta += w * (zi - pis[k - 1]);
                    }
                    let risk = if data.z[i] { theta } else { 1.0 };
                    eta -= w * risk * (zi * cum_haz[k - 1] - cum_pi_haz[k - 1]);
                }
                eta
            })
            .collect()
    }

    fn robust_variance(&self, data: &CoxData<'_>, tau: f64) -> Result<f64> {
        let (_, info) = self.score_info(tau);
        if !(info > 0.0) {
            return Err(Error::SingularInformation(info));
        }
        let b: f64 = self.influence(data, tau).iter().map(|e| e * e).sum();
        Ok(b / (info * info))
    }
}

/// Weighted Cox fit with `Z` as the only covariate, Breslow ties.
pub fn fit_weighted_cox_data(data: &CoxData<'_>) -> Result<CoxFit> {
    let prep = data.prepare()?;
    let (tau, iterations) = prep.newton()?;
    let (score, information) = prep.score_info(tau);
    if !(information > 0.0) {
        return Err(Error::SingularInformation(information));
    }
    let var = prep.robust_variance(data, tau)?;
    Ok(CoxFit {
        tau_hat: tau,
        robust_se: var.sqrt(),
        naive_se: 1.0 / information.sqrt(),
        iterations,
        converged: true,
        score,
        information,
    })
}

struct Columns {
    time: Vec<f64>,
    event: Vec<bool>,
    z: Vec<bool>,
    weight: Vec<f64>,
}

impl Columns {
    fn from_records(records: &[SubjectRecord]) -> Self {
        Columns {
            time: records.iter().map(|r| r.time).collect(),
            event: records.iter().map(|r| r.event).collect(),
            z: records.iter().map(|r| r.z).collect(),
            weight: records.iter().map(|r| r.weight).collect(),
        }
    }

    fn view(&self) -> CoxData<'_> {
        CoxData {
            time: &self.time,
            event: &self.event,
            z: &self.z,
            weight: &self.weight,
        }
    }
}

pub fn fit_weighted_cox(records: &[SubjectRecord]) -> Result<CoxFit> {
    fit_weighted_cox_data(&Columns::from_records(records).view())
}

/// Sandwich variance of the log hazard ratio evaluated at `tau_hat`.
pub fn robust_variance(records: &[SubjectRecord], tau_hat: f64) -> Result<f64> {
    let cols = Columns::from_records(records);
    let data = cols.view();
    data.prepare()?.robust_variance(&data, tau_hat)
}

/// Weighted score and information of the partial likelihood at `tau`.
pub fn cox_score(records: &[SubjectRecord], tau: f64) -> Result<(f64, f64)> {
    let cols = Columns::from_records(records);
    Ok(cols.view().prepare()?.score_info(tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    /// Intercept first, then one coefficient per covariate.
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub iterations: usize,
}

const LOGIT_MAX_ITER: usize = 100;
const LOGIT_GRAD_TOL: f64 = 1e-8;
const LOGIT_DIVERGENCE: f64 = 30.0;

/// Logistic regression of `z` on an intercept and the rows of `x` by IRLS.
pub fn fit_logistic(x: &[Vec<f64>], z: &[bool]) -> Result<PropensityFit> {
    let n = z.len();
    if x.len() != n || n == 0 {
        return Err(Error::Data("covariate rows and treatment lengths differ".into()));
    }
    let p = x[0].len();
    if x.iter().any(|row| row.len() != p) {
        return Err(Error::Data("covariate dimension is not uniform".into()));
    }
    let n1 = z.iter().filter(|&&t| t).count();
    if n1 == 0 || n1 == n {
        return Err(Error::Separation("only one treatment class present".into()));
    }
    let k = p + 1;
    let design = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let y = DVector::from_iterator(n, z.iter().map(|&t| if t { 1.0 } else { 0.0 }));

    let gram = design.tr_mul(&design);
    let eig = gram.clone().symmetric_eigenvalues();
    let max_eig = eig.max();
    if !(eig.min() > 1e-10 * max_eig) {
        return Err(Error::RankDeficient);
    }

    let loglik = |eta: &DVector<f64>| -> f64 {
        eta.iter()
            .zip(y.iter())
            .map(|(&e, &yi)| {
                // y*eta - log(1 + exp(eta)), overflow-safe.
                let log1pexp = if e > 0.0 {
                    e + (-e).exp().ln_1p()
                } else {
                    e.exp().ln_1p()
                };
                yi * e - log1pexp
            })
            .sum()
    };

    let mut beta = DVector::<f64>::zeros(k);
    let mut eta = &design * &beta;
    let mut ll = loglik(&eta);
    for iter in 1..=LOGIT_MAX_ITER {
        let mu = eta.map(expit);
        let grad = design.tr_mul(&(&y - &mu));
        if grad.norm() < LOGIT_GRAD_TOL {
            return Ok(PropensityFit {
                coefficients: beta.iter().copied().collect(),
                fitted: mu.iter().copied().collect(),
                iterations: iter - 1,
            });
        }
        let wts = mu.map(|m| m * (1.0 - m));
        let mut weighted = design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= wts[i];
        }
        let hess = design.tr_mul(&weighted);
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::Separation("information matrix lost positive definiteness".into()))?;
        let mut step = chol.solve(&grad);
        let mut improved = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &beta + &step;
            let cand_eta = &design * &cand;
            let cand_ll = loglik(&cand_eta);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                eta = cand_eta;
                ll = cand_ll;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            return Err(Error::Convergence {
                what: "logistic IRLS step halving",
                iterations: iter,
            });
        }
        if eta.amax() > LOGIT_DIVERGENCE {
            return Err(Error::Separation("fitted propensity scores approach 0 or 1".into()));
        }
        if step.norm() < 1e-14 * (1.0 + beta.norm()) {
            let mu = eta.map(expit);
            let grad = design.tr_mul(&(&y - &mu));
            if grad.norm() < 1e-6 * n as f64 {
                return Ok(PropensityFit {
                    coefficients: beta.iter().copied().collect(),
                    fitted: mu.iter().copied().collect(),
                    iterations: iter,
                });
            }
        }
    }
    Err(Error::Convergence {
        what: "logistic IRLS",
        iterations: LOGIT_MAX_ITER,
    })
}

pub fn fit_logistic_ps(records: &[SubjectRecord]) -> Result<PropensityFit> {
    let x: Vec<Vec<f64>> = records.iter().map(|r| r.x.clone()).collect();
    let z: Vec<bool> = records.iter().map(|r| r.z).collect();
    fit_logistic(&x, &z)
}

/// Weighted product-limit estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier {
    /// `(event time, survival just after it)` in increasing time order.
    pub steps: Vec<(f64, f64)>,
}

impl KaplanMeier {
    pub fn fit(time: &[f64], event: &[bool], weight: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&i, &j| time[i].total_cmp(&time[j]));
        let mut at_risk: f64 = weight.iter().sum();
        let mut surv = 1.0;
        let mut steps = Vec::new();
        let mut k = 0;
        while k < order.len() {
            let t = time[order[k]];
            let (mut deaths, mut leaving) = (0.0, 0.0);
            while k < order.len() && time[order[k]] == t {
                let i = order[k];
                if event[i] {
                    deaths += weight[i];
                }
                leaving += weight[i];
                k += 1;
            }
            if deaths > 0.0 && at_risk > 0.0 {
                surv *= 1.0 - deaths / at_risk;
                steps.push((t, surv));
            }
            at_risk -= leaving;
        }
        KaplanMeier { steps }
    }

    /// Right-continuous survival at `t`.
    pub fn survival(&self, t: f64) -> f64 {
        let k = self.steps.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            1.0
        } else {
            self.steps[k - 1].1
        }
    }
}

pub fn kaplan_meier(records: &[SubjectRecord], at_time: f64) -> f64 {
    let cols = Columns::from_records(records);
    KaplanMeier::fit(&cols.time, &cols.event, &cols.weight).survival(at_time)
}

/// Alternative the one-sided test looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `tau < null_tau`: a protective treatment when the null is 0.
    #[default]
    Lower,
    Upper,
}

impl Direction {
    /// Direction of a postulated effect; `tau0 = 0` defaults to `Lower`.
    pub fn of(tau0: f64) -> Self {
        if tau0 > 0.0 {
            Direction::Upper
        } else {
            Direction::Lower
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

pub fn wald_test(
    tau_hat: f64,
    se: f64,
    null_tau: f64,
    alpha: f64,
    sides: Sides,
    direction: Direction,
) -> Result<WaldTest> {
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::Domain {
            field: "se",
            value: se,
            requirement: "finite and > 0",
        });
    }
    let stat = (tau_hat - null_tau) / se;
    let crit = sides.critical_value(alpha);
    let (p_value, reject) = match (sides, direction) {
        (Sides::One, Direction::Lower) => (normal_cdf(stat), stat < -crit),
        (Sides::One, Direction::Upper) => (normal_cdf(-stat), stat > crit),
        (Sides::Two, _) => (2.0 * normal_cdf(-stat.abs()), stat.abs() > crit),
    };
    Ok(WaldTest {
        statistic: stat,
        p_value,
        reject,
    })
}

/// Reads records with header `time,event,z[,x1..xp][,weight]`.
///
/// Covariate columns are ordered by their numeric suffix; a missing weight
/// column means unit weights.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<SubjectRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let col = |name: &str| find(name).ok_or_else(|| Error::Data(format!("missing column `{name}`")));
    let (ti, ei, zi) = (col("time")?, col("event")?, col("z")?);
    let wi = find("weight");
    let mut xcols: Vec<(usize, usize)> = Vec::new();
    for (pos, h) in headers.iter().enumerate() {
        if let Some(rest) = h.strip_prefix('x') {
            let idx: usize = rest
                .parse()
                .map_err(|_| Error::Data(format!("unrecognised column `{h}`")))?;
            xcols.push((idx, pos));
        } else if !matches!(h, "time" | "event" | "z" | "weight") {
            return Err(Error::Data(format!("unrecognised column `{h}`")));
        }
    }
    xcols.sort_unstable();
    for (k, &(idx, _)) in xcols.iter().enumerate() {
        if idx != k + 1 {
            return Err(Error::Data("covariate columns must be x1..xp without gaps".into()));
        }
    }

    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        let row = line + 2;
        let num = |pos: usize, name: &str| -> Result<f64> {
            rec.get(pos)
                .ok_or_else(|| Error::Data(format!("row {row}: missing `{name}`")))?
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("row {row}: `{name}` is not a number")))
        };
        let flag = |pos: usize, name: &str| -> Result<bool> {
            let v = num(pos, name)?;
            if v == 0.0 || v == 1.0 {
                Ok(v == 1.0)
            } else {
                Err(Error::Data(format!("row {row}: `{name}` must be 0 or 1")))
            }
        };
        let time = num(ti, "time")?;
        let weight = match wi {
            Some(pos) => num(pos, "weight")?,
            None => 1.0,
        };
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::Data(format!("row {row}: time must be finite and >= 0")));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Data(format!("row {row}: weight must be finite and >= 0")));
        }
        let x = xcols
            .iter()
            .map(|&(idx, pos)| num(pos, &format!("x{idx}")))
            .collect::<Result<Vec<_>>>()?;
        out.push(SubjectRecord {
            time,
            event: flag(ei, "event")?,
            z: flag(zi, "z")?,
            x,
            weight,
        });
    }
    Ok(out)
}
