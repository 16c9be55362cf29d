//! Balancing weights, the Kish design effect and its Monte Carlo population
//! limit under the Beta propensity model, plus the analytic IPW benchmarks.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulas::{ceil_count, check_r, check_rate, lambda_pair};
use crate::overlap::solve_ab;
use crate::rng::{beta, open_uniform, stream_rng};

pub type WeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Weight as a function of the propensity score, one rule per arm.
#[derive(Clone)]
pub enum WeightScheme {
    /// `r/e` for treated and `(1-r)/(1-e)` for controls.
    Ipw {
        r: f64,
    },
    /// `1-e` for treated and `e` for controls (ATO).
    Overlap,
    /// `1` for treated and `e/(1-e)` for controls (ATT).
    Treated,
    Custom {
        name: String,
        w1: WeightFn,
        w0: WeightFn,
    },
}

impl fmt::Debug for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightScheme::Ipw { r } => write!(f, "Ipw {{ r: {r} }}"),
            WeightScheme::Overlap => f.write_str("Overlap"),
            WeightScheme::Treated => f.write_str("Treated"),
            WeightScheme::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl WeightScheme {
    pub fn custom(
        name: impl Into<String>,
        w1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        w0: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        WeightScheme::Custom {
            name: name.into(),
            w1: Arc::new(w1),
            w0: Arc::new(w0),
        }
    }

    pub fn w1(&self, e: f64) -> f64 {
        match self {
            WeightScheme::Ipw { r } => r / e,
            WeightScheme::Overlap => 1.0 - e,
            WeightScheme::Treated => 1.0,
            WeightScheme::Custom { w1, .. } => w1(e),
        }
    }

    pub fn w0(&self, e: f64) -> f64 {
        match self {
            WeightScheme::Ipw { r } => (1.0 - r) / (1.0 - e),
            WeightScheme::Overlap => e,
            WeightScheme::Treated => e / (1.0 - e),
            WeightScheme::Custom { w0, .. } => w0(e),
        }
    }

    pub fn weight(&self, treated: bool, e: f64) -> f64 {
        if treated {
            self.w1(e)
        } else {
            self.w0(e)
        }
    }
}

/// Serializable name of a built-in scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    #[default]
    Ipw,
    Overlap,
    Treated,
}

impl WeightKind {
    pub fn scheme(self, r: f64) -> WeightScheme {
        match self {
            WeightKind::Ipw => WeightScheme::Ipw { r },
            WeightKind::Overlap => WeightScheme::Overlap,
            WeightKind::Treated => WeightScheme::Treated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub value: f64,
    pub mc_std_error: f64,
    pub n_draws: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaOptions {
    pub n_draws: u64,
    pub seed: u64,
    pub batches: u32,
    /// Upper cap applied to every weight; off by default.
    pub weight_cap: Option<f64>,
}

impl Default for KappaOptions {
    fn default() -> Self {
        KappaOptions {
            n_draws: 1_000_000,
            seed: 20_240_601,
            batches: 100,
            weight_cap: None,
        }
    }
}

/// Running sums for the Kish design effect.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KishAccumulator {
    n1: u64,
    n0: u64,
    sum1: f64,
    sum0: f64,
    sq1: f64,
    sq0: f64,
}

impl KishAccumulator {
    pub fn push(&mut self, treated: bool, w: f64) {
        if treated {
            self.n1 += 1;
            self.sum1 += w;
            self.sq1 += w * w;
        } else {
            self.n0 += 1;
            self.sum0 += w;
            self.sq0 += w * w;
        }
    }

    pub fn merge(&mut self, other: &KishAccumulator) {
        self.n1 += other.n1;
        self.n0 += other.n0;
        self.sum1 += other.sum1;
        self.sum0 += other.sum0;
        self.sq1 += other.sq1;
        self.sq0 += other.sq0;
    }

    pub fn value(&self) -> Result<f64> {
        if self.n1 == 0 || self.n0 == 0 {
            return Err(Error::Degenerate("an arm has no units".into()));
        }
        if !(self.sum1 > 0.0 && self.sum0 > 0.0) {
            return Err(Error::Degenerate("an arm has zero total weight".into()));
        }
        let harmonic = 1.0 / (1.0 / self.n1 as f64 + 1.0 / self.n0 as f64);
        Ok(harmonic * (self.sq1 / (self.sum1 * self.sum1) + self.sq0 / (self.sum0 * self.sum0)))
    }
}

/// Finite-sample Kish design effect of `(treated, weight)` pairs.
pub fn kish_design_effect(pairs: &[(bool, f64)]) -> Result<f64> {
    let mut acc = KishAccumulator::default();
    for &(z, w) in pairs {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Domain {
                field: "weight",
                value: w,
                requirement: "finite and >= 0",
            });
        }
        acc.push(z, w);
    }
    acc.value()
}

/// Monte Carlo estimate of the population design effect: draw `e ~ Beta(a, b)`
/// with `(a, b)` solved from `(r, phi)`, `Z ~ Bernoulli(e)`, weight by `scheme`
/// and evaluate the Kish design effect over all draws.
///
/// Draws are split into `batches` equal batches; batch `i` uses stream `i` of
/// the seeded generator. The standard error is the batch-means estimate.
pub fn kappa_de_monte_carlo(r: f64, phi: f64, scheme: &WeightScheme, opts: &KappaOptions) -> Result<KappaEstimate> {
    let beta_params = solve_ab(r, phi)?;
    if opts.n_draws < 10_000 {
        return Err(Error::Domain {
            field: "n_draws",
            value: opts.n_draws as f64,
            requirement: ">= 10000",
        });
    }
    if opts.batches < 2 || u64::from(opts.batches) > opts.n_draws {
        return Err(Error::Domain {
            field: "batches",
            value: f64::from(opts.batches),
            requirement: "2 <= batches <= n_draws",
        });
    }
    if let Some(cap) = opts.weight_cap {
        if !(cap > 0.0) {
            return Err(Error::Domain {
                field: "weight_cap",
                value: cap,
                requirement: "> 0",
            });
        }
    }
    let (a, b) = (beta_params.a, beta_params.b);
    let batches = u64::from(opts.batches);
    let per = opts.n_draws / batches;
    let extra = opts.n_draws % batches;

    let accs: Vec<KishAccumulator> = (0..batches)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(opts.seed, i);
            let n = per + u64::from(i < extra);
            let mut acc = KishAccumulator::default();
            for _ in 0..n {
                let e = beta(&mut rng, a, b);
                let z = open_uniform(&mut rng) < e;
                let mut w = scheme.weight(z, e);
                if let Some(cap) = opts.weight_cap {
                    w = w.min(cap);
                }
                acc.push(z, w);
            }
            acc
        })
        .collect();

    let mut total = KishAccumulator::default();
    let mut batch_values = Vec::with_capacity(accs.len());
    for acc in &accs {
        total.merge(acc);
        batch_values.push(acc.value()?);
    }
    let value = total.value()?;
    if !value.is_finite() {
        return Err(Error::Degenerate("non-finite design effect".into()));
    }
    let m = batch_values.len() as f64;
    let mean = batch_values.iter().sum::<f64>() / m;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(KappaEstimate {
        value,
        mc_std_error: (var / m).sqrt(),
        n_draws: opts.n_draws,
        seed: opts.seed,
    })
}

fn check_poles(a: f64, b: f64) -> Result<()> {
    if !(a > 1.0) {
        return Err(Error::Existence {
            condition: "a > 1",
            a,
            b,
        });
    }
    if !(b > 1.0) {
        return Err(Error::Existence {
            condition: "b > 1",
            a,
            b,
        });
    }
    Ok(())
}

/// Population design effect of IPW weights under Beta(a, b) scores.
pub fn kappa_ipw_analytic(r: f64, a: f64, b: f64) -> Result<f64> {
    check_r(r)?;
    check_poles(a, b)?;
    Ok(r * (1.0 - r) * (a + b - 1.0) * (1.0 / (a - 1.0) + 1.0 / (b - 1.0)))
}

struct ArmTerms {
    s: f64,
    l0sq: f64,
    l1sq: f64,
}

fn arm_terms(r: f64, tau0: f64, d1: f64, d0: f64) -> Result<ArmTerms> {
    let lam = lambda_pair(r, tau0)?;
    check_rate("d1", d1)?;
    check_rate("d0", d0)?;
    let l0sq = lam.lambda0 * lam.lambda0;
    let l1sq = lam.lambda1 * lam.lambda1;
    Ok(ArmTerms {
        s: r * l0sq * d1 + (1.0 - r) * l1sq * d0,
        l0sq,
        l1sq,
    })
}

/// `V_obs / V_RCT` in closed form.
pub fn vif_analytic_ratio(r: f64, tau0: f64, d1: f64, d0: f64, a: f64, b: f64) -> Result<f64> {
    let t = arm_terms(r, tau0, d1, d0)?;
    check_poles(a, b)?;
    Ok((a + b - 1.0) / t.s * (r * r * t.l0sq * d1 / (a - 1.0) + (1.0 - r).powi(2) * t.l1sq * d0 / (b - 1.0)))
}

/// `kappa_ipw_analytic - vif_analytic_ratio` in factored form.
pub fn kappa_discrepancy(r: f64, tau0: f64, d1: f64, d0: f64, a: f64, b: f64) -> Result<f64> {
    let t = arm_terms(r, tau0, d1, d0)?;
    check_poles(a, b)?;
    Ok(
        r * (1.0 - r) * (1.0 - 2.0 * r) * (a + b - 1.0) * (d0 * tau0.exp() - d1 * (-tau0).exp())
            / ((a - 1.0) * (b - 1.0) * t.s),
    )
}

/// `ceil(kappa * raw_n_rct)` where `raw_n_rct` is the unrounded trial size.
pub fn sample_size_with_vif(raw_n_rct: f64, kappa: f64) -> Result<u64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Domain {
            field: "kappa",
            value: kappa,
            requirement: "finite and > 0",
        });
    }
    if !(raw_n_rct >= 0.0 && raw_n_rct.is_finite()) {
        return Err(Error::Domain {
            field: "n_rct",
            value: raw_n_rct,
            requirement: "finite and >= 0",
        });
    }
    Ok(ceil_count(kappa * raw_n_rct))
}
