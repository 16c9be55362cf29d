//! Sample-size and power calculations for marginal hazard ratios estimated by
//! weighted Cox regression, in randomized trials and observational studies.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design_effect;
pub mod epsilon;
pub mod error;
pub mod formulas;
pub mod overlap;
pub mod rng;
pub mod sim;
pub mod special;
pub mod survival;

pub use error::{Error, Result};

/// Engine version reported alongside every result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
