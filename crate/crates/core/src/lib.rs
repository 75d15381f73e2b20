//! Parametric estimation by minimizing proper scoring rules, with
//! Godambe-sandwich inference, calibrated ratio statistics, influence
//! diagnostics and a Monte Carlo coverage harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimate;
pub mod infer;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod robust;
pub mod simlab;

pub use data::Dataset;
pub use error::{Error, Result};
pub mod numdiff;
pub mod rules;

pub use rules::{ScoreEval, ScoringRule};
