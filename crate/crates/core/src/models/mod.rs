//! Parametric families: densities, θ-derivatives, samplers and domains.

mod density;
mod equicorr;
mod location;
mod mixture;
mod regression;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seed_rng, SimRng};

pub use density::StdDensity;
pub use equicorr::{equicorr_density, pairwise_loglik, pairwise_loglik_grad, EquiCorrelatedNormal};
pub use location::{LocationModel, LocationScaleModel};
pub use mixture::{ContaminationMixture, DataGenerator, ModelAt};
pub use regression::{ols, table3_design, LinearRegressionModel};

/// Open parameter interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Interval {
    Real,
    Positive,
    Open(f64, f64),
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Interval::Real => v.is_finite(),
            Interval::Positive => v > 0.0 && v.is_finite(),
            Interval::Open(lo, hi) => v > lo && v < hi,
        }
    }
}

/// `∫ p_θ(y)^γ dy` with its θ-gradient and θ-Hessian.
#[derive(Debug, Clone)]
pub struct PowerIntegral {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Derivatives of `ln p_θ(x)` in the response coordinates.
#[derive(Debug, Clone)]
pub struct ResponseDerivs {
    pub grad: DVector<f64>,
    pub laplacian: f64,
}

/// Where the response of a scalar-response model lives, for quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Real,
    Positive,
}

pub trait ParametricModel: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Parameter dimension `p`.
    fn param_dim(&self) -> usize;

    /// Width of one data row.
    fn obs_dim(&self) -> usize;

    /// Number of leading row entries that are random; the rest are covariates.
    fn response_dim(&self) -> usize {
        self.obs_dim()
    }

    fn domain(&self) -> Vec<Interval>;

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64;

    fn grad_log_density(&self, x: &[f64], theta: &[f64]) -> DVector<f64>;

    fn hess_log_density(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64>;

    fn density(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.log_density(x, theta).exp()
    }

    /// `∇_θ p_θ(x)`.
    fn grad_density(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        self.grad_log_density(x, theta) * self.density(x, theta)
    }

    /// True when `p_θ(x) = f(x - θ)`, so that `E_θ λ(X, θ)` vanishes for
    /// every Bregman gauge.
    fn is_location_family(&self) -> bool {
        false
    }

    /// Closed-form `∫ p_θ^γ` over the response, given the covariates in `x`.
    fn power_integral(&self, _x: &[f64], _theta: &[f64], _gamma: f64) -> Option<PowerIntegral> {
        None
    }

    fn support(&self) -> Support {
        Support::Real
    }

    /// Center and scale of the response distribution at `θ`, used to place
    /// quadrature nodes.
    fn response_location(&self, _x: &[f64], _theta: &[f64]) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn response_derivs(&self, _x: &[f64], _theta: &[f64]) -> Option<ResponseDerivs> {
        None
    }

    /// Hyvärinen score value and θ-gradient in closed form.
    fn hyvarinen(&self, _x: &[f64], _theta: &[f64]) -> Option<(f64, DVector<f64>)> {
        None
    }

    /// Draws observation number `index` (covariate rows are indexed).
    fn sample_one(&self, theta: &[f64], index: usize, rng: &mut SimRng) -> Vec<f64>;

    /// Method-of-moments starting value.
    fn default_init(&self, data: &Dataset) -> Result<DVector<f64>>;

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let dom = self.domain();
        if theta.len() != dom.len() {
            return Err(Error::ThetaOutOfDomain(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                dom.len(),
                theta.len()
            )));
        }
        for (j, (iv, &v)) in dom.iter().zip(theta).enumerate() {
            if !iv.contains(v) {
                return Err(Error::ThetaOutOfDomain(format!(
                    "{}: coordinate {j} = {v} outside {iv:?}",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. observations from `model` at `theta`.
pub fn sample(model: &dyn ParametricModel, theta: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    model.check_theta(theta)?;
    ModelAt::new(model, theta).sample(n, seed)
}

pub(crate) fn sample_with<G: DataGenerator + ?Sized>(
    g: &G,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be at least 1".into(),
        ));
    }
    let mut rng = seed_rng(seed);
    let mut values = Vec::with_capacity(n * g.obs_dim());
    for i in 0..n {
        values.extend(g.draw(i, &mut rng));
    }
    Dataset::new(g.obs_dim(), values)
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median and 1.4826 × median absolute deviation.
pub fn median_mad(xs: &[f64]) -> (f64, f64) {
    let mut v = xs.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    (med, 1.4826 * median(&mut dev))
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_mad_basic() {
        let (m, s) = median_mad(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(m, 3.0);
        assert!((s - 1.4826).abs() < 1e-12);
    }

    #[test]
    fn interval_membership() {
        assert!(Interval::Positive.contains(1e-300));
        assert!(!Interval::Positive.contains(0.0));
        assert!(!Interval::Open(-1.0, 1.0).contains(1.0));
        assert!(!Interval::Real.contains(f64::NAN));
    }
}
