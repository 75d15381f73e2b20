use nalgebra::{DMatrix, DVector};

use super::{
    median_mad, Interval, ParametricModel, PowerIntegral, ResponseDerivs, StdDensity, Support,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// `p(x; μ, σ) = p₀((x − μ)/σ)/σ`, θ = (μ, σ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationScaleModel {
    pub center: StdDensity,
}

impl LocationScaleModel {
    pub fn new(center: StdDensity) -> Result<Self> {
        if center.positive_support() {
            return Err(Error::InvalidArgument(format!(
                "location-scale center must live on the real line, got {}",
                center.name()
            )));
        }
        Ok(Self { center })
    }

    pub fn normal() -> Self {
        Self {
            center: StdDensity::Normal,
        }
    }
}

impl ParametricModel for LocationScaleModel {
    fn name(&self) -> String {
        format!("location-scale({})", self.center.name())
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> Vec<Interval> {
        vec![Interval::Real, Interval::Positive]
    }

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        self.center.ln_pdf((x[0] - mu) / sigma) - sigma.ln()
    }

    fn grad_log_density(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let (mu, sigma) = (theta[0], theta[1]);
        let u = (x[0] - mu) / sigma;
        let g1 = self.center.dlog(u)[0];
        DVector::from_vec(vec![-g1 / sigma, -(g1 * u + 1.0) / sigma])
    }

    fn hess_log_density(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let (mu, sigma) = (theta[0], theta[1]);
        let u = (x[0] - mu) / sigma;
        let [g1, g2, _] = self.center.dlog(u);
        let s2 = sigma * sigma;
        let mm = g2 / s2;
        let ms = (g2 * u + g1) / s2;
        let ss = (g2 * u * u + 2.0 * g1 * u + 1.0) / s2;
        DMatrix::from_row_slice(2, 2, &[mm, ms, ms, ss])
    }

    fn power_integral(&self, _x: &[f64], theta: &[f64], gamma: f64) -> Option<PowerIntegral> {
        let c = self.center.power_integral(gamma)?;
        let sigma = theta[1];
        let value = c * sigma.powf(1.0 - gamma);
        let d1 = (1.0 - gamma) * value / sigma;
        let d2 = (1.0 - gamma) * (-gamma) * value / (sigma * sigma);
        Some(PowerIntegral {
            value,
            grad: DVector::from_vec(vec![0.0, d1]),
            hess: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, d2]),
        })
    }

    fn support(&self) -> Support {
        Support::Real
    }

    fn response_location(&self, _x: &[f64], theta: &[f64]) -> (f64, f64) {
        (theta[0], theta[1])
    }

    fn response_derivs(&self, x: &[f64], theta: &[f64]) -> Option<ResponseDerivs> {
        let (mu, sigma) = (theta[0], theta[1]);
        let u = (x[0] - mu) / sigma;
        let [g1, g2, _] = self.center.dlog(u);
        Some(ResponseDerivs {
            grad: DVector::from_element(1, g1 / sigma),
            laplacian: g2 / (sigma * sigma),
        })
    }

    fn hyvarinen(&self, x: &[f64], theta: &[f64]) -> Option<(f64, DVector<f64>)> {
        let (mu, sigma) = (theta[0], theta[1]);
        let u = (x[0] - mu) / sigma;
        let [g1, g2, g3] = self.center.dlog(u);
        let s2 = sigma * sigma;
        let core = 2.0 * g2 + g1 * g1;
        let dcore = 2.0 * g3 + 2.0 * g1 * g2;
        let value = core / s2;
        let d_mu = -dcore / (s2 * sigma);
        let d_sigma = -2.0 * core / (s2 * sigma) - dcore * u / (s2 * sigma);
        Some((value, DVector::from_vec(vec![d_mu, d_sigma])))
    }

    fn sample_one(&self, theta: &[f64], _index: usize, rng: &mut SimRng) -> Vec<f64> {
        vec![theta[0] + theta[1] * self.center.sample(rng)]
    }

    fn default_init(&self, data: &Dataset) -> Result<DVector<f64>> {
        if data.n() < 2 {
            return Err(Error::DegenerateData(
                "need at least two observations".into(),
            ));
        }
        let (med, mad) = median_mad(&data.column(0));
        if !(mad > 0.0) {
            return Err(Error::DegenerateData(
                "median absolute deviation is zero".into(),
            ));
        }
        Ok(DVector::from_vec(vec![med, mad]))
    }
}

/// `p(x; μ) = p₀((x − μ)/σ)/σ` with the scale σ known, θ = μ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationModel {
    pub center: StdDensity,
    pub scale: f64,
}

impl LocationModel {
    pub fn new(center: StdDensity, scale: f64) -> Result<Self> {
        if center.positive_support() || !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "location model needs a real-line center and positive scale, got {} / {scale}",
                center.name()
            )));
        }
        Ok(Self { center, scale })
    }

    pub fn normal() -> Self {
        Self {
            center: StdDensity::Normal,
            scale: 1.0,
        }
    }

    fn as_ls(&self) -> (LocationScaleModel, f64) {
        (
            LocationScaleModel {
                center: self.center,
            },
            self.scale,
        )
    }
}

impl ParametricModel for LocationModel {
    fn name(&self) -> String {
        format!("location({}, scale={})", self.center.name(), self.scale)
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> Vec<Interval> {
        vec![Interval::Real]
    }

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (ls, s) = self.as_ls();
        ls.log_density(x, &[theta[0], s])
    }

    fn grad_log_density(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let (ls, s) = self.as_ls();
        DVector::from_element(1, ls.grad_log_density(x, &[theta[0], s])[0])
    }

    fn hess_log_density(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let (ls, s) = self.as_ls();
        DMatrix::from_element(1, 1, ls.hess_log_density(x, &[theta[0], s])[(0, 0)])
    }

    fn is_location_family(&self) -> bool {
        true
    }

    fn power_integral(&self, _x: &[f64], _theta: &[f64], gamma: f64) -> Option<PowerIntegral> {
        let c = self.center.power_integral(gamma)?;
        Some(PowerIntegral {
            value: c * self.scale.powf(1.0 - gamma),
            grad: DVector::zeros(1),
            hess: DMatrix::zeros(1, 1),
        })
    }

    fn response_location(&self, _x: &[f64], theta: &[f64]) -> (f64, f64) {
        (theta[0], self.scale)
    }

    fn response_derivs(&self, x: &[f64], theta: &[f64]) -> Option<ResponseDerivs> {
        let (ls, s) = self.as_ls();
        ls.response_derivs(x, &[theta[0], s])
    }

    fn hyvarinen(&self, x: &[f64], theta: &[f64]) -> Option<(f64, DVector<f64>)> {
        let (ls, s) = self.as_ls();
        let (v, g) = ls.hyvarinen(x, &[theta[0], s])?;
        Some((v, DVector::from_element(1, g[0])))
    }

    fn sample_one(&self, theta: &[f64], _index: usize, rng: &mut SimRng) -> Vec<f64> {
        vec![theta[0] + self.scale * self.center.sample(rng)]
    }

    fn default_init(&self, data: &Dataset) -> Result<DVector<f64>> {
        if data.n() < 2 {
            return Err(Error::DegenerateData(
                "need at least two observations".into(),
            ));
        }
        let (med, mad) = median_mad(&data.column(0));
        if !(mad > 0.0) {
            return Err(Error::DegenerateData(
                "median absolute deviation is zero".into(),
            ));
        }
        Ok(DVector::from_element(1, med))
    }
}
