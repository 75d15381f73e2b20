use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{Interval, ParametricModel, PowerIntegral, ResponseDerivs, StdDensity};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `y = Xβ + σε` with normal errors and σ known. Data rows are `[y, x_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegressionModel {
    p: usize,
    sigma: f64,
    design: Option<DMatrix<f64>>,
}

impl LinearRegressionModel {
    pub fn new(p: usize, sigma: f64) -> Result<Self> {
        if p == 0 || !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "regression needs p >= 1 and sigma > 0, got p={p}, sigma={sigma}"
            )));
        }
        Ok(Self {
            p,
            sigma,
            design: None,
        })
    }

    /// Attaches the fixed design used by the sampler.
    pub fn with_design(mut self, design: DMatrix<f64>) -> Result<Self> {
        if design.ncols() != self.p {
            return Err(Error::Dimension(format!(
                "design has {} columns, model has p={}",
                design.ncols(),
                self.p
            )));
        }
        self.design = Some(design);
        Ok(self)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn design(&self) -> Option<&DMatrix<f64>> {
        self.design.as_ref()
    }

    fn resid(&self, x: &[f64], beta: &[f64]) -> f64 {
        x[0] - x[1..].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Three-column design: intercept, i.i.d. N(0,1) draws, and the integers 1..n.
pub fn table3_design(n: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, 3);
    for i in 0..n {
        m[(i, 0)] = 1.0;
        m[(i, 1)] = StandardNormal.sample(rng);
        m[(i, 2)] = (i + 1) as f64;
    }
    m
}

/// Ordinary least squares on rows `[y, x_i]`.
pub fn ols(data: &Dataset, p: usize) -> Result<DVector<f64>> {
    let n = data.n();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for row in data.rows() {
        let x = DVector::from_column_slice(&row[1..=p]);
        xtx += &x * x.transpose();
        xty += &x * row[0];
    }
    if n < p {
        return Err(Error::DegenerateData(format!("n = {n} < p = {p}")));
    }
    xtx.cholesky()
        .map(|c| c.solve(&xty))
        .ok_or_else(|| Error::DegenerateData("design matrix is rank deficient".into()))
}

impl ParametricModel for LinearRegressionModel {
    fn name(&self) -> String {
        format!("linear-regression(p={}, sigma={})", self.p, self.sigma)
    }

    fn param_dim(&self) -> usize {
        self.p
    }

    fn obs_dim(&self) -> usize {
        self.p + 1
    }

    fn response_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> Vec<Interval> {
        vec![Interval::Real; self.p]
    }

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let r = self.resid(x, theta) / self.sigma;
        -0.5 * r * r - self.sigma.ln() - LN_SQRT_2PI
    }

    fn grad_log_density(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let r = self.resid(x, theta);
        let s2 = self.sigma * self.sigma;
        DVector::from_iterator(self.p, x[1..].iter().map(|xj| r * xj / s2))
    }

    fn hess_log_density(&self, x: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        let xv = DVector::from_column_slice(&x[1..]);
        -(&xv * xv.transpose()) / (self.sigma * self.sigma)
    }

    fn is_location_family(&self) -> bool {
        // p_β(y | x) = f(y − xᵀβ): every Bregman λ integrates to zero.
        true
    }

    fn power_integral(&self, _x: &[f64], _theta: &[f64], gamma: f64) -> Option<PowerIntegral> {
        let c = StdDensity::Normal.power_integral(gamma)?;
        Some(PowerIntegral {
            value: c * self.sigma.powf(1.0 - gamma),
            grad: DVector::zeros(self.p),
            hess: DMatrix::zeros(self.p, self.p),
        })
    }

    fn response_location(&self, x: &[f64], theta: &[f64]) -> (f64, f64) {
        (x[0] - self.resid(x, theta), self.sigma)
    }

    fn response_derivs(&self, x: &[f64], theta: &[f64]) -> Option<ResponseDerivs> {
        let s2 = self.sigma * self.sigma;
        Some(ResponseDerivs {
            grad: DVector::from_element(1, -self.resid(x, theta) / s2),
            laplacian: -1.0 / s2,
        })
    }

    fn hyvarinen(&self, x: &[f64], theta: &[f64]) -> Option<(f64, DVector<f64>)> {
        let r = self.resid(x, theta);
        let s2 = self.sigma * self.sigma;
        let value = -2.0 / s2 + r * r / (s2 * s2);
        let grad =
            DVector::from_iterator(self.p, x[1..].iter().map(|xj| -2.0 * r * xj / (s2 * s2)));
        Some((value, grad))
    }

    fn sample_one(&self, theta: &[f64], index: usize, rng: &mut SimRng) -> Vec<f64> {
        let design = self
            .design
            .as_ref()
            .expect("regression sampling needs a design matrix");
        let row = design.row(index % design.nrows());
        let mean: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        let z: f64 = StandardNormal.sample(rng);
        let mut out = Vec::with_capacity(self.p + 1);
        out.push(mean + self.sigma * z);
        out.extend(row.iter());
        out
    }

    fn default_init(&self, data: &Dataset) -> Result<DVector<f64>> {
        ols(data, self.p)
    }
}
