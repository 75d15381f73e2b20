//! q-variate normal with standard margins and common correlation ρ.
//!
//! With `a = 1 − ρ`, `b = 1 + (q − 1)ρ`, `W = Σ (x_r − x̄)²` and `M = q x̄²`,
//! the quadratic form is `xᵀΣ⁻¹x = W/a + M/b` and `det Σ = a^{q−1} b`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{Interval, ParametricModel, PowerIntegral, ResponseDerivs};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquiCorrelatedNormal {
    q: usize,
}

impl EquiCorrelatedNormal {
    pub fn new(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(format!(
                "dimension q must be at least 2, got {q}"
            )));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rho_lower(&self) -> f64 {
        -1.0 / (self.q as f64 - 1.0)
    }

    pub fn check_rho(&self, rho: f64) -> Result<()> {
        let lower = self.rho_lower();
        if rho > lower && rho < 1.0 {
            Ok(())
        } else {
            Err(Error::RhoOutOfDomain { rho, lower })
        }
    }

    fn ab(&self, rho: f64) -> (f64, f64) {
        (1.0 - rho, 1.0 + (self.q as f64 - 1.0) * rho)
    }

    fn wm(&self, x: &[f64]) -> (f64, f64) {
        let qf = self.q as f64;
        let mean = x.iter().sum::<f64>() / qf;
        let w = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (w, qf * mean * mean)
    }

    /// `Σ⁻¹`.
    pub fn precision(&self, rho: f64) -> DMatrix<f64> {
        let (a, b) = self.ab(rho);
        let mut m = DMatrix::from_element(self.q, self.q, -rho / (a * b));
        for i in 0..self.q {
            m[(i, i)] += 1.0 / a;
        }
        m
    }

    pub fn covariance(&self, rho: f64) -> DMatrix<f64> {
        let mut m = DMatrix::from_element(self.q, self.q, rho);
        m.fill_diagonal(1.0);
        m
    }
}

/// Density of one q-vector under the equi-correlated model.
pub fn equicorr_density(x: &[f64], rho: f64, q: usize) -> Result<f64> {
    let m = EquiCorrelatedNormal::new(q)?;
    m.check_rho(rho)?;
    if x.len() != q {
        return Err(Error::Dimension(format!(
            "expected {q} coordinates, got {}",
            x.len()
        )));
    }
    Ok(m.log_density(x, &[rho]).exp())
}

fn pairwise_sums(data: &Dataset) -> (f64, f64, f64) {
    let q = data.ncols() as f64;
    let mut ssw = 0.0;
    let mut ssb = 0.0;
    for row in data.rows() {
        let mean = row.iter().sum::<f64>() / q;
        ssw += row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        ssb += q * q * mean * mean;
    }
    (ssw, ssb, q)
}

/// Pairwise log-likelihood of the equi-correlated model summed over all
/// unordered coordinate pairs, without the `−n q(q−1)/2 · ln 2π` constant.
pub fn pairwise_loglik(data: &Dataset, rho: f64) -> Result<f64> {
    if data.ncols() < 2 {
        return Err(Error::InvalidArgument(
            "pairwise likelihood needs q >= 2".into(),
        ));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::RhoOutOfDomain { rho, lower: -1.0 });
    }
    let (ssw, ssb, q) = pairwise_sums(data);
    let n = data.n() as f64;
    let d = 1.0 - rho * rho;
    Ok(-n * q * (q - 1.0) / 4.0 * d.ln()
        - (q - 1.0 + rho) / (2.0 * d) * ssw
        - (q - 1.0) * (1.0 - rho) / (2.0 * d) * ssb / q)
}

/// `d ℓ^P / dρ`.
pub fn pairwise_loglik_grad(data: &Dataset, rho: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::RhoOutOfDomain { rho, lower: -1.0 });
    }
    let (ssw, ssb, q) = pairwise_sums(data);
    let n = data.n() as f64;
    let d = 1.0 - rho * rho;
    // (q − 1 + ρ)/(2d) and (q − 1)(1 − ρ)/(2d) = (q − 1)/(2(1 + ρ))
    let dw = (d + 2.0 * rho * (q - 1.0 + rho)) / (2.0 * d * d);
    let db = -(q - 1.0) / (2.0 * (1.0 + rho) * (1.0 + rho));
    Ok(n * q * (q - 1.0) / 2.0 * rho / d - dw * ssw - db * ssb / q)
}

impl ParametricModel for EquiCorrelatedNormal {
    fn name(&self) -> String {
        format!("equicorrelated-normal(q={})", self.q)
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.q
    }

    fn domain(&self) -> Vec<Interval> {
        vec![Interval::Open(self.rho_lower(), 1.0)]
    }

    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let rho = theta[0];
        let (a, b) = self.ab(rho);
        let (w, m) = self.wm(x);
        let qf = self.q as f64;
        -0.5 * (w / a + m / b) - 0.5 * ((qf - 1.0) * a.ln() + b.ln()) - 0.5 * qf * (2.0 * PI).ln()
    }

    fn grad_log_density(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let rho = theta[0];
        let (a, b) = self.ab(rho);
        let (w, m) = self.wm(x);
        let k = self.q as f64 - 1.0;
        let d = -0.5 * (w / (a * a) - m * k / (b * b)) + k / (2.0 * a) - k / (2.0 * b);
        DVector::from_element(1, d)
    }

    fn hess_log_density(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let rho = theta[0];
        let (a, b) = self.ab(rho);
        let (w, m) = self.wm(x);
        let k = self.q as f64 - 1.0;
        let d2 = -(w / (a * a * a) + m * k * k / (b * b * b))
            + k / (2.0 * a * a)
            + k * k / (2.0 * b * b);
        DMatrix::from_element(1, 1, d2)
    }

    fn power_integral(&self, _x: &[f64], theta: &[f64], gamma: f64) -> Option<PowerIntegral> {
        let rho = theta[0];
        let (a, b) = self.ab(rho);
        let qf = self.q as f64;
        let k = qf - 1.0;
        let g1 = gamma - 1.0;
        let ln_value = -0.5 * qf * gamma.ln()
            - 0.5 * qf * g1 * (2.0 * PI).ln()
            - 0.5 * g1 * (k * a.ln() + b.ln());
        let value = ln_value.exp();
        let l1 = 0.5 * g1 * k * (1.0 / a - 1.0 / b);
        let l2 = 0.5 * g1 * k * (1.0 / (a * a) + k / (b * b));
        Some(PowerIntegral {
            value,
            grad: DVector::from_element(1, value * l1),
            hess: DMatrix::from_element(1, 1, value * (l2 + l1 * l1)),
        })
    }

    fn response_derivs(&self, x: &[f64], theta: &[f64]) -> Option<ResponseDerivs> {
        let rho = theta[0];
        let (a, b) = self.ab(rho);
        let qf = self.q as f64;
        let sum: f64 = x.iter().sum();
        let shift = rho * sum / b;
        let grad = DVector::from_iterator(self.q, x.iter().map(|v| -(v - shift) / a));
        let laplacian = -(qf - rho * qf / b) / a;
        Some(ResponseDerivs { grad, laplacian })
    }

    fn sample_one(&self, theta: &[f64], _index: usize, rng: &mut SimRng) -> Vec<f64> {
        let rho = theta[0];
        let (a, b) = self.ab(rho);
        let z: Vec<f64> = (0..self.q).map(|_| StandardNormal.sample(rng)).collect();
        let zbar = z.iter().sum::<f64>() / self.q as f64;
        let (sa, sb) = (a.sqrt(), b.sqrt());
        z.iter().map(|zi| sa * (zi - zbar) + sb * zbar).collect()
    }

    fn default_init(&self, data: &Dataset) -> Result<DVector<f64>> {
        let n = data.n();
        if n < 2 {
            return Err(Error::DegenerateData(
                "need at least two observations".into(),
            ));
        }
        let q = self.q;
        let cols: Vec<Vec<f64>> = (0..q).map(|j| data.column(j)).collect();
        let stats: Vec<(f64, f64)> = cols
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / n as f64;
                let ss = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                (m, ss.sqrt())
            })
            .collect();
        if stats.iter().any(|&(_, s)| !(s > 0.0)) {
            return Err(Error::DegenerateData(
                "a coordinate has zero variance".into(),
            ));
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for r in 0..q {
            for s in (r + 1)..q {
                let cov: f64 = cols[r]
                    .iter()
                    .zip(&cols[s])
                    .map(|(u, v)| (u - stats[r].0) * (v - stats[s].0))
                    .sum();
                total += cov / (stats[r].1 * stats[s].1);
                count += 1;
            }
        }
        let margin = 1e-3;
        let rho = (total / count as f64).clamp(self.rho_lower() + margin, 1.0 - margin);
        Ok(DVector::from_element(1, rho))
    }
}
