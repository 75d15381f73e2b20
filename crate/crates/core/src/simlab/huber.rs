//! Huber M-estimators used as the comparator rows: location-scale with
//! Huber's Proposal 2, and regression by iteratively reweighted least
//! squares with a MAD scale. Both come with sandwich variances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::infer::{StatKind, TestReport};
use crate::models::median_mad;

/// 95% efficiency at the normal.
pub const HUBER_C: f64 = 1.345;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuberFit {
    pub theta: Vec<f64>,
    /// Sandwich variance of `theta`.
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn psi(u: f64, c: f64) -> f64 {
    u.clamp(-c, c)
}

fn psi_prime(u: f64, c: f64) -> f64 {
    if u.abs() <= c {
        1.0
    } else {
        0.0
    }
}

/// `E ψ_c(Z)²` for standard normal `Z`.
pub fn proposal2_beta(c: f64) -> f64 {
    let n = Normal::standard();
    let tail = 1.0 - n.cdf(c);
    (1.0 - 2.0 * tail) - 2.0 * c * n.pdf(c) + 2.0 * c * c * tail
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Joint location and scale by Proposal 2:
/// `Σ ψ(uᵢ) = 0`, `Σ [ψ(uᵢ)² − β] = 0`, `uᵢ = (xᵢ − μ)/σ`.
pub fn huber_location_scale(x: &[f64], c: f64) -> Result<HuberFit> {
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateData(
            "Huber fit needs at least 2 observations".into(),
        ));
    }
    let beta = proposal2_beta(c);
    let (mut mu, mut sigma) = median_mad(x);
    if !(sigma > 0.0) {
        return Err(Error::DegenerateData("MAD is zero".into()));
    }
    let nf = n as f64;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let s2: f64 = x
            .iter()
            .map(|v| psi((v - mu) / sigma, c).powi(2))
            .sum::<f64>()
            / nf;
        let sigma_new = sigma * (s2 / beta).sqrt();
        let (mut num, mut den) = (0.0, 0.0);
        for v in x {
            let u = (v - mu) / sigma_new;
            num += psi(u, c);
            den += psi_prime(u, c);
        }
        if den == 0.0 {
            return Err(Error::NoConvergence(
                "Huber location step has no inliers".into(),
            ));
        }
        let mu_new = mu + sigma_new * num / den;
        let done = (mu_new - mu).abs() <= 1e-12 * sigma_new
            && (sigma_new - sigma).abs() <= 1e-12 * sigma_new;
        mu = mu_new;
        sigma = sigma_new;
        if done {
            break;
        }
        if iterations >= MAX_ITER || !sigma.is_finite() || !(sigma > 0.0) {
            return Err(Error::NoConvergence(format!(
                "Huber Proposal 2 after {iterations} iterations"
            )));
        }
    }
    let mut j = DMatrix::<f64>::zeros(2, 2);
    let mut k = DMatrix::<f64>::zeros(2, 2);
    for v in x {
        let u = (v - mu) / sigma;
        let (p, d) = (psi(u, c), psi_prime(u, c));
        let g = DVector::from_vec(vec![p, p * p - beta]);
        j += &g * g.transpose();
        k[(0, 0)] -= d / sigma;
        k[(0, 1)] -= d * u / sigma;
        k[(1, 0)] -= 2.0 * p * d / sigma;
        k[(1, 1)] -= 2.0 * p * d * u / sigma;
    }
    let ki = k.try_inverse().ok_or(Error::SingularK)?;
    let v = &ki * j * ki.transpose();
    Ok(HuberFit {
        theta: vec![mu, sigma],
        covariance: to_rows(&v),
        iterations,
    })
}

/// Huber regression on rows `[y, x₁..x_p]` with the scale re-estimated as
/// the normalized MAD of the residuals at every step.
pub fn huber_regression(data: &Dataset, p: usize, c: f64) -> Result<HuberFit> {
    let n = data.n();
    if data.ncols() != p + 1 || n <= p {
        return Err(Error::Dimension(format!(
            "regression needs rows of width {} and more than {p} of them",
            p + 1
        )));
    }
    let xs: Vec<DVector<f64>> = data
        .rows()
        .map(|r| DVector::from_column_slice(&r[1..]))
        .collect();
    let ys: Vec<f64> = data.rows().map(|r| r[0]).collect();
    let weighted = |w: &[f64]| -> Result<DVector<f64>> {
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        for ((x, y), wi) in xs.iter().zip(&ys).zip(w) {
            a += x * x.transpose() * *wi;
            b += x * (*wi * y);
        }
        a.cholesky()
            .map(|ch| ch.solve(&b))
            .ok_or_else(|| Error::DegenerateData("weighted design is singular".into()))
    };
    let resid = |beta: &DVector<f64>| -> Vec<f64> {
        xs.iter().zip(&ys).map(|(x, y)| y - x.dot(beta)).collect()
    };
    let mut beta = weighted(&vec![1.0; n])?;
    let mut scale;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let r = resid(&beta);
        scale = median_mad(&r).1;
        if !(scale > 0.0) {
            return Err(Error::DegenerateData("residual MAD is zero".into()));
        }
        let w: Vec<f64> = r
            .iter()
            .map(|ri| {
                let u = (ri / scale).abs();
                if u <= c {
                    1.0
                } else {
                    c / u
                }
            })
            .collect();
        let next = weighted(&w)?;
        let step = (&next - &beta).amax();
        beta = next;
        if step <= 1e-10 * (1.0 + beta.amax()) {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(Error::NoConvergence(format!(
                "Huber IRLS after {iterations} iterations"
            )));
        }
    }
    let r = resid(&beta);
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DMatrix::<f64>::zeros(p, p);
    for (x, ri) in xs.iter().zip(&r) {
        let u = ri / scale;
        let xx = x * x.transpose();
        a += &xx * psi_prime(u, c);
        b += xx * psi(u, c).powi(2);
    }
    let ai = a.try_inverse().ok_or(Error::SingularK)?;
    let v = (&ai * b * &ai) * (scale * scale);
    Ok(HuberFit {
        theta: beta.iter().copied().collect(),
        covariance: to_rows(&v),
        iterations,
    })
}

/// `(θ̂ − θ0)ᵀ V̂⁻¹ (θ̂ − θ0)` against χ²_p.
pub fn huber_wald(fit: &HuberFit, theta0: &[f64]) -> Result<TestReport> {
    let p = fit.theta.len();
    if theta0.len() != p {
        return Err(Error::Dimension(format!(
            "θ0 has {} coordinates, fit has {p}",
            theta0.len()
        )));
    }
    let v = DMatrix::from_fn(p, p, |a, b| fit.covariance[a][b]);
    let g = v.try_inverse().ok_or(Error::SingularV)?;
    let d = DVector::from_iterator(p, fit.theta.iter().zip(theta0).map(|(a, b)| a - b));
    TestReport::chisq(StatKind::Wald, d.dot(&(g * &d)), p)
}
