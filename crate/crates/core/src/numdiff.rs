//! Central finite differences with step `cbrt(eps) · (1 + |θ_j|)`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

pub fn step(v: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + v.abs())
}

pub fn gradient<F>(f: F, theta: &[f64]) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut g = DVector::zeros(theta.len());
    let mut t = theta.to_vec();
    for j in 0..theta.len() {
        let h = step(theta[j]);
        t[j] = theta[j] + h;
        let up = f(&t)?;
        t[j] = theta[j] - h;
        let dn = f(&t)?;
        t[j] = theta[j];
        g[j] = (up - dn) / (2.0 * h);
    }
    Ok(g)
}

/// Jacobian of a vector field; column `j` holds `∂g/∂θ_j`.
pub fn jacobian<F>(g: F, theta: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let p = theta.len();
    let mut m = DMatrix::zeros(p, p);
    let mut t = theta.to_vec();
    for j in 0..p {
        let h = step(theta[j]);
        t[j] = theta[j] + h;
        let up = g(&t)?;
        t[j] = theta[j] - h;
        let dn = g(&t)?;
        t[j] = theta[j];
        m.set_column(j, &((up - dn) / (2.0 * h)));
    }
    Ok(m)
}

/// Jacobian of a gradient, symmetrized.
pub fn hessian_from_gradient<F>(g: F, theta: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let j = jacobian(g, theta)?;
    Ok((&j + j.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form() {
        let f = |t: &[f64]| Ok(t[0] * t[0] + 3.0 * t[0] * t[1] - t[1].powi(3));
        let g = gradient(f, &[1.0, 2.0]).unwrap();
        assert!((g[0] - 8.0).abs() < 1e-8);
        assert!((g[1] - (3.0 - 12.0)).abs() < 1e-8);
        let grad = |t: &[f64]| {
            Ok(DVector::from_vec(vec![
                2.0 * t[0] + 3.0 * t[1],
                3.0 * t[0] - 3.0 * t[1] * t[1],
            ]))
        };
        let h = hessian_from_gradient(grad, &[1.0, 2.0]).unwrap();
        assert!((h[(0, 1)] - 3.0).abs() < 1e-8);
        assert!((h[(1, 1)] + 12.0).abs() < 1e-7);
    }
}
