//! Proper scoring rules evaluated against a parametric model.
//!
//! A rule turns an observation `x` and a parameter `θ` into a loss
//! `S(x, θ)`, its θ-gradient `s(x, θ)` and, where available in closed form,
//! its θ-Hessian. Each rule splits into a part that depends on `x` and a
//! θ-only integral term; when the integral does not depend on covariates it
//! is computed once per empirical evaluation rather than once per row.

mod composite;
mod gauge;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ParametricModel, PowerIntegral, Support};
use crate::numdiff;
use crate::quadrature::{integrate_vec_half_line, integrate_vec_real_line};

pub use composite::Component;
pub use gauge::Gauge;

const INTEGRAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

impl ScoreEval {
    fn zero(p: usize, with_hessian: bool) -> Self {
        Self {
            value: 0.0,
            gradient: DVector::zeros(p),
            hessian: with_hessian.then(|| DMatrix::zeros(p, p)),
        }
    }

    fn add(&mut self, other: &ScoreEval) {
        self.value += other.value;
        self.gradient += &other.gradient;
        self.hessian = match (self.hessian.take(), &other.hessian) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }
}

#[derive(Debug, Clone)]
pub enum ScoringRule {
    /// `−ln p(x)`.
    Log,
    /// Quadratic score; on a continuous model, the Bregman score with `ψ(t) = t²`.
    Brier,
    /// `(γ−1) ∫ p^γ − γ p(x)^{γ−1}`.
    Tsallis { gamma: f64 },
    /// Separable Bregman score for a gauge `α = ψ''`.
    Bregman(Gauge),
    /// `2 Δ ln p(x) + |∇ ln p(x)|²` over the response coordinates.
    Hyvarinen,
    /// Sum of component rules applied to marginal variables.
    Composite(Vec<Component>),
}

impl ScoringRule {
    pub fn tsallis(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Tsallis gamma must exceed 1, got {gamma}"
            )));
        }
        Ok(ScoringRule::Tsallis { gamma })
    }

    pub fn bregman(gauge: Gauge) -> Result<Self> {
        if let Gauge::Power { gamma } = gauge {
            Gauge::tsallis(gamma)?;
        }
        Ok(ScoringRule::Bregman(gauge))
    }

    pub fn composite(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "composite rule needs at least one component".into(),
            ));
        }
        Ok(ScoringRule::Composite(components))
    }

    /// All `q(q−1)/2` coordinate pairs of an equi-correlated normal vector,
    /// each scored by `rule` under the bivariate margin.
    pub fn pairwise_equicorrelated(q: usize, rule: ScoringRule) -> Result<Self> {
        let pair: Arc<dyn ParametricModel> = Arc::new(crate::models::EquiCorrelatedNormal::new(2)?);
        let mut comps = Vec::new();
        for r in 0..q {
            for s in (r + 1)..q {
                comps.push(Component::marginal(vec![r, s], pair.clone(), rule.clone()));
            }
        }
        Self::composite(comps)
    }

    pub fn name(&self) -> String {
        match self {
            ScoringRule::Log => "log".into(),
            ScoringRule::Brier => "brier".into(),
            ScoringRule::Tsallis { gamma } => format!("tsallis({gamma})"),
            ScoringRule::Bregman(g) => format!("bregman({})", g.name()),
            ScoringRule::Hyvarinen => "hyvarinen".into(),
            ScoringRule::Composite(c) => format!("composite[{}]", c.len()),
        }
    }

    /// Whether `eval` returns a closed-form gradient (possibly with
    /// quadrature for the integral term) rather than finite differences.
    pub fn has_analytic_gradient(&self, model: &dyn ParametricModel) -> bool {
        match self {
            ScoringRule::Hyvarinen => model
                .hyvarinen(&vec![0.0; model.obs_dim()], &model_probe(model))
                .is_some(),
            ScoringRule::Composite(c) => c
                .iter()
                .all(|k| k.rule.has_analytic_gradient(k.model.as_ref())),
            _ => true,
        }
    }

    /// Single-observation evaluation.
    pub fn eval(
        &self,
        model: &dyn ParametricModel,
        x: &[f64],
        theta: &[f64],
        with_hessian: bool,
    ) -> Result<ScoreEval> {
        let mut out = self.local(model, x, theta, with_hessian)?;
        out.add(&self.shared(model, x, theta, with_hessian)?);
        self.finish_hessian(model, x, theta, out, with_hessian)
    }

    pub fn value(&self, model: &dyn ParametricModel, x: &[f64], theta: &[f64]) -> Result<f64> {
        Ok(self.local_value(model, x, theta)? + self.shared_value(model, x, theta)?)
    }

    /// `S(θ) = Σᵢ S(xᵢ, θ)` with gradient and optional Hessian.
    pub fn empirical(
        &self,
        model: &dyn ParametricModel,
        data: &Dataset,
        theta: &[f64],
        with_hessian: bool,
    ) -> Result<ScoreEval> {
        check_shapes(model, data, theta)?;
        let p = theta.len();
        let mut total = ScoreEval::zero(p, with_hessian);
        let shared_once = self.shares_integral(model);
        for x in data.rows() {
            total.add(&self.local(model, x, theta, with_hessian)?);
            if !shared_once {
                total.add(&self.shared(model, x, theta, with_hessian)?);
            }
        }
        if shared_once {
            let mut sh = self.shared(model, data.row(0), theta, with_hessian)?;
            let n = data.n() as f64;
            sh.value *= n;
            sh.gradient *= n;
            if let Some(h) = sh.hessian.as_mut() {
                *h *= n;
            }
            total.add(&sh);
        }
        if with_hessian && total.hessian.is_none() {
            let h = numdiff::hessian_from_gradient(
                |t| Ok(self.empirical(model, data, t, false)?.gradient),
                theta,
            )?;
            total.hessian = Some(h);
        }
        Ok(total)
    }

    pub fn empirical_value(
        &self,
        model: &dyn ParametricModel,
        data: &Dataset,
        theta: &[f64],
    ) -> Result<f64> {
        check_shapes(model, data, theta)?;
        let mut total = 0.0;
        let shared_once = self.shares_integral(model);
        for x in data.rows() {
            total += self.local_value(model, x, theta)?;
            if !shared_once {
                total += self.shared_value(model, x, theta)?;
            }
        }
        if shared_once {
            total += data.n() as f64 * self.shared_value(model, data.row(0), theta)?;
        }
        Ok(total)
    }

    /// `s(xᵢ, θ)` for every row.
    pub fn per_observation_gradients(
        &self,
        model: &dyn ParametricModel,
        data: &Dataset,
        theta: &[f64],
    ) -> Result<Vec<DVector<f64>>> {
        check_shapes(model, data, theta)?;
        let shared_once = self.shares_integral(model);
        let common = if shared_once {
            Some(self.shared(model, data.row(0), theta, false)?.gradient)
        } else {
            None
        };
        data.rows()
            .map(|x| {
                let mut g = self.local(model, x, theta, false)?.gradient;
                match &common {
                    Some(c) => g += c,
                    None => g += self.shared(model, x, theta, false)?.gradient,
                }
                Ok(g)
            })
            .collect()
    }

    fn shares_integral(&self, model: &dyn ParametricModel) -> bool {
        match self {
            ScoringRule::Log | ScoringRule::Hyvarinen | ScoringRule::Composite(_) => false,
            _ => model.response_dim() == model.obs_dim() || model.is_location_family(),
        }
    }

    fn finish_hessian(
        &self,
        model: &dyn ParametricModel,
        x: &[f64],
        theta: &[f64],
        mut out: ScoreEval,
        with_hessian: bool,
    ) -> Result<ScoreEval> {
        if with_hessian && out.hessian.is_none() {
            out.hessian = Some(numdiff::hessian_from_gradient(
                |t| Ok(self.eval(model, x, t, false)?.gradient),
                theta,
            )?);
        }
        Ok(out)
    }

    // ---- x-dependent part -------------------------------------------------

    fn local(
        &self,
        model: &dyn ParametricModel,
        x: &[f64],
        theta: &[f64],
        hess: bool,
    ) -> Result<ScoreEval> {
        let p = theta.len();
        match self {
            ScoringRule::Log => {
                let lp = model.log_density(x, theta);
                if !lp.is_finite() {
                    return Err(Error::NonPositiveDensity(lp.exp()));
                }
                Ok(ScoreEval {
                    value: -lp,
                    gradient: -model.grad_log_density(x, theta),
                    hessian: hess.then(|| -model.hess_log_density(x, theta)),
                })
            }
            ScoringRule::Tsallis { gamma } => {
                let g = *gamma;
                let lp = model.log_density(x, theta);
                let pw = ((g - 1.0) * lp).exp();
                let dl = model.grad_log_density(x, theta);
                let c = -g * (g - 1.0) * pw;
                let hessian = hess.then(|| {
                    let h = model.hess_log_density(x, theta);
                    (&dl * dl.transpose() * (g - 1.0) + h) * c
                });
                Ok(ScoreEval {
                    value: -g * pw,
                    gradient: &dl * c,
                    hessian,
                })
            }
            ScoringRule::Brier => ScoringRule::Bregman(Gauge::Brier).local(model, x, theta, hess),
            ScoringRule::Bregman(gauge) => {
                let lp = model.log_density(x, theta);
                let dens = lp.exp();
                let a = gauge.checked_alpha(dens)?;
                let dl = model.grad_log_density(x, theta);
                Ok(ScoreEval {
                    value: -gauge.psi_prime(dens)?,
                    gradient: dl * (-a * dens),
                    hessian: None,
                })
            }
            ScoringRule::Hyvarinen => {
                if let Some((value, gradient)) = model.hyvarinen(x, theta) {
                    return Ok(ScoreEval {
                        value,
                        gradient,
                        hessian: None,
                    });
                }
                let value = hyvarinen_value(model, x, theta)?;
                let gradient = numdiff::gradient(|t| hyvarinen_value(model, x, t), theta)?;
                Ok(ScoreEval {
                    value,
                    gradient,
                    hessian: None,
                })
            }
            ScoringRule::Composite(comps) => {
                let mut total = ScoreEval::zero(p, hess);
                for c in comps {
                    total.add(&c.eval(x, theta, hess)?);
                }
                Ok(total)
            }
        }
    }

    fn local_value(&self, model: &dyn ParametricModel, x: &[f64], theta: &[f64]) -> Result<f64> {
        match self {
            ScoringRule::Log => {
                let lp = model.log_density(x, theta);
                if !lp.is_finite() {
                    return Err(Error::NonPositiveDensity(lp.exp()));
                }
                Ok(-lp)
            }
            ScoringRule::Tsallis { gamma } => {
                Ok(-gamma * ((gamma - 1.0) * model.log_density(x, theta)).exp())
            }
            ScoringRule::Brier => ScoringRule::Bregman(Gauge::Brier).local_value(model, x, theta),
            ScoringRule::Bregman(gauge) => {
                let dens = model.density(x, theta);
                gauge.checked_alpha(dens)?;
                Ok(-gauge.psi_prime(dens)?)
            }
            ScoringRule::Hyvarinen => match model.hyvarinen(x, theta) {
                Some((v, _)) => Ok(v),
                None => hyvarinen_value(model, x, theta),
            },
            ScoringRule::Composite(comps) => {
                let mut total = 0.0;
                for c in comps {
                    total += c.value(x, theta)?;
                }
                Ok(total)
            }
        }
    }

    // ---- θ-only integral part --------------------------------------------

    fn shared(
        &self,
        model: &dyn ParametricModel,
        x: &[f64],
        theta: &[f64],
        hess: bool,
    ) -> Result<ScoreEval> {
        let p = theta.len();
        match self {
            ScoringRule::Log | ScoringRule::Hyvarinen | ScoringRule::Composite(_) => {
                Ok(ScoreEval::zero(p, hess))
            }
            ScoringRule::Tsallis { gamma } => {
                let pi = power_integral(model, x, theta, *gamma, hess)?;
                let c = gamma - 1.0;
                Ok(ScoreEval {
                    value: c * pi.value,
                    gradient: pi.grad * c,
                    hessian: hess.then(|| pi.hess * c),
                })
            }
            ScoringRule::Brier => ScoringRule::Bregman(Gauge::Brier).shared(model, x, theta, hess),
            ScoringRule::Bregman(gauge) => bregman_shared(gauge, model, x, theta, hess),
        }
    }

    fn shared_value(&self, model: &dyn ParametricModel, x: &[f64], theta: &[f64]) -> Result<f64> {
        match self {
            ScoringRule::Log | ScoringRule::Hyvarinen | ScoringRule::Composite(_) => Ok(0.0),
            _ => Ok(self.shared(model, x, theta, false)?.value),
        }
    }
}

fn check_shapes(model: &dyn ParametricModel, data: &Dataset, theta: &[f64]) -> Result<()> {
    if data.ncols() != model.obs_dim() {
        return Err(Error::Dimension(format!(
            "{} expects rows of width {}, data has {}",
            model.name(),
            model.obs_dim(),
            data.ncols()
        )));
    }
    if data.n() == 0 {
        return Err(Error::DegenerateData("empty dataset".into()));
    }
    model.check_theta(theta)
}

fn model_probe(model: &dyn ParametricModel) -> Vec<f64> {
    model
        .domain()
        .iter()
        .map(|iv| match *iv {
            crate::models::Interval::Real => 0.0,
            crate::models::Interval::Positive => 1.0,
            crate::models::Interval::Open(lo, hi) => 0.5 * (lo.max(-1.0) + hi.min(1.0)),
        })
        .collect()
}

/// Integrates a vector of functionals of `p_θ(y | covariates)` over the
/// response. `f(row, p, ∇ln p, out)` fills `dim` entries.
fn response_integral<F>(
    model: &dyn ParametricModel,
    x: &[f64],
    theta: &[f64],
    dim: usize,
    mut f: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &[f64], &mut [f64]),
{
    if model.response_dim() != 1 {
        return Err(Error::DivergentIntegral(format!(
            "{} has a multivariate response and no closed-form integral",
            model.name()
        )));
    }
    let mut row = x.to_vec();
    let (center, scale) = model.response_location(x, theta);
    let integrand = |y: f64, out: &mut [f64]| {
        row[0] = y;
        f(&row, theta, out);
    };
    let res = match model.support() {
        Support::Real => integrate_vec_real_line(integrand, center, scale, dim, INTEGRAL_TOL),
        Support::Positive => integrate_vec_half_line(integrand, 0.0, scale, dim, INTEGRAL_TOL),
    };
    res.map_err(|e| Error::DivergentIntegral(e.to_string()))
}

/// `∫ p_θ^γ` from the model's closed form, else by quadrature.
pub fn power_integral(
    model: &dyn ParametricModel,
    x: &[f64],
    theta: &[f64],
    gamma: f64,
    with_hessian: bool,
) -> Result<PowerIntegral> {
    if let Some(pi) = model.power_integral(x, theta, gamma) {
        return Ok(pi);
    }
    let p = theta.len();
    let dim = 1 + p + if with_hessian { p * p } else { 0 };
    let v = response_integral(model, x, theta, dim, |row, th, out| {
        let lp = model.log_density(row, th);
        let w = (gamma * lp).exp();
        out[0] = w;
        if w == 0.0 {
            out[1..].iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let dl = model.grad_log_density(row, th);
        for j in 0..p {
            out[1 + j] = gamma * w * dl[j];
        }
        if with_hessian {
            let h = model.hess_log_density(row, th);
            for i in 0..p {
                for j in 0..p {
                    out[1 + p + i * p + j] = gamma * w * (gamma * dl[i] * dl[j] + h[(i, j)]);
                }
            }
        }
    })?;
    Ok(PowerIntegral {
        value: v[0],
        grad: DVector::from_column_slice(&v[1..=p]),
        hess: if with_hessian {
            DMatrix::from_row_slice(p, p, &v[1 + p..])
        } else {
            DMatrix::zeros(p, p)
        },
    })
}

/// θ-only part of the separable Bregman score:
/// value `−∫[ψ(p) − p ψ'(p)]`, gradient `E_θ λ = ∫ α(p) p ∇p`.
fn bregman_shared(
    gauge: &Gauge,
    model: &dyn ParametricModel,
    x: &[f64],
    theta: &[f64],
    hess: bool,
) -> Result<ScoreEval> {
    let p = theta.len();
    if let Gauge::Log = gauge {
        return Ok(ScoreEval {
            value: 1.0,
            gradient: DVector::zeros(p),
            hessian: hess.then(|| DMatrix::zeros(p, p)),
        });
    }
    let power = match gauge {
        Gauge::Power { gamma } => Some(*gamma),
        Gauge::Brier => Some(2.0),
        _ => None,
    };
    if let Some(pi) = power.and_then(|g| model.power_integral(x, theta, g).map(|pi| (g, pi))) {
        let (g, pi) = pi;
        return Ok(ScoreEval {
            value: (g - 1.0) * pi.value,
            gradient: pi.grad * (g - 1.0),
            hessian: hess.then(|| pi.hess * (g - 1.0)),
        });
    }
    let location = model.is_location_family();
    let dim = if location { 1 } else { 1 + p };
    let mut failure: Option<Error> = None;
    let v = response_integral(model, x, theta, dim, |row, th, out| {
        let lp = model.log_density(row, th);
        let d = lp.exp();
        if d == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        match (gauge.psi_minus_tangent(d), gauge.checked_alpha(d)) {
            (Ok(gap), Ok(al)) => {
                out[0] = -gap;
                if !location {
                    let dl = model.grad_log_density(row, th);
                    for j in 0..p {
                        out[1 + j] = al * d * d * dl[j];
                    }
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                if d > 0.0 {
                    failure.get_or_insert(e);
                }
                out.iter_mut().for_each(|o| *o = 0.0);
            }
        }
    })
    .map_err(|e| Error::QuadratureFailure(e.to_string()))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ScoreEval {
        value: v[0],
        gradient: if location {
            DVector::zeros(p)
        } else {
            DVector::from_column_slice(&v[1..])
        },
        hessian: None,
    })
}

/// `2 Δ ln p + |∇ ln p|²` from the model's response derivatives, or from
/// nested central differences of `ln p` when the model has none.
fn hyvarinen_value(model: &dyn ParametricModel, x: &[f64], theta: &[f64]) -> Result<f64> {
    if let Some(d) = model.response_derivs(x, theta) {
        return Ok(2.0 * d.laplacian + d.grad.norm_squared());
    }
    let k = model.response_dim();
    let mut row = x.to_vec();
    let mut value = 0.0;
    for j in 0..k {
        let x0 = x[j];
        let h = numdiff::step(x0);
        row[j] = x0 + h;
        let up = model.log_density(&row, theta);
        row[j] = x0 - h;
        let dn = model.log_density(&row, theta);
        row[j] = x0;
        let mid = model.log_density(&row, theta);
        let d1 = (up - dn) / (2.0 * h);
        let d2 = (up - 2.0 * mid + dn) / (h * h);
        if !d2.is_finite() || !d1.is_finite() {
            return Err(Error::NonSmoothDensity(x0));
        }
        value += 2.0 * d2 + d1 * d1;
    }
    Ok(value)
}

/// Quadratic score `{1 − q(x)}² + Σ_{y≠x} q(y)²` on a finite sample space.
pub fn brier_score(x: usize, q: &[f64]) -> Result<f64> {
    let tol = 1e-10;
    if x >= q.len() {
        return Err(Error::InvalidSimplexPoint(format!(
            "category {x} outside 0..{}",
            q.len()
        )));
    }
    if q.iter().any(|&v| v < -tol || !v.is_finite()) {
        return Err(Error::InvalidSimplexPoint(
            "negative or non-finite entry".into(),
        ));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidSimplexPoint(format!(
            "entries sum to {total}"
        )));
    }
    Ok(q.iter()
        .enumerate()
        .map(|(y, &v)| if y == x { (1.0 - v) * (1.0 - v) } else { v * v })
        .sum())
}
