//! Minimum-score estimation: `θ̂ = argmin Σᵢ S(xᵢ, θ)`, with optional
//! coordinate freezing for profile fits.
//!
//! The search runs BFGS on an unconstrained reparameterization
//! (`σ = exp τ`, open intervals through a logistic map) from several starts,
//! then polishes the best start with Newton steps on the natural scale.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{Interval, ParametricModel};
use crate::rng::seed_rng;
use crate::rules::ScoringRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub starts: usize,
    /// Gradient ∞-norm tolerance per observation.
    pub tol: f64,
    pub perturb_scale: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            starts: 5,
            tol: 1e-8,
            perturb_scale: 0.2,
            seed: 0xF17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub score_at_min: f64,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the empirical score gradient over the free coordinates.
    pub grad_norm_at_min: f64,
    /// `true` for coordinates held fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_mask: Option<Vec<bool>>,
}

impl FitResult {
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_hat)
    }
}

/// Method-of-moments start from the model.
pub fn default_init(
    _rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
) -> Result<DVector<f64>> {
    if data.n() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 observations, got {}",
            data.n()
        )));
    }
    model.default_init(data)
}

pub fn fit(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    fit_with(rule, model, data, init, &FitOptions::default())
}

pub fn fit_with(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let p = model.param_dim();
    if data.n() < p {
        return Err(Error::DegenerateData(format!(
            "n = {} is smaller than p = {p}",
            data.n()
        )));
    }
    let start = match init {
        Some(t) => {
            model.check_theta(t)?;
            DVector::from_column_slice(t)
        }
        None => default_init(rule, model, data)?,
    };
    Problem::new(rule, model, data, vec![false; p], opts).solve(start)
}

/// Minimizes over the coordinates outside `psi_index` with those inside
/// held at `psi_value`.
pub fn fit_profile(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    psi_index: &[usize],
    psi_value: &[f64],
) -> Result<FitResult> {
    fit_profile_with(
        rule,
        model,
        data,
        psi_index,
        psi_value,
        None,
        &FitOptions::default(),
    )
}

pub fn fit_profile_with(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    psi_index: &[usize],
    psi_value: &[f64],
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let p = model.param_dim();
    let mask = partition_mask(p, psi_index)?;
    if psi_value.len() != psi_index.len() {
        return Err(Error::Dimension(format!(
            "{} interest coordinates but {} values",
            psi_index.len(),
            psi_value.len()
        )));
    }
    let mut start = match init {
        Some(t) => DVector::from_column_slice(t),
        None => default_init(rule, model, data)?,
    };
    for (&j, &v) in psi_index.iter().zip(psi_value) {
        start[j] = v;
    }
    model.check_theta(start.as_slice())?;
    let mut res = Problem::new(rule, model, data, mask.clone(), opts).solve(start)?;
    res.fixed_mask = Some(mask);
    Ok(res)
}

/// Validates an interest/nuisance split and returns the fixed mask.
pub fn partition_mask(p: usize, psi_index: &[usize]) -> Result<Vec<bool>> {
    if psi_index.is_empty() || psi_index.len() >= p {
        return Err(Error::EmptyNuisance);
    }
    let mut mask = vec![false; p];
    for &j in psi_index {
        if j >= p || mask[j] {
            return Err(Error::InvalidPartition(format!(
                "bad interest index {j} for p = {p}"
            )));
        }
        mask[j] = true;
    }
    Ok(mask)
}

/// Natural-scale coordinate as a function of an unconstrained one.
fn to_theta(iv: &Interval, eta: f64) -> f64 {
    match *iv {
        Interval::Real => eta,
        Interval::Positive => eta.exp(),
        Interval::Open(lo, hi) => lo + (hi - lo) / (1.0 + (-eta).exp()),
    }
}

fn to_eta(iv: &Interval, theta: f64) -> f64 {
    match *iv {
        Interval::Real => theta,
        Interval::Positive => theta.ln(),
        Interval::Open(lo, hi) => {
            let u = (theta - lo) / (hi - lo);
            (u / (1.0 - u)).ln()
        }
    }
}

/// `dθ/dη`.
fn jac(iv: &Interval, theta: f64) -> f64 {
    match *iv {
        Interval::Real => 1.0,
        Interval::Positive => theta,
        Interval::Open(lo, hi) => (theta - lo) * (hi - theta) / (hi - lo),
    }
}

struct Problem<'a> {
    rule: &'a ScoringRule,
    model: &'a dyn ParametricModel,
    data: &'a Dataset,
    domain: Vec<Interval>,
    fixed: Vec<bool>,
    free: Vec<usize>,
    opts: &'a FitOptions,
    tol: f64,
}

struct Candidate {
    theta: DVector<f64>,
    value: f64,
    iterations: usize,
}

impl<'a> Problem<'a> {
    fn new(
        rule: &'a ScoringRule,
        model: &'a dyn ParametricModel,
        data: &'a Dataset,
        fixed: Vec<bool>,
        opts: &'a FitOptions,
    ) -> Self {
        let free = (0..fixed.len()).filter(|&j| !fixed[j]).collect();
        Self {
            rule,
            model,
            data,
            domain: model.domain(),
            fixed,
            free,
            opts,
            tol: opts.tol * (data.n() as f64).max(1.0),
        }
    }

    fn theta_of(&self, base: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        let mut t = base.clone();
        for (k, &j) in self.free.iter().enumerate() {
            t[j] = to_theta(&self.domain[j], eta[k]);
        }
        t
    }

    fn eta_of(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.free.len(),
            self.free.iter().map(|&j| to_eta(&self.domain[j], theta[j])),
        )
    }

    fn in_domain(&self, theta: &DVector<f64>) -> bool {
        self.domain
            .iter()
            .zip(theta.iter())
            .all(|(iv, &v)| iv.contains(v))
    }

    fn value(&self, theta: &DVector<f64>) -> Option<f64> {
        if !self.in_domain(theta) {
            return None;
        }
        self.rule
            .empirical_value(self.model, self.data, theta.as_slice())
            .ok()
            .filter(|v| v.is_finite())
    }

    /// Value and free-coordinate gradient on the natural scale.
    fn value_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let e = self
            .rule
            .empirical(self.model, self.data, theta.as_slice(), false)?;
        let g = DVector::from_iterator(self.free.len(), self.free.iter().map(|&j| e.gradient[j]));
        if !e.value.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainEscape(format!(
                "non-finite score at θ = {:?}",
                theta.as_slice()
            )));
        }
        Ok((e.value, g))
    }

    fn free_hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = self
            .rule
            .empirical(self.model, self.data, theta.as_slice(), true)?;
        let h = e.hessian.expect("empirical Hessian requested");
        let m = self.free.len();
        Ok(DMatrix::from_fn(m, m, |a, b| {
            h[(self.free[a], self.free[b])]
        }))
    }

    fn starts(&self, init: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = vec![init.clone()];
        let mut rng = seed_rng(self.opts.seed);
        let eta0 = self.eta_of(init);
        while out.len() < self.opts.starts.max(1) {
            let eta = eta0.map(|e| {
                let z: f64 = StandardNormal.sample(&mut rng);
                e + self.opts.perturb_scale * z * (1.0 + e.abs())
            });
            let t = self.theta_of(init, &eta);
            if self.in_domain(&t) {
                out.push(t);
            }
        }
        out
    }

    fn solve(&self, init: DVector<f64>) -> Result<FitResult> {
        if self.free.is_empty() {
            return Err(Error::EmptyNuisance);
        }
        let mut cands = Vec::new();
        let mut last_err = None;
        for s in self.starts(&init) {
            match self.bfgs(s) {
                Ok(c) => cands.push(c),
                Err(e) => last_err = Some(e),
            }
        }
        if cands.is_empty() {
            return Err(last_err.unwrap_or_else(|| Error::NoConvergence("no usable start".into())));
        }
        cands.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut diag = String::new();
        for c in &cands {
            match self.polish(c) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    if diag.is_empty() {
                        diag = e.to_string();
                    }
                }
            }
        }
        Err(Error::NoConvergence(format!(
            "{} with {} on {} after {} starts: {diag}",
            self.rule.name(),
            self.model.name(),
            self.data.n(),
            cands.len()
        )))
    }

    /// BFGS in η-space with Armijo backtracking.
    fn bfgs(&self, start: DVector<f64>) -> Result<Candidate> {
        let m = self.free.len();
        let mut eta = self.eta_of(&start);
        let mut theta = start;
        let (mut f, mut gt) = self.value_grad(&theta)?;
        let mut g = self.chain(&theta, &gt);
        let mut h = DMatrix::<f64>::identity(m, m);
        let mut scaled = false;
        let mut stall = 0;
        for it in 0..self.opts.max_iter {
            if gt.amax() <= self.tol {
                return Ok(Candidate {
                    theta,
                    value: f,
                    iterations: it,
                });
            }
            let mut d = -(&h * &g);
            if d.dot(&g) >= 0.0 {
                h = DMatrix::identity(m, m);
                d = -g.clone();
            }
            let dmax = d.amax();
            if dmax > 2.0 {
                d *= 2.0 / dmax;
            }
            let slope = d.dot(&g);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let e_new = &eta + &d * step;
                let t_new = self.theta_of(&theta, &e_new);
                if let Some(v) = self.value(&t_new) {
                    if v <= f + 1e-4 * step * slope {
                        accepted = Some((e_new, t_new, v));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((e_new, t_new, f_new)) = accepted else {
                // No descent along d: the start has stalled at machine precision.
                return Ok(Candidate {
                    theta,
                    value: f,
                    iterations: it,
                });
            };
            let (_, gt_new) = self.value_grad(&t_new)?;
            let g_new = self.chain(&t_new, &gt_new);
            let s = &e_new - &eta;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                if !scaled {
                    h = DMatrix::identity(m, m) * (sy / y.dot(&y));
                    scaled = true;
                }
                let rho = 1.0 / sy;
                let hy = &h * &y;
                let yhy = y.dot(&hy);
                h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                    - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            }
            if (f - f_new).abs() <= 1e-15 * f.abs().max(1.0) {
                stall += 1;
                if stall >= 3 {
                    return Ok(Candidate {
                        theta: t_new,
                        value: f_new,
                        iterations: it + 1,
                    });
                }
            } else {
                stall = 0;
            }
            eta = e_new;
            theta = t_new;
            f = f_new;
            g = g_new;
            gt = gt_new;
        }
        Ok(Candidate {
            theta,
            value: f,
            iterations: self.opts.max_iter,
        })
    }

    fn chain(&self, theta: &DVector<f64>, g_theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.free.len(),
            self.free
                .iter()
                .enumerate()
                .map(|(k, &j)| g_theta[k] * jac(&self.domain[j], theta[j])),
        )
    }

    /// Newton iterations on the natural scale, then the convergence and
    /// curvature checks.
    fn polish(&self, c: &Candidate) -> Result<FitResult> {
        let mut theta = c.theta.clone();
        let (mut f, mut g) = self.value_grad(&theta)?;
        let mut iterations = c.iterations;
        for _ in 0..50 {
            if g.amax() <= self.tol {
                break;
            }
            let hess = self.free_hessian(&theta)?;
            let Some(chol) = hess.clone().cholesky() else {
                break;
            };
            let d = chol.solve(&(-&g));
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let mut t_new = theta.clone();
                for (k, &j) in self.free.iter().enumerate() {
                    t_new[j] += step * d[k];
                }
                if self.in_domain(&t_new) {
                    if let Ok((f_new, g_new)) = self.value_grad(&t_new) {
                        let tiny = 1e-12 * f.abs().max(1.0);
                        if f_new <= f + tiny || g_new.amax() < g.amax() {
                            theta = t_new;
                            f = f_new;
                            g = g_new;
                            moved = true;
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            iterations += 1;
            if !moved {
                break;
            }
        }
        let gnorm = g.amax();
        if !(gnorm <= self.tol) {
            return Err(Error::NoConvergence(format!(
                "gradient norm {gnorm:.3e} above tolerance {:.3e} at θ = {:?}",
                self.tol,
                theta.as_slice()
            )));
        }
        let hess = self.free_hessian(&theta)?;
        let eig = hess.symmetric_eigenvalues();
        let big = eig.amax().max(1e-300);
        if eig.min() < -1e-6 * big {
            return Err(Error::NoConvergence(format!(
                "stationary point at θ = {:?} is not a minimum",
                theta.as_slice()
            )));
        }
        Ok(FitResult {
            theta_hat: theta.iter().copied().collect(),
            score_at_min: f,
            converged: true,
            iterations,
            grad_norm_at_min: gnorm,
            fixed_mask: self.fixed.iter().any(|&b| b).then(|| self.fixed.clone()),
        })
    }
}
