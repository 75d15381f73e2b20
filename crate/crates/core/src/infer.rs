//! Sandwich (Godambe) inference for minimum-score estimators: Wald, score
//! and ratio statistics, their calibrated versions, and profile versions
//! for a subset of the parameters.
//!
//! `Ĵ` and `K̂` are sums over observations, not averages. Every statistic
//! below is invariant to that choice.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{fit, fit_profile_with, partition_mask, FitOptions, FitResult};
use crate::models::{sample, ParametricModel, Support};
use crate::quadrature::{integrate_vec_half_line, integrate_vec_real_line, Tolerance};
use crate::rng::seed_rng;
use crate::rules::ScoringRule;

/// Seed of the Monte Carlo reference law for mixtures of χ²₁ variables.
pub const MIXTURE_SEED: u64 = 0x5C07E;
pub const MIXTURE_DRAWS: usize = 200_000;
/// Seed and size of the Monte Carlo expectation used for models whose
/// response is not scalar.
pub const EXPECTED_SEED: u64 = 0xE4EC7;
pub const EXPECTED_DRAWS: usize = 20_000;

#[derive(Debug, Clone)]
pub struct SandwichEstimate {
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub k_inv: DMatrix<f64>,
    /// `K̂⁻¹ Ĵ K̂⁻ᵀ`.
    pub v: DMatrix<f64>,
    /// `V̂⁻¹`, absent when `Ĵ` is singular.
    pub g: Option<DMatrix<f64>>,
}

impl SandwichEstimate {
    pub fn from_jk(j: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let k_inv = checked_inverse(&k).ok_or(Error::SingularK)?;
        let v = &k_inv * &j * k_inv.transpose();
        let g = checked_inverse(&j).map(|ji| k.transpose() * ji * &k);
        Ok(Self { j, k, k_inv, v, g })
    }

    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    /// `Ĵ K̂⁻¹`.
    pub fn jk_inv(&self) -> DMatrix<f64> {
        &self.j * &self.k_inv
    }

    /// Eigenvalues `μ_j` of `Ĵ K̂⁻¹`, largest first.
    pub fn ratio_weights(&self) -> Result<Vec<f64>> {
        real_eigenvalues(&self.jk_inv())
    }

    /// `tr(Ĵ K̂⁻¹) / p`.
    pub fn mean_weight(&self) -> f64 {
        self.jk_inv().trace() / self.dim() as f64
    }

    pub fn godambe(&self) -> Result<&DMatrix<f64>> {
        self.g.as_ref().ok_or(Error::SingularV)
    }
}

/// `Ĵ = Σ s sᵀ` and `K̂ = Σ ∂s/∂θᵀ` at `theta`.
pub fn estimate_sandwich(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<SandwichEstimate> {
    let (j, k) = jk(rule, model, data, theta)?;
    SandwichEstimate::from_jk(j, k)
}

fn jk(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = theta.len();
    let mut j = DMatrix::zeros(p, p);
    for s in rule.per_observation_gradients(model, data, theta)? {
        j.ger(1.0, &s, &s, 1.0);
    }
    let k = rule
        .empirical(model, data, theta, true)?
        .hessian
        .expect("empirical Hessian requested");
    Ok((j, k))
}

/// Where the `J`, `K` of a calibrated ratio statistic are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPoint {
    /// At the estimate `θ̂`.
    Fit,
    /// At the hypothesized `θ0`.
    Null,
}

/// Empirical sums over the sample, or model expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Information {
    Observed,
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InfoSource {
    pub at: EvalPoint,
    pub information: Information,
}

impl InfoSource {
    pub const fn new(at: EvalPoint, information: Information) -> Self {
        Self { at, information }
    }
}

/// `J`, `K` sources for the three calibrations of the ratio statistic.
/// The defaults are observed at `θ0` for `adj`, observed at `θ̂` for `m1`,
/// and expected at `θ0` for `inv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub adj: InfoSource,
    pub m1: InfoSource,
    pub inv: InfoSource,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            adj: InfoSource::new(EvalPoint::Fit, Information::Observed),
            m1: InfoSource::new(EvalPoint::Fit, Information::Observed),
            inv: InfoSource::new(EvalPoint::Null, Information::Expected),
        }
    }
}

impl Calibration {
    /// Everything observed at `θ̂`.
    pub fn plug_in() -> Self {
        let at_fit = InfoSource::new(EvalPoint::Fit, Information::Observed);
        Self {
            adj: at_fit,
            m1: at_fit,
            inv: at_fit,
        }
    }
}

/// The sandwich `src` asks for. `at_fit` is the observed sandwich at
/// `fit`, reused when it is the one requested.
pub fn calibration_sandwich(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta0: &[f64],
    fit: &FitResult,
    at_fit: &SandwichEstimate,
    src: InfoSource,
) -> Result<SandwichEstimate> {
    let theta = match src.at {
        EvalPoint::Fit => &fit.theta_hat[..],
        EvalPoint::Null => theta0,
    };
    match (src.information, src.at) {
        (Information::Observed, EvalPoint::Fit) => Ok(at_fit.clone()),
        (Information::Observed, EvalPoint::Null) => estimate_sandwich(rule, model, data, theta),
        (Information::Expected, _) => expected_sandwich(rule, model, data, theta),
    }
}

/// Model-expected information `J(θ) = Σ E_θ s sᵀ`, `K(θ) = Σ E_θ ∂s/∂θᵀ`,
/// the expectations taken over each row's response with its covariates
/// held fixed.
pub fn expected_sandwich(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<SandwichEstimate> {
    let (j, k) = if model.response_dim() == model.obs_dim() {
        let (j, k) = expected_jk_one(rule, model, data.row(0), theta)?;
        let n = data.n() as f64;
        (j * n, k * n)
    } else {
        let p = theta.len();
        let (mut j, mut k) = (DMatrix::zeros(p, p), DMatrix::zeros(p, p));
        for row in data.rows() {
            let (a, b) = expected_jk_one(rule, model, row, theta)?;
            j += a;
            k += b;
        }
        (j, k)
    };
    SandwichEstimate::from_jk(j, k)
}

/// Per-observation `E_θ s sᵀ` and `E_θ ∂s/∂θᵀ`. The covariates are read
/// from `x[response_dim..]`; the response entries of `x` are ignored.
/// Scalar responses use quadrature, others a fixed-seed Monte Carlo
/// average.
pub fn expected_jk_one(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    x: &[f64],
    theta: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    model.check_theta(theta)?;
    let p = theta.len();
    if model.response_dim() != 1 {
        if model.response_dim() != model.obs_dim() {
            return Err(Error::Dimension(format!(
                "{}: expected information needs a scalar response or no covariates",
                model.name()
            )));
        }
        let draws = sample(model, theta, EXPECTED_DRAWS, EXPECTED_SEED)?;
        let (j, k) = jk(rule, model, &draws, theta)?;
        let m = EXPECTED_DRAWS as f64;
        return Ok((j / m, k / m));
    }
    let mut row = x.to_vec();
    let (c, s) = model.response_location(&row, theta);
    let mut err = None;
    let integrand = |y: f64, out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        row[0] = y;
        let lp = model.log_density(&row, theta);
        if !(lp > f64::NEG_INFINITY) {
            return;
        }
        let w = lp.exp();
        if w == 0.0 {
            return;
        }
        match rule.eval(model, &row, theta, true) {
            Ok(e) => {
                let h = e.hessian.expect("Hessian requested");
                for a in 0..p {
                    for b in 0..p {
                        out[a * p + b] = w * e.gradient[a] * e.gradient[b];
                        out[p * p + a * p + b] = w * h[(a, b)];
                    }
                }
            }
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    };
    let tol = Tolerance {
        abs: 1e-12,
        rel: 1e-10,
    };
    let v = match model.support() {
        Support::Real => integrate_vec_real_line(integrand, c, s, 2 * p * p, tol)?,
        Support::Positive => integrate_vec_half_line(integrand, 0.0, s, 2 * p * p, tol)?,
    };
    if let Some(e) = err {
        return Err(e);
    }
    Ok((
        DMatrix::from_row_slice(p, p, &v[..p * p]),
        DMatrix::from_row_slice(p, p, &v[p * p..]),
    ))
}

/// Inverse with a relative determinant check.
fn checked_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale: f64 = m.column_iter().map(|c| c.amax()).product();
    let det = m.determinant();
    if !(scale > 0.0) || !det.is_finite() || det.abs() < 1e-12 * scale {
        return None;
    }
    m.clone().try_inverse()
}

/// Real parts of the eigenvalues of a matrix similar to a symmetric one,
/// sorted in decreasing order.
pub fn real_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let ev = m.complex_eigenvalues();
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(z) = ev
        .iter()
        .find(|z| z.im.abs() > 1e-8 * radius.max(f64::MIN_POSITIVE))
    {
        return Err(Error::NegativeWeight(format!(
            "complex eigenvalue {} + {}i",
            z.re, z.im
        )));
    }
    let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    Ok(re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Wald,
    Score,
    Ratio,
    RatioAdj,
    RatioM1,
    RatioInv,
    ProfileWald,
    ProfileScore,
    ProfileRatio,
    ProfileRatioM1,
    ProfileRatioInv,
}

impl StatKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatKind::Wald => "wald",
            StatKind::Score => "score",
            StatKind::Ratio => "ratio",
            StatKind::RatioAdj => "ratio_adj",
            StatKind::RatioM1 => "ratio_m1",
            StatKind::RatioInv => "ratio_inv",
            StatKind::ProfileWald => "profile_wald",
            StatKind::ProfileScore => "profile_score",
            StatKind::ProfileRatio => "profile_ratio",
            StatKind::ProfileRatioM1 => "profile_ratio_m1",
            StatKind::ProfileRatioInv => "profile_ratio_inv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL_KINDS.iter().copied().find(|k| k.name() == s)
    }
}

pub const ALL_KINDS: [StatKind; 11] = [
    StatKind::Wald,
    StatKind::Score,
    StatKind::Ratio,
    StatKind::RatioAdj,
    StatKind::RatioM1,
    StatKind::RatioInv,
    StatKind::ProfileWald,
    StatKind::ProfileScore,
    StatKind::ProfileRatio,
    StatKind::ProfileRatioM1,
    StatKind::ProfileRatioInv,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NullLaw {
    ChiSq {
        df: usize,
    },
    /// `Σ w_j Z_j²` with independent standard normal `Z_j`.
    MixtureChiSq {
        weights: Vec<f64>,
    },
}

impl NullLaw {
    pub fn p_value(&self, x: f64) -> Result<f64> {
        match self {
            NullLaw::ChiSq { df } => chisq_sf(*df, x),
            NullLaw::MixtureChiSq { weights } => Ok(MixtureChiSq::new(weights)?.survival(x)),
        }
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        match self {
            NullLaw::ChiSq { df } => chisq_quantile(*df, prob),
            NullLaw::MixtureChiSq { weights } => mixture_chisq_quantile(weights, prob),
        }
    }
}

pub fn chisq_sf(df: usize, x: f64) -> Result<f64> {
    let d = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(if x <= 0.0 { 1.0 } else { d.sf(x) })
}

pub fn chisq_quantile(df: usize, prob: f64) -> Result<f64> {
    check_prob(prob)?;
    let d = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(d.inverse_cdf(prob))
}

fn check_prob(prob: f64) -> Result<()> {
    if prob > 0.0 && prob < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "probability must lie in (0, 1), got {prob}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: StatKind,
    pub value: f64,
    pub null_law: NullLaw,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TestReport {
    pub fn new(statistic: StatKind, value: f64, null_law: NullLaw) -> Result<Self> {
        let p_value = null_law.p_value(value)?;
        Ok(Self {
            statistic,
            value,
            null_law,
            p_value,
            note: None,
        })
    }

    pub fn chisq(statistic: StatKind, value: f64, df: usize) -> Result<Self> {
        Self::new(statistic, value, NullLaw::ChiSq { df })
    }

    /// Whether the hypothesized value lies in the confidence region of the
    /// given level.
    pub fn covered(&self, level: f64) -> bool {
        self.p_value > 1.0 - level
    }
}

/// Monte Carlo law of `Σ w_j Z_j²` from a fixed stream.
#[derive(Debug, Clone)]
pub struct MixtureChiSq {
    sorted: Vec<f64>,
}

impl MixtureChiSq {
    pub fn new(weights: &[f64]) -> Result<Self> {
        Self::with_draws(weights, MIXTURE_DRAWS, MIXTURE_SEED)
    }

    pub fn with_draws(weights: &[f64], draws: usize, seed: u64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one weight".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::NegativeWeight(format!("weight {w} in {weights:?}")));
        }
        let mut rng = seed_rng(seed);
        let mut sorted: Vec<f64> = (0..draws)
            .map(|_| {
                weights
                    .iter()
                    .map(|w| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        w * z * z
                    })
                    .sum()
            })
            .collect();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        check_prob(prob)?;
        let n = self.sorted.len();
        let i = ((prob * n as f64).ceil() as usize).clamp(1, n) - 1;
        Ok(self.sorted[i])
    }

    /// `P(X ≥ x)`.
    pub fn survival(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

pub fn mixture_chisq_quantile(weights: &[f64], prob: f64) -> Result<f64> {
    MixtureChiSq::new(weights)?.quantile(prob)
}

pub fn mixture_chisq_survival(weights: &[f64], x: f64) -> Result<f64> {
    Ok(MixtureChiSq::new(weights)?.survival(x))
}

fn diff(a: &[f64], b: &[f64]) -> Result<DVector<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "θ has {} coordinates, θ0 has {}",
            a.len(),
            b.len()
        )));
    }
    Ok(DVector::from_iterator(
        a.len(),
        a.iter().zip(b).map(|(x, y)| x - y),
    ))
}

/// `(θ̂ − θ0)ᵀ V̂⁻¹ (θ̂ − θ0)`.
pub fn wald_stat(
    fit: &FitResult,
    sandwich: &SandwichEstimate,
    theta0: &[f64],
) -> Result<TestReport> {
    let d = diff(&fit.theta_hat, theta0)?;
    let g = sandwich.godambe()?;
    TestReport::chisq(StatKind::Wald, d.dot(&(g * &d)), d.len())
}

/// `s(θ0)ᵀ Ĵ⁻¹ s(θ0)` with `Ĵ` taken from `sandwich` (normally at `θ0`).
pub fn score_stat(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta0: &[f64],
    sandwich: &SandwichEstimate,
) -> Result<TestReport> {
    let s = rule.empirical(model, data, theta0, false)?.gradient;
    let j_inv = checked_inverse(&sandwich.j).ok_or(Error::SingularJ)?;
    TestReport::chisq(StatKind::Score, s.dot(&(j_inv * &s)), s.len())
}

/// `2{S(θ0) − S(θ̂)}`, clamped at 0 for rounding-level negatives.
pub fn ratio_value(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta0: &[f64],
    fit: &FitResult,
) -> Result<f64> {
    let s0 = rule.empirical_value(model, data, theta0)?;
    let w = 2.0 * (s0 - fit.score_at_min);
    let slack = 1e-8f64.max(1e-12 * s0.abs());
    if w < -slack {
        return Err(Error::NegativeRatio(w));
    }
    Ok(w.max(0.0))
}

/// Ratio statistic with its mixture-of-χ² reference law, weights the
/// eigenvalues of `Ĵ K̂⁻¹` from `sandwich`.
pub fn ratio_stat(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta0: &[f64],
    fit: &FitResult,
    sandwich: &SandwichEstimate,
) -> Result<TestReport> {
    let w = ratio_value(rule, model, data, theta0, fit)?;
    let weights = sandwich.ratio_weights()?;
    TestReport::new(StatKind::Ratio, w, NullLaw::MixtureChiSq { weights })
}

/// `W / (Ĵ/K̂)` for a scalar parameter.
pub fn ratio_adj_scalar(ratio: &TestReport, sandwich: &SandwichEstimate) -> Result<TestReport> {
    if sandwich.dim() != 1 {
        return Err(Error::NotScalarParam(sandwich.dim()));
    }
    let mu = sandwich.j[(0, 0)] / sandwich.k[(0, 0)];
    if !(mu > 0.0) {
        return Err(Error::NegativeWeight(format!("adjustment factor {mu}")));
    }
    TestReport::chisq(StatKind::RatioAdj, ratio.value / mu, 1)
}

/// `W / μ̄` with `μ̄ = tr(Ĵ K̂⁻¹)/p`.
pub fn ratio_m1(ratio: &TestReport, sandwich: &SandwichEstimate) -> Result<TestReport> {
    let mu = sandwich.mean_weight();
    if !(mu > 0.0) {
        return Err(Error::NegativeWeight(format!("mean eigenvalue {mu}")));
    }
    TestReport::chisq(StatKind::RatioM1, ratio.value / mu, sandwich.dim())
}

/// `A(θ0) W` with `A = sᵀĴ⁻¹s / sᵀK̂⁻¹s` and `s = s(θ0)`. `Ĵ`, `K̂` come
/// from `sandwich`, so the caller picks where they are evaluated.
pub fn ratio_inv(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta0: &[f64],
    ratio: &TestReport,
    sandwich: &SandwichEstimate,
) -> Result<TestReport> {
    let p = sandwich.dim();
    let s = rule.empirical(model, data, theta0, false)?.gradient;
    if s.norm() < 1e-12 {
        let mut r = TestReport::chisq(StatKind::RatioInv, 0.0, p)?;
        r.note = Some("zero score vector at θ0".into());
        return Ok(r);
    }
    let a = rescaling_factor(&s, &sandwich.j, &sandwich.k_inv)?;
    TestReport::chisq(StatKind::RatioInv, a * ratio.value, p)
}

fn rescaling_factor(s: &DVector<f64>, j: &DMatrix<f64>, k_inv: &DMatrix<f64>) -> Result<f64> {
    let j_inv = checked_inverse(j).ok_or(Error::SingularJ)?;
    let num = s.dot(&(j_inv * s));
    let den = s.dot(&(k_inv * s));
    let a = num / den;
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::NegativeRatio(a));
    }
    Ok(a)
}

fn block(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::<f64, Dyn>::new(m.clone())
        .map(|c| c.inverse())
        .or_else(|| checked_inverse(m))
        .ok_or(Error::SingularBlock)
}

/// Everything the profile statistics need, for reuse across statistics.
#[derive(Debug, Clone)]
pub struct ProfileFits {
    pub full: FitResult,
    pub constrained: FitResult,
    pub at_full: SandwichEstimate,
    pub at_constrained: SandwichEstimate,
}

pub fn profile_fits(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    psi_index: &[usize],
    psi0: &[f64],
    opts: &FitOptions,
) -> Result<ProfileFits> {
    partition_mask(model.param_dim(), psi_index)?;
    let full = crate::estimate::fit_with(rule, model, data, None, opts)?;
    let constrained = fit_profile_with(
        rule,
        model,
        data,
        psi_index,
        psi0,
        Some(&full.theta_hat),
        opts,
    )?;
    let at_full = estimate_sandwich(rule, model, data, &full.theta_hat)?;
    let at_constrained = estimate_sandwich(rule, model, data, &constrained.theta_hat)?;
    Ok(ProfileFits {
        full,
        constrained,
        at_full,
        at_constrained,
    })
}

/// ProfileWald, ProfileScore, ProfileRatio, ProfileRatioM1 and
/// ProfileRatioInv for `ψ = θ[psi_index]` at `psi0`.
pub fn profile_stats(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    psi_index: &[usize],
    psi0: &[f64],
) -> Result<Vec<TestReport>> {
    let fits = profile_fits(rule, model, data, psi_index, psi0, &FitOptions::default())?;
    profile_reports(rule, model, data, psi_index, psi0, &fits)
}

pub fn profile_reports(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    psi_index: &[usize],
    psi0: &[f64],
    fits: &ProfileFits,
) -> Result<Vec<TestReport>> {
    profile_reports_with(
        rule,
        model,
        data,
        psi_index,
        psi0,
        fits,
        &Calibration::default(),
    )
}

/// The sandwich a profile adjustment asks for. The null point is the
/// constrained fit.
fn profile_sandwich(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    fits: &ProfileFits,
    src: InfoSource,
) -> Result<SandwichEstimate> {
    match (src.at, src.information) {
        (EvalPoint::Fit, Information::Observed) => Ok(fits.at_full.clone()),
        (EvalPoint::Null, Information::Observed) => Ok(fits.at_constrained.clone()),
        (EvalPoint::Fit, Information::Expected) => {
            expected_sandwich(rule, model, data, &fits.full.theta_hat)
        }
        (EvalPoint::Null, Information::Expected) => {
            expected_sandwich(rule, model, data, &fits.constrained.theta_hat)
        }
    }
}

/// Eigenvalues of `(K^{ψψ})⁻¹ G^{ψψ}` from `sw`.
fn profile_weights(sw: &SandwichEstimate, psi_index: &[usize]) -> Result<Vec<f64>> {
    let k_pp_inv = spd_inverse(&block(&sw.k_inv, psi_index))?;
    real_eigenvalues(&(k_pp_inv * block(&sw.v, psi_index)))
}

/// As [`profile_reports`], with the `m1` and `inv` adjustments taking
/// `J`, `K` from `cal`. The raw ratio's weights are observed at `θ̂`, the
/// score statistic is observed at the constrained fit.
pub fn profile_reports_with(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    psi_index: &[usize],
    psi0: &[f64],
    fits: &ProfileFits,
    cal: &Calibration,
) -> Result<Vec<TestReport>> {
    let p0 = psi_index.len();

    // Wald: ψ̂ from the unconstrained fit, G^{ψψ} there.
    let g_psi = block(&fits.at_full.v, psi_index);
    let psi_hat: Vec<f64> = psi_index.iter().map(|&j| fits.full.theta_hat[j]).collect();
    let d = diff(&psi_hat, psi0)?;
    let wald = d.dot(&(spd_inverse(&g_psi)? * &d));

    // Score: s_ψ at the constrained fit, K^{ψψ} and G^{ψψ} from `sw`.
    let s_full = rule
        .empirical(model, data, &fits.constrained.theta_hat, false)?
        .gradient;
    let s_psi = DVector::from_iterator(p0, psi_index.iter().map(|&j| s_full[j]));
    let score_with = |sw: &SandwichEstimate| -> Result<(f64, f64)> {
        let k_pp = block(&sw.k_inv, psi_index);
        let ks = &k_pp * &s_psi;
        let score = ks.dot(&(spd_inverse(&block(&sw.v, psi_index))? * &ks));
        Ok((score, s_psi.dot(&(&k_pp * &s_psi))))
    };
    let (score, _) = score_with(&fits.at_constrained)?;

    let w = 2.0 * (fits.constrained.score_at_min - fits.full.score_at_min);
    let slack = 1e-8f64.max(1e-12 * fits.full.score_at_min.abs());
    if w < -slack {
        return Err(Error::NegativeRatio(w));
    }
    let w = w.max(0.0);
    let nu = profile_weights(&fits.at_full, psi_index)?;

    let nu_m1 = profile_weights(
        &profile_sandwich(rule, model, data, fits, cal.m1)?,
        psi_index,
    )?;
    let nu_bar = nu_m1.iter().sum::<f64>() / p0 as f64;
    if !(nu_bar > 0.0) {
        return Err(Error::NegativeWeight(format!("profile weights {nu_m1:?}")));
    }
    let inv = if s_psi.norm() < 1e-12 {
        0.0
    } else {
        let (num, den) = score_with(&profile_sandwich(rule, model, data, fits, cal.inv)?)?;
        if !(den > 0.0) {
            return Err(Error::NegativeRatio(den));
        }
        num / den * w
    };

    Ok(vec![
        TestReport::chisq(StatKind::ProfileWald, wald, p0)?,
        TestReport::chisq(StatKind::ProfileScore, score, p0)?,
        TestReport::new(
            StatKind::ProfileRatio,
            w,
            NullLaw::MixtureChiSq { weights: nu },
        )?,
        TestReport::chisq(StatKind::ProfileRatioM1, w / nu_bar, p0)?,
        TestReport::chisq(StatKind::ProfileRatioInv, inv, p0)?,
    ])
}

/// Full-parameter reports at `theta0` with the default [`Calibration`]:
/// fit, sandwich at the fit, and all requested statistics.
pub fn test_all(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta0: &[f64],
    kinds: &[StatKind],
) -> Result<(FitResult, Vec<TestReport>)> {
    test_all_with(rule, model, data, theta0, kinds, &Calibration::default())
}

pub fn test_all_with(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    data: &Dataset,
    theta0: &[f64],
    kinds: &[StatKind],
    cal: &Calibration,
) -> Result<(FitResult, Vec<TestReport>)> {
    model.check_theta(theta0)?;
    let f = fit(rule, model, data, None)?;
    let at_fit = estimate_sandwich(rule, model, data, &f.theta_hat)?;
    let w = ratio_value(rule, model, data, theta0, &f)?;
    let raw = TestReport {
        statistic: StatKind::Ratio,
        value: w,
        null_law: NullLaw::ChiSq { df: theta0.len() },
        p_value: f64::NAN,
        note: None,
    };
    let sw = |src| calibration_sandwich(rule, model, data, theta0, &f, &at_fit, src);
    let mut out = Vec::new();
    for k in kinds {
        let r = match k {
            StatKind::Wald => wald_stat(&f, &at_fit, theta0)?,
            StatKind::Score => {
                let at0 = estimate_sandwich(rule, model, data, theta0)?;
                score_stat(rule, model, data, theta0, &at0)?
            }
            StatKind::Ratio => TestReport::new(
                StatKind::Ratio,
                w,
                NullLaw::MixtureChiSq {
                    weights: at_fit.ratio_weights()?,
                },
            )?,
            StatKind::RatioAdj => ratio_adj_scalar(&raw, &sw(cal.adj)?)?,
            StatKind::RatioM1 => ratio_m1(&raw, &sw(cal.m1)?)?,
            StatKind::RatioInv => ratio_inv(rule, model, data, theta0, &raw, &sw(cal.inv)?)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "{} needs an interest/nuisance split",
                    other.name()
                )))
            }
        };
        out.push(r);
    }
    Ok((f, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample, LocationModel, LocationScaleModel};
    use crate::quadrature::integrate_real_line;
    use crate::rules::Gauge;

    #[test]
    fn fisher_information_for_normal_mean() {
        let m = LocationModel::normal();
        let d = sample(&m, &[0.0], 10_000, 1).unwrap();
        let f = fit(&ScoringRule::Log, &m, &d, None).unwrap();
        let s = estimate_sandwich(&ScoringRule::Log, &m, &d, &f.theta_hat).unwrap();
        let (j, k) = (s.j[(0, 0)] / 1e4, s.k[(0, 0)] / 1e4);
        assert!((j - 1.0).abs() < 0.1 && (k - 1.0).abs() < 1e-12);
        assert!((j / k - 1.0).abs() <= 0.1);
        assert!((s.v[(0, 0)] - s.j[(0, 0)] / s.k[(0, 0)].powi(2)).abs() < 1e-15);
    }

    #[test]
    fn tsallis_sandwich_matches_quadrature() {
        let gamma = 2.0;
        let m = LocationModel::normal();
        let rule = ScoringRule::tsallis(gamma).unwrap();
        let d = sample(&m, &[0.0], 100_000, 2).unwrap();
        let s = estimate_sandwich(&rule, &m, &d, &[0.0]).unwrap();
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        // s(x, 0) = −γ φ(x)^{γ−1} x and ∂s/∂θ = γ φ^{γ−1}(1 − (γ−1) x²)
        let j = integrate_real_line(
            |x| (gamma * phi(x).powf(gamma - 1.0) * x).powi(2) * phi(x),
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        let k = integrate_real_line(
            |x| gamma * phi(x).powf(gamma - 1.0) * (1.0 - (gamma - 1.0) * x * x) * phi(x),
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        assert!(
            (s.j[(0, 0)] / 1e5 - j).abs() < 0.02 * j,
            "{} vs {j}",
            s.j[(0, 0)] / 1e5
        );
        assert!(
            (s.k[(0, 0)] / 1e5 - k).abs() < 0.02 * k,
            "{} vs {k}",
            s.k[(0, 0)] / 1e5
        );
    }

    #[test]
    fn scalar_identities() {
        let m = LocationModel::normal();
        let rule = ScoringRule::tsallis(1.5).unwrap();
        let d = sample(&m, &[0.2], 50, 3).unwrap();
        let f = fit(&rule, &m, &d, None).unwrap();
        let s = estimate_sandwich(&rule, &m, &d, &f.theta_hat).unwrap();
        let theta0 = [0.0];
        let wald = wald_stat(&f, &s, &theta0).unwrap();
        let expected = (f.theta_hat[0]).powi(2) * s.k[(0, 0)].powi(2) / s.j[(0, 0)];
        assert!((wald.value - expected).abs() < 1e-10 * expected.max(1.0));
        let r = ratio_stat(&rule, &m, &d, &theta0, &f, &s).unwrap();
        let adj = ratio_adj_scalar(&r, &s).unwrap();
        let m1 = ratio_m1(&r, &s).unwrap();
        let inv = ratio_inv(&rule, &m, &d, &theta0, &r, &s).unwrap();
        assert!((adj.value - m1.value).abs() <= 1e-12 * adj.value);
        assert!((adj.value - inv.value).abs() <= 1e-12 * adj.value);
        let at0 = estimate_sandwich(&rule, &m, &d, &theta0).unwrap();
        let sc = score_stat(&rule, &m, &d, &theta0, &at0).unwrap();
        let s0 = rule.empirical(&m, &d, &theta0, false).unwrap().gradient[0];
        assert!((sc.value - s0 * s0 / at0.j[(0, 0)]).abs() < 1e-12 * sc.value);
    }

    #[test]
    fn statistics_vanish_at_the_fit() {
        let m = LocationScaleModel::normal();
        let rule = ScoringRule::tsallis(1.5).unwrap();
        let d = sample(&m, &[0.0, 1.0], 40, 4).unwrap();
        let f = fit(&rule, &m, &d, None).unwrap();
        let s = estimate_sandwich(&rule, &m, &d, &f.theta_hat).unwrap();
        assert_eq!(wald_stat(&f, &s, &f.theta_hat).unwrap().value, 0.0);
        let r = ratio_stat(&rule, &m, &d, &f.theta_hat, &f, &s).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.p_value, 1.0);
        let sc = score_stat(&rule, &m, &d, &f.theta_hat, &s).unwrap();
        assert!(sc.value < 1e-12);
    }

    #[test]
    fn eigen_trace_identity_and_log_weights() {
        let m = LocationScaleModel::normal();
        let d = sample(&m, &[1.0, 2.0], 1000, 5).unwrap();
        for rule in [
            ScoringRule::Log,
            ScoringRule::tsallis(1.5).unwrap(),
            ScoringRule::Hyvarinen,
        ] {
            let f = fit(&rule, &m, &d, None).unwrap();
            let s = estimate_sandwich(&rule, &m, &d, &f.theta_hat).unwrap();
            let mu = s.ratio_weights().unwrap();
            let tr = s.jk_inv().trace();
            assert!((mu.iter().sum::<f64>() - tr).abs() <= 1e-10 * tr.abs().max(1.0));
            if let ScoringRule::Log = rule {
                assert!(mu.iter().all(|v| (v - 1.0).abs() < 0.15), "{mu:?}");
                let jn = s.j.norm();
                assert!((&s.j - &s.k).norm() / jn <= 0.15);
            }
        }
    }

    #[test]
    fn constant_shift_leaves_statistics_unchanged() {
        // The custom gauge's ψ differs from the named one by an affine term,
        // which moves each score by a θ-free constant.
        let m = LocationScaleModel::normal();
        let d = sample(&m, &[0.0, 1.0], 30, 6).unwrap();
        let a = ScoringRule::bregman(Gauge::Brier).unwrap();
        let b = ScoringRule::bregman(Gauge::custom("flat", |_| 2.0)).unwrap();
        let kinds = [
            StatKind::Wald,
            StatKind::Score,
            StatKind::RatioM1,
            StatKind::RatioInv,
        ];
        let (fa, ra) = test_all(&a, &m, &d, &[0.1, 1.1], &kinds).unwrap();
        let (fb, rb) = test_all(&b, &m, &d, &[0.1, 1.1], &kinds).unwrap();
        assert!((fa.theta() - fb.theta()).amax() < 1e-6);
        for (x, y) in ra.iter().zip(&rb) {
            assert!(
                (x.value - y.value).abs() < 1e-4 * x.value.max(1.0),
                "{:?} {} {}",
                x.statistic,
                x.value,
                y.value
            );
        }
    }

    #[test]
    fn mixture_quantiles() {
        let q = mixture_chisq_quantile(&[1.0, 1.0], 0.95).unwrap();
        assert!((q - 5.9915).abs() < 0.05, "{q}");
        let c = 2.5;
        let q1 = mixture_chisq_quantile(&[c], 0.9).unwrap();
        assert!((q1 - c * chisq_quantile(1, 0.9).unwrap()).abs() < 0.05 * c);
        assert!(matches!(
            mixture_chisq_quantile(&[1.0, -0.2], 0.9),
            Err(Error::NegativeWeight(_))
        ));
        assert!(mixture_chisq_quantile(&[1.0], 1.0).is_err());
        let mix = MixtureChiSq::new(&[2.0, 1.0, 0.5]).unwrap();
        let x = mix.quantile(0.95).unwrap();
        assert!((mix.survival(x) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn covered_follows_p_value() {
        let r = TestReport::chisq(StatKind::Wald, 3.0, 1).unwrap();
        assert!(r.covered(0.95));
        assert!(!r.covered(0.90));
        assert_eq!(r.covered(0.95), r.p_value > 0.05);
    }

    #[test]
    fn profile_statistics() {
        let m = LocationScaleModel::normal();
        let d = sample(&m, &[0.0, 1.0], 200, 7).unwrap();
        let reps = profile_stats(&ScoringRule::Log, &m, &d, &[0], &[0.1]).unwrap();
        let kinds: Vec<_> = reps.iter().map(|r| r.statistic).collect();
        assert_eq!(
            kinds,
            [
                StatKind::ProfileWald,
                StatKind::ProfileScore,
                StatKind::ProfileRatio,
                StatKind::ProfileRatioM1,
                StatKind::ProfileRatioInv
            ]
        );
        // Log score: classical profile likelihood ratio n ln(σ̃²/σ̂²).
        let x = d.column(0);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let s2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let s2c = x.iter().map(|v| (v - 0.1).powi(2)).sum::<f64>() / n;
        let lr = n * (s2c / s2).ln();
        assert!((reps[2].value - lr).abs() < 1e-8 * lr.max(1.0));
        let NullLaw::MixtureChiSq { weights } = &reps[2].null_law else {
            panic!()
        };
        assert!((weights[0] - 1.0).abs() < 0.15);
        for r in &reps {
            assert!(
                (r.value - lr).abs() < 0.25 * lr,
                "{:?}: {} vs {lr}",
                r.statistic,
                r.value
            );
        }
        assert!(matches!(
            profile_stats(&ScoringRule::Log, &m, &d, &[0, 1], &[0.0, 1.0]),
            Err(Error::EmptyNuisance)
        ));
    }

    #[test]
    fn singular_k_is_reported() {
        let j = DMatrix::identity(2, 2);
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            SandwichEstimate::from_jk(j, k),
            Err(Error::SingularK)
        ));
        let s = SandwichEstimate::from_jk(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        assert!(s.g.is_none());
    }

    #[test]
    fn expected_log_score_information_is_fisher() {
        let m = LocationScaleModel::normal();
        let d = sample(&m, &[0.0, 2.0], 7, 1).unwrap();
        let s = expected_sandwich(&ScoringRule::Log, &m, &d, &[0.0, 2.0]).unwrap();
        let fisher = DMatrix::from_row_slice(2, 2, &[7.0 / 4.0, 0.0, 0.0, 14.0 / 4.0]);
        assert!((&s.j - &fisher).amax() < 1e-8, "{}", s.j);
        assert!((&s.k - &fisher).amax() < 1e-8, "{}", s.k);
    }

    #[test]
    fn expected_regression_information_is_design_gram() {
        use crate::models::{table3_design, LinearRegressionModel};
        let n = 12;
        let x = table3_design(n, &mut crate::rng::seed_rng(4));
        let m = LinearRegressionModel::new(3, 0.5)
            .unwrap()
            .with_design(x.clone())
            .unwrap();
        let beta = [1.0, 2.0, 3.0];
        let d = sample(&m, &beta, n, 5).unwrap();
        let gram = x.transpose() * &x;
        let s = expected_sandwich(&ScoringRule::Log, &m, &d, &beta).unwrap();
        let want = &gram / 0.25;
        assert!((&s.j - &want).amax() < 1e-7 * want.amax(), "{}", s.j);
        // Tsallis: both matrices are multiples of XᵀX, so V ∝ (XᵀX)⁻¹.
        let t = ScoringRule::tsallis(1.5).unwrap();
        let s = expected_sandwich(&t, &m, &d, &beta).unwrap();
        let r = s.j[(0, 0)] / gram[(0, 0)];
        assert!((&s.j - &gram * r).amax() < 1e-7 * s.j.amax());
    }

    #[test]
    fn expected_equicorrelated_information_by_simulation() {
        use crate::models::EquiCorrelatedNormal;
        let (q, rho) = (10usize, 0.5);
        let m = EquiCorrelatedNormal::new(q).unwrap();
        let d = sample(&m, &[rho], 3, 1).unwrap();
        let s = expected_sandwich(&ScoringRule::Log, &m, &d, &[rho]).unwrap();
        // eigenvalues 1 + (q−1)ρ once and 1 − ρ with multiplicity q − 1
        let qf = q as f64;
        let a = (qf - 1.0) / (1.0 + (qf - 1.0) * rho);
        let b = 1.0 / (1.0 - rho);
        let fisher = 3.0 * 0.5 * (a * a + (qf - 1.0) * b * b);
        for v in [s.j[(0, 0)], s.k[(0, 0)]] {
            assert!((v / fisher - 1.0).abs() < 0.05, "{v} vs {fisher}");
        }
        let again = expected_sandwich(&ScoringRule::Log, &m, &d, &[rho]).unwrap();
        assert_eq!(again.j, s.j);
    }
}
