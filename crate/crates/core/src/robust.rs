//! Influence functions and grid probes of bounded influence.
//!
//! Boundedness cannot be decided from finitely many points. The probes here
//! widen the grid in stages out to `10⁶` and call a function unbounded when
//! its running supremum still grows by more than 1% across the last two
//! widenings.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::infer::expected_jk_one;
use crate::models::{ParametricModel, StdDensity, Support};
use crate::rules::{Gauge, ScoringRule};

/// Outer radii of the successive grid stages.
pub const STAGES: [f64; 5] = [10.0, 1e2, 1e3, 1e4, 1e6];
/// Points per grid segment.
pub const SEGMENT_POINTS: usize = 4001;
const GROWTH: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceProfile {
    pub grid: Vec<f64>,
    /// `−K⁻¹ s(x, θ)` per grid point, `s` the θ-gradient of the score.
    pub values: Vec<Vec<f64>>,
    /// Largest `‖IF‖∞` seen; `+∞` when flagged unbounded.
    pub sup_norm: f64,
    /// Largest value actually attained on the grid.
    pub grid_sup: f64,
    pub attained_at: f64,
    pub unbounded: bool,
    /// Running supremum after each grid stage (empty for a fixed grid).
    pub stage_sups: Vec<f64>,
}

/// Outcome of a boundedness probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub bounded: bool,
    pub sup: f64,
    pub attained_at: f64,
    pub stage_sups: Vec<f64>,
}

impl Verdict {
    fn from_stages(stage_sups: Vec<f64>, sup: f64, attained_at: f64) -> Self {
        Self {
            bounded: !grows(&stage_sups),
            sup,
            attained_at,
            stage_sups,
        }
    }
}

fn grows(stage_sups: &[f64]) -> bool {
    match stage_sups {
        [.., a, _, c] => !c.is_finite() || *c > (1.0 + GROWTH) * a,
        [.., c] => !c.is_finite(),
        [] => false,
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { b } else { a + i as f64 * h })
}

/// Grid segments for stage `k` on the real line: the whole of `[−R₀, R₀]`
/// first, then the two new outer shells.
fn real_stage(k: usize) -> Vec<f64> {
    if k == 0 {
        return linspace(-STAGES[0], STAGES[0], SEGMENT_POINTS).collect();
    }
    let (a, b) = (STAGES[k - 1], STAGES[k]);
    linspace(a, b, SEGMENT_POINTS)
        .flat_map(|u| [u, -u])
        .collect()
}

/// Grid segments for stage `k` on `(0, ∞)`: outward to `R_k` and inward to
/// `1/R_k`, spaced evenly in the logarithm.
fn positive_stage(k: usize) -> Vec<f64> {
    if k == 0 {
        let r = STAGES[0];
        return linspace(-r.ln(), r.ln(), SEGMENT_POINTS)
            .map(f64::exp)
            .collect();
    }
    let (a, b) = (STAGES[k - 1].ln(), STAGES[k].ln());
    linspace(a, b, SEGMENT_POINTS)
        .flat_map(|l| [l.exp(), (-l).exp()])
        .collect()
}

/// Population `J = E s sᵀ` and `K = E ∂s/∂θᵀ` by quadrature over a scalar
/// response.
pub fn population_jk(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    theta: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    scalar_only(model)?;
    expected_jk_one(rule, model, &[0.0], theta)
}

fn scalar_only(model: &dyn ParametricModel) -> Result<()> {
    if model.obs_dim() != 1 {
        return Err(Error::Dimension(format!(
            "influence probes need a scalar observation; {} has {}",
            model.name(),
            model.obs_dim()
        )));
    }
    Ok(())
}

fn population_k_inv(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    let (_, k) = population_jk(rule, model, theta)?;
    k.try_inverse().ok_or(Error::SingularK)
}

fn if_values(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    theta: &[f64],
    k_inv: &DMatrix<f64>,
    grid: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let data = Dataset::from_column(grid);
    Ok(rule
        .per_observation_gradients(model, &data, theta)?
        .into_iter()
        .map(|s| -(k_inv * s))
        .collect())
}

/// `IF(x) = −K⁻¹ s(x, θ)` on a caller-supplied grid, `K` the population
/// value at `θ`. The sign makes `θ̂ − θ ≈ n⁻¹ Σ IF(xᵢ)`.
pub fn influence_function(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    theta: &[f64],
    x_grid: &[f64],
) -> Result<InfluenceProfile> {
    let k_inv = population_k_inv(rule, model, theta)?;
    let vals = if_values(rule, model, theta, &k_inv, x_grid)?;
    let (sup, at) = sup_of(x_grid, &vals);
    Ok(InfluenceProfile {
        grid: x_grid.to_vec(),
        values: vals.iter().map(|v| v.iter().copied().collect()).collect(),
        sup_norm: sup,
        grid_sup: sup,
        attained_at: at,
        unbounded: false,
        stage_sups: Vec::new(),
    })
}

fn sup_of(grid: &[f64], vals: &[DVector<f64>]) -> (f64, f64) {
    let mut best = (0.0, f64::NAN);
    for (x, v) in grid.iter().zip(vals) {
        let m = v.amax();
        if m > best.0 || m.is_nan() {
            best = (m, *x);
        }
    }
    best
}

/// Influence function on the widening grid around the model's center,
/// with a refined neighborhood of the center and an unboundedness flag.
pub fn influence_probe(
    rule: &ScoringRule,
    model: &dyn ParametricModel,
    theta: &[f64],
) -> Result<InfluenceProfile> {
    let k_inv = population_k_inv(rule, model, theta)?;
    let (c, s) = model.response_location(&[0.0], theta);
    let positive = model.support() == Support::Positive;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    let mut stage_sups = Vec::new();
    let mut best = (0.0, c);
    // mode neighborhood, ten times finer than the first stage
    let fine: Vec<f64> = if positive {
        linspace(0.5f64.ln(), 2f64.ln(), SEGMENT_POINTS)
            .map(|l| s * l.exp())
            .collect()
    } else {
        linspace(c - s, c + s, (SEGMENT_POINTS - 1) / 2 + 1).collect()
    };
    for k in 0..=STAGES.len() {
        let pts: Vec<f64> = match k {
            0 => fine.clone(),
            _ if positive => positive_stage(k - 1).into_iter().map(|u| s * u).collect(),
            _ => real_stage(k - 1).into_iter().map(|u| c + s * u).collect(),
        };
        let vals = if_values(rule, model, theta, &k_inv, &pts)?;
        let (m, at) = sup_of(&pts, &vals);
        if m > best.0 || m.is_nan() {
            best = (m, at);
        }
        if k > 0 {
            stage_sups.push(best.0);
        }
        grid.extend(pts);
        values.extend(vals.iter().map(|v| v.iter().copied().collect::<Vec<_>>()));
    }
    let unbounded = grows(&stage_sups);
    Ok(InfluenceProfile {
        grid,
        values,
        sup_norm: if unbounded { f64::INFINITY } else { best.0 },
        grid_sup: best.0,
        attained_at: best.1,
        unbounded,
        stage_sups,
    })
}

/// Runs a probe of `ln|g(u)|` over staged grids.
fn probe(stage: impl Fn(usize) -> Vec<f64>, ln_abs: impl Fn(f64) -> f64) -> Verdict {
    let mut sups = Vec::new();
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for k in 0..STAGES.len() {
        for u in stage(k) {
            let l = ln_abs(u);
            if l > best.0 || l.is_nan() {
                best = (if l.is_nan() { f64::INFINITY } else { l }, u);
            }
        }
        sups.push(best.0.exp());
    }
    Verdict::from_stages(sups, best.0.exp(), best.1)
}

/// Whether `α{f(u)} f'(u)` is bounded in `u`: bounded influence of a Bregman
/// score in the location model `f(x − θ)`.
pub fn check_bregman_location(gauge: &Gauge, f: &StdDensity) -> Verdict {
    let ln_term = |u: f64| gauge.ln_alpha(f.ln_pdf(u)) + f.ln_abs_d_pdf(u);
    if f.positive_support() {
        probe(positive_stage, ln_term)
    } else {
        probe(real_stage, ln_term)
    }
}

/// `ln|f(u) + u f'(u)|`.
fn ln_abs_scale_term(f: &StdDensity, u: f64) -> f64 {
    let [g1, _, _] = f.dlog(u);
    f.ln_pdf(u) + (1.0 + u * g1).abs().ln()
}

/// Whether `α{θ f(θx)} {f(θx) + θx f'(θx)}` is bounded in `x > 0` for
/// each `θ` in `theta_grid`: bounded influence in the scale model
/// `θ f(θx)`.
pub fn check_bregman_scale(
    gauge: &Gauge,
    f: &StdDensity,
    theta_grid: &[f64],
) -> Vec<(f64, Verdict)> {
    theta_grid
        .iter()
        .map(|&th| {
            let v = probe(positive_stage, |x| {
                let u = th * x;
                gauge.ln_alpha(th.ln() + f.ln_pdf(u)) + ln_abs_scale_term(f, u)
            });
            (th, v)
        })
        .collect()
}

/// Sufficient condition for location-scale models: `f`, `f'` and `u f'`
/// all bounded, probed over the whole real line.
pub fn check_location_scale_sufficient(f: &StdDensity) -> Verdict {
    let ln_max = |u: f64| {
        let lf = f.ln_pdf(u);
        let ld = f.ln_abs_d_pdf(u);
        lf.max(ld).max(ld + u.abs().ln())
    };
    if f.positive_support() {
        probe(positive_stage, ln_max)
    } else {
        probe(real_stage, ln_max)
    }
}

/// If `|f'| ≤ K` for a density `f` on the line, then `f ≤ 1 + 2K`.
pub fn density_bound_from_derivative(k: f64) -> f64 {
    1.0 + 2.0 * k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBoundCheck {
    pub derivative_sup: f64,
    pub density_sup: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Numeric `sup|f'|` and `sup f` on `[−50, 50]`, compared with the bound.
pub fn density_bound_probe(f: &StdDensity) -> DensityBoundCheck {
    let (lo, hi) = if f.positive_support() {
        (1e-9, 50.0)
    } else {
        (-50.0, 50.0)
    };
    let n = 200_001;
    let (mut k, mut m) = (0.0f64, 0.0f64);
    for u in linspace(lo, hi, n) {
        k = k.max(f.d_pdf(u).abs());
        m = m.max(f.pdf(u));
    }
    let bound = density_bound_from_derivative(k);
    DensityBoundCheck {
        derivative_sup: k,
        density_sup: m,
        bound,
        holds: m <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::estimate_sandwich;
    use crate::models::{sample, LocationModel, LocationScaleModel};

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn log_score_influence_is_residual() {
        let m = LocationModel::normal();
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
        let p = influence_function(&ScoringRule::Log, &m, &[0.3], &grid).unwrap();
        for (x, v) in p.grid.iter().zip(&p.values) {
            assert!((v[0] - (x - 0.3)).abs() < 1e-8);
        }
        let probe = influence_probe(&ScoringRule::Log, &m, &[0.3]).unwrap();
        assert!(probe.unbounded && probe.sup_norm.is_infinite());
    }

    #[test]
    fn tsallis_influence_is_bounded_at_unit_residual() {
        let m = LocationModel::normal();
        let rule = ScoringRule::tsallis(2.0).unwrap();
        let probe = influence_probe(&rule, &m, &[0.0]).unwrap();
        assert!(!probe.unbounded);
        assert!(
            (probe.attained_at.abs() - 1.0).abs() < 1e-3,
            "{}",
            probe.attained_at
        );
        // IF(x) = c x exp(−x²/2) with c fixed by K
        let x = 1.7;
        let i = influence_function(&rule, &m, &[0.0], &[x, 1.0]).unwrap();
        let ratio = i.values[0][0] / i.values[1][0];
        assert!((ratio - x * (-0.5 * x * x).exp() / (-0.5f64).exp()).abs() < 1e-10);
        let last = probe.stage_sups.len() - 1;
        assert!(probe.stage_sups[last] <= 1.01 * probe.stage_sups[last - 1]);
    }

    #[test]
    fn brier_gauge_bounded() {
        let m = LocationModel::normal();
        let probe =
            influence_probe(&ScoringRule::bregman(Gauge::Brier).unwrap(), &m, &[0.0]).unwrap();
        assert!(!probe.unbounded);
    }

    #[test]
    fn influence_reconstructs_sandwich() {
        let m = LocationScaleModel::normal();
        let rule = ScoringRule::tsallis(1.5).unwrap();
        let theta = [0.0, 1.0];
        let (j, k) = population_jk(&rule, &m, &theta).unwrap();
        let ki = k.clone().try_inverse().unwrap();
        let v = &ki * &j * ki.transpose();
        let d = sample(&m, &theta, 100_000, 5).unwrap();
        let inf = influence_function(&rule, &m, &theta, &d.column(0)).unwrap();
        let mut e = DMatrix::zeros(2, 2);
        for row in &inf.values {
            let r = DVector::from_column_slice(row);
            e += &r * r.transpose();
        }
        e /= 1e5;
        assert!((&e - &v).norm() / v.norm() <= 0.02, "{e} vs {v}");
        // and the empirical sandwich at θ agrees with the same V
        let s = estimate_sandwich(&rule, &m, &d, &theta).unwrap();
        let vn = &s.v * 1e5;
        assert!((&vn - &v).norm() / v.norm() <= 0.03);
    }

    #[test]
    fn location_condition_probe() {
        let t2 = check_bregman_location(&Gauge::Power { gamma: 2.0 }, &StdDensity::Normal);
        assert!(t2.bounded);
        assert!((t2.sup - 2.0 * phi(1.0)).abs() < 1e-6);
        assert!((t2.attained_at.abs() - 1.0).abs() < 1e-2);
        let log = check_bregman_location(&Gauge::Log, &StdDensity::Normal);
        assert!(!log.bounded);
        for g in [1.1, 1.25, 1.5, 3.0] {
            assert!(
                check_bregman_location(&Gauge::Power { gamma: g }, &StdDensity::Normal).bounded
            );
        }
        assert!(check_bregman_location(&Gauge::Log, &StdDensity::Cauchy).bounded);
        assert!(!check_bregman_location(&Gauge::Log, &StdDensity::Logistic)
            .stage_sups
            .is_empty());
    }

    #[test]
    fn scale_condition_probe() {
        let th = [0.5, 1.0, 3.0];
        for (_, v) in
            check_bregman_scale(&Gauge::Power { gamma: 2.0 }, &StdDensity::Exponential, &th)
        {
            assert!(v.bounded);
        }
        for (_, v) in check_bregman_scale(&Gauge::Log, &StdDensity::Exponential, &th) {
            assert!(!v.bounded);
        }
        for shape in [1.0, 2.0, 4.5] {
            let f = StdDensity::Gamma { shape };
            assert!(check_location_scale_sufficient(&f).bounded, "{shape}");
        }
        assert!(!check_location_scale_sufficient(&StdDensity::Gamma { shape: 0.5 }).bounded);
    }

    #[test]
    fn density_bound() {
        assert_eq!(density_bound_from_derivative(0.0), 1.0);
        assert_eq!(density_bound_from_derivative(10.0), 21.0);
        let n = density_bound_probe(&StdDensity::Normal);
        assert!((n.derivative_sup - phi(1.0)).abs() < 1e-6);
        assert!((n.bound - 1.4840).abs() < 1e-4);
        for f in [StdDensity::Normal, StdDensity::Logistic, StdDensity::Cauchy] {
            assert!(density_bound_probe(&f).holds);
        }
    }

    #[test]
    fn verdict_is_translation_free() {
        // Probes depend on u only, so the location model at any θ gives the same verdict.
        let a = check_bregman_location(&Gauge::Arctan, &StdDensity::Normal);
        let b = check_bregman_location(&Gauge::Arctan, &StdDensity::Normal);
        assert_eq!(a, b);
        let m = LocationModel::normal();
        let r = ScoringRule::tsallis(1.5).unwrap();
        let p0 = influence_probe(&r, &m, &[0.0]).unwrap();
        let p1 = influence_probe(&r, &m, &[5.0]).unwrap();
        assert!((p0.grid_sup - p1.grid_sup).abs() < 1e-9);
        assert!((p0.attained_at + 5.0 - p1.attained_at).abs() < 1e-9);
    }

    #[test]
    fn multivariate_models_are_rejected() {
        let m = crate::models::EquiCorrelatedNormal::new(3).unwrap();
        assert!(matches!(
            influence_probe(&ScoringRule::Log, &m, &[0.2]),
            Err(Error::Dimension(_))
        ));
    }
}
