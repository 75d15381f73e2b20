#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use scorerule::models::{
    table3_design, EquiCorrelatedNormal, LinearRegressionModel, LocationModel, LocationScaleModel,
    ParametricModel, StdDensity,
};
use scorerule::rng::{seed_rng, SimRng};
use scorerule::rules::Gauge;
use scorerule::ScoringRule;

pub type ThetaDraw = fn(&mut SimRng) -> Vec<f64>;

/// A model family, a rule on it, a true parameter and a way to draw
/// parameters at random from the interior of the domain.
pub struct Pair {
    pub name: String,
    pub model: Box<dyn ParametricModel>,
    pub rule: ScoringRule,
    pub theta: Vec<f64>,
    pub draw_theta: ThetaDraw,
}

fn scalar_rules() -> Vec<ScoringRule> {
    vec![
        ScoringRule::Log,
        ScoringRule::Brier,
        ScoringRule::tsallis(2.0).unwrap(),
        ScoringRule::tsallis(1.5).unwrap(),
        ScoringRule::tsallis(1.25).unwrap(),
        ScoringRule::Hyvarinen,
        ScoringRule::bregman(Gauge::Arctan).unwrap(),
        ScoringRule::bregman(Gauge::LogOnePlus).unwrap(),
    ]
}

fn loc(r: &mut SimRng) -> Vec<f64> {
    vec![r.random_range(-2.0..2.0)]
}

fn loc_scale(r: &mut SimRng) -> Vec<f64> {
    vec![r.random_range(-2.0..2.0), r.random_range(0.5..2.0)]
}

fn rho(r: &mut SimRng) -> Vec<f64> {
    vec![r.random_range(-0.05..0.9)]
}

fn beta(r: &mut SimRng) -> Vec<f64> {
    (0..3).map(|_| r.random_range(-3.0..3.0)).collect()
}

/// Regression with a design of `n` rows laid out as in the regression
/// experiment.
pub fn regression(n: usize, seed: u64) -> LinearRegressionModel {
    LinearRegressionModel::new(3, 1.0)
        .unwrap()
        .with_design(table3_design(n, &mut seed_rng(seed)))
        .unwrap()
}

/// Every rule/model combination the library ships. Regression models carry
/// a design of `design_rows` rows for sampling.
pub fn pairs(design_rows: usize) -> Vec<Pair> {
    let mut out = Vec::new();
    for d in [StdDensity::Normal, StdDensity::Logistic, StdDensity::Cauchy] {
        for rule in scalar_rules() {
            out.push(Pair {
                name: format!("location({}) {}", d.name(), rule.name()),
                model: Box::new(LocationModel::new(d, 1.0).unwrap()),
                rule: rule.clone(),
                theta: vec![0.3],
                draw_theta: loc,
            });
            out.push(Pair {
                name: format!("location-scale({}) {}", d.name(), rule.name()),
                model: Box::new(LocationScaleModel::new(d).unwrap()),
                rule,
                theta: vec![0.3, 1.5],
                draw_theta: loc_scale,
            });
        }
    }
    let q = 10;
    let pairwise = |r: ScoringRule| ScoringRule::pairwise_equicorrelated(q, r).unwrap();
    for (label, rule) in [
        ("log", ScoringRule::Log),
        ("tsallis(2)", ScoringRule::tsallis(2.0).unwrap()),
        ("tsallis(1.5)", ScoringRule::tsallis(1.5).unwrap()),
        ("tsallis(1.25)", ScoringRule::tsallis(1.25).unwrap()),
        ("hyvarinen", ScoringRule::Hyvarinen),
        ("pairwise log", pairwise(ScoringRule::Log)),
        (
            "pairwise tsallis(1.5)",
            pairwise(ScoringRule::tsallis(1.5).unwrap()),
        ),
    ] {
        out.push(Pair {
            name: format!("equicorrelated(q={q}) {label}"),
            model: Box::new(EquiCorrelatedNormal::new(q).unwrap()),
            rule,
            theta: vec![0.5],
            draw_theta: rho,
        });
    }
    for rule in [
        ScoringRule::Log,
        ScoringRule::Brier,
        ScoringRule::tsallis(2.0).unwrap(),
        ScoringRule::tsallis(1.5).unwrap(),
        ScoringRule::tsallis(1.25).unwrap(),
        ScoringRule::Hyvarinen,
        ScoringRule::bregman(Gauge::Arctan).unwrap(),
    ] {
        out.push(Pair {
            name: format!("regression(p=3) {}", rule.name()),
            model: Box::new(regression(design_rows, 11)),
            rule,
            theta: vec![1.0, 2.0, 3.0],
            draw_theta: beta,
        });
    }
    out
}

/// Largest absolute entry of `a − b` over the larger of 1 and the largest
/// absolute entry of `b`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Five-point central difference of a vector field; column `j` holds
/// `∂g/∂θ_j`. The smaller step and O(h⁴) error keep the reference accurate
/// when the field varies on a scale much shorter than one unit of θ.
pub fn jacobian5<F>(g: F, theta: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let p = theta.len();
    let m = g(theta).len();
    let mut out = DMatrix::zeros(m, p);
    let mut t = theta.to_vec();
    for j in 0..p {
        let h = 1e-5 * (1.0 + theta[j].abs());
        let mut at = |k: f64| {
            t[j] = theta[j] + k * h;
            let v = g(&t);
            t[j] = theta[j];
            v
        };
        let col = (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h);
        out.set_column(j, &col);
    }
    out
}
