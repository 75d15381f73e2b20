//! Browser bindings for three small interactive views: influence curves of
//! the log and Tsallis scores, fits to a contaminated normal sample, and
//! quantiles of a weighted sum of χ²₁ variables.
//!
//! The exported functions take plain numbers and return JSON strings; the
//! typed versions below them are what the tests exercise.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use scorerule::estimate::fit;
use scorerule::infer::{estimate_sandwich, mixture_chisq_quantile};
use scorerule::models::{
    ContaminationMixture, LocationModel, LocationScaleModel, ModelAt, StdDensity,
};
use scorerule::robust::influence_function;
use scorerule::{Error, Result, ScoringRule};

#[derive(Debug, Clone, Serialize)]
pub struct Curves {
    pub x: Vec<f64>,
    pub log: Vec<f64>,
    pub tsallis: Vec<f64>,
}

/// Influence functions of the location estimate in the standard normal
/// location model, on `points` evenly spaced values in `[-half_width,
/// half_width]`.
pub fn influence_curves(gamma: f64, half_width: f64, points: usize) -> Result<Curves> {
    if points < 2 || !half_width.is_finite() || half_width <= 0.0 {
        return Err(Error::InvalidArgument(
            "need at least two points on a positive range".into(),
        ));
    }
    let m = LocationModel::new(StdDensity::Normal, 1.0)?;
    let step = 2.0 * half_width / (points - 1) as f64;
    let x: Vec<f64> = (0..points).map(|i| -half_width + i as f64 * step).collect();
    let first = |rule: &ScoringRule| -> Result<Vec<f64>> {
        let p = influence_function(rule, &m, &[0.0], &x)?;
        Ok(p.values.iter().map(|v| v[0]).collect())
    };
    Ok(Curves {
        log: first(&ScoringRule::Log)?,
        tsallis: first(&ScoringRule::tsallis(gamma)?)?,
        x,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleFit {
    pub rule: String,
    pub mu: f64,
    pub sigma: f64,
    pub se_mu: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub data: Vec<f64>,
    pub outlier: Vec<bool>,
    pub fits: Vec<RuleFit>,
}

/// Draws `n` points from `(1 − ε) N(0, 1) + ε N(0, scale²)` and fits a
/// normal location-scale model with the log score and a Tsallis score.
pub fn contaminated_fits(
    n: usize,
    epsilon: f64,
    scale: f64,
    gamma: f64,
    seed: u64,
) -> Result<Comparison> {
    let m = LocationScaleModel::normal();
    let (core, wide) = ([0.0, 1.0], [0.0, scale]);
    let mix = ContaminationMixture::new(ModelAt::new(&m, &core), ModelAt::new(&m, &wide), epsilon)?;
    let (data, outlier) = mix.sample_labelled(n, seed)?;
    let mut fits = Vec::new();
    for rule in [ScoringRule::Log, ScoringRule::tsallis(gamma)?] {
        let f = fit(&rule, &m, &data, None)?;
        let sw = estimate_sandwich(&rule, &m, &data, &f.theta_hat)?;
        fits.push(RuleFit {
            rule: rule.name(),
            mu: f.theta_hat[0],
            sigma: f.theta_hat[1],
            se_mu: sw.v[(0, 0)].sqrt(),
        });
    }
    Ok(Comparison {
        data: data.column(0),
        outlier,
        fits,
    })
}

/// Quantile of `Σ wⱼ Zⱼ²` for weights given as a comma-separated list.
pub fn mixture_quantile(weights: &str, prob: f64) -> Result<f64> {
    let w = weights
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    mixture_chisq_quantile(&w, prob)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())))
}

#[wasm_bindgen(js_name = influenceCurves)]
pub fn influence_curves_js(
    gamma: f64,
    half_width: f64,
    points: usize,
) -> std::result::Result<String, JsValue> {
    to_js(influence_curves(gamma, half_width, points))
}

#[wasm_bindgen(js_name = contaminatedFits)]
pub fn contaminated_fits_js(
    n: usize,
    epsilon: f64,
    scale: f64,
    gamma: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(contaminated_fits(n, epsilon, scale, gamma, seed as u64))
}

#[wasm_bindgen(js_name = mixtureQuantile)]
pub fn mixture_quantile_js(weights: &str, prob: f64) -> std::result::Result<f64, JsValue> {
    mixture_quantile(weights, prob).map_err(|e| JsValue::from_str(&e.to_string()))
}
