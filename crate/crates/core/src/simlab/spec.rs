//! Experiment descriptions. These are plain serde types so experiments can
//! live in JSON files.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::Calibration;
use crate::models::{
    EquiCorrelatedNormal, LinearRegressionModel, LocationModel, LocationScaleModel,
    ParametricModel, StdDensity,
};
use crate::rules::{Gauge, ScoringRule};

use super::huber::HUBER_C;

fn normal() -> StdDensity {
    StdDensity::Normal
}

fn one() -> f64 {
    1.0
}

fn huber_c() -> f64 {
    HUBER_C
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Location family with known scale; θ = (μ).
    Location {
        #[serde(default = "normal")]
        density: StdDensity,
        #[serde(default = "one")]
        scale: f64,
    },
    /// θ = (μ, σ).
    LocationScale {
        #[serde(default = "normal")]
        density: StdDensity,
    },
    /// q-variate normal with unit variances and common correlation; θ = (ρ).
    Equicorrelated { q: usize },
    /// Normal linear regression with known σ; θ = β. Rows are `[y, x₁..x_p]`.
    Regression {
        p: usize,
        #[serde(default = "one")]
        sigma: f64,
    },
}

impl ModelSpec {
    pub fn param_dim(&self) -> usize {
        match self {
            ModelSpec::Location { .. } | ModelSpec::Equicorrelated { .. } => 1,
            ModelSpec::LocationScale { .. } => 2,
            ModelSpec::Regression { p, .. } => *p,
        }
    }

    pub fn build(&self) -> Result<Box<dyn ParametricModel>> {
        self.build_scaled(1.0, None)
    }

    /// The model with its noise scale multiplied by `factor`, and with a
    /// design attached for regression sampling. For location-scale the
    /// factor is applied to θ instead; see [`ModelSpec::scale_theta`].
    pub fn build_scaled(
        &self,
        factor: f64,
        design: Option<DMatrix<f64>>,
    ) -> Result<Box<dyn ParametricModel>> {
        Ok(match self {
            ModelSpec::Location { density, scale } => {
                Box::new(LocationModel::new(*density, scale * factor)?)
            }
            ModelSpec::LocationScale { density } => Box::new(LocationScaleModel::new(*density)?),
            ModelSpec::Equicorrelated { q } => {
                if factor != 1.0 {
                    return Err(Error::InvalidArgument(
                        "scale contamination is not defined for the equi-correlated model".into(),
                    ));
                }
                Box::new(EquiCorrelatedNormal::new(*q)?)
            }
            ModelSpec::Regression { p, sigma } => {
                let m = LinearRegressionModel::new(*p, sigma * factor)?;
                match design {
                    Some(d) => Box::new(m.with_design(d)?),
                    None => Box::new(m),
                }
            }
        })
    }

    pub fn scale_theta(&self, theta: &[f64], factor: f64) -> Vec<f64> {
        let mut t = theta.to_vec();
        if let ModelSpec::LocationScale { .. } = self {
            t[1] *= factor;
        }
        t
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Location { density, .. } => format!("location({})", density.name()),
            ModelSpec::LocationScale { density } => format!("location-scale({})", density.name()),
            ModelSpec::Equicorrelated { q } => format!("equicorrelated(q={q})"),
            ModelSpec::Regression { p, .. } => format!("regression(p={p})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeSpec {
    Log,
    Brier,
    Arctan,
    LogOnePlus,
    Power { gamma: f64 },
}

impl GaugeSpec {
    pub fn build(&self) -> Result<Gauge> {
        Ok(match self {
            GaugeSpec::Log => Gauge::Log,
            GaugeSpec::Brier => Gauge::Brier,
            GaugeSpec::Arctan => Gauge::Arctan,
            GaugeSpec::LogOnePlus => Gauge::LogOnePlus,
            GaugeSpec::Power { gamma } => Gauge::tsallis(*gamma)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum RuleSpec {
    Log,
    Brier,
    Tsallis {
        gamma: f64,
    },
    Hyvarinen,
    Bregman {
        gauge: GaugeSpec,
    },
    /// Pairwise log-likelihood of the equi-correlated model.
    PairwiseLog,
    PairwiseTsallis {
        gamma: f64,
    },
    /// Huber M-estimator; only Wald rows are available.
    Huber {
        #[serde(default = "huber_c")]
        c: f64,
    },
}

/// A rule ready to run.
#[derive(Debug, Clone)]
pub enum BuiltRule {
    Score(ScoringRule),
    Huber(f64),
}

impl RuleSpec {
    /// Looks a rule up by its command-line name.
    pub fn from_name(name: &str, gamma: Option<f64>) -> Result<Self> {
        let need = |g: Option<f64>| {
            g.ok_or_else(|| Error::InvalidArgument(format!("rule {name} needs --gamma")))
        };
        let rule = match name {
            "log" => RuleSpec::Log,
            "brier" => RuleSpec::Brier,
            "tsallis" => RuleSpec::Tsallis {
                gamma: need(gamma)?,
            },
            "hyvarinen" => RuleSpec::Hyvarinen,
            "pairwise-log" | "pairwise_log" => RuleSpec::PairwiseLog,
            "pairwise-tsallis" | "pairwise_tsallis" => RuleSpec::PairwiseTsallis {
                gamma: need(gamma)?,
            },
            "huber" => RuleSpec::Huber { c: HUBER_C },
            "bregman-arctan" => RuleSpec::Bregman {
                gauge: GaugeSpec::Arctan,
            },
            "bregman-log1p" => RuleSpec::Bregman {
                gauge: GaugeSpec::LogOnePlus,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown rule {name}"))),
        };
        if gamma.is_some() && !rule.takes_gamma() {
            return Err(Error::InvalidArgument(format!(
                "rule {name} takes no gamma"
            )));
        }
        Ok(rule)
    }

    fn takes_gamma(&self) -> bool {
        matches!(
            self,
            RuleSpec::Tsallis { .. } | RuleSpec::PairwiseTsallis { .. }
        )
    }

    pub fn key(&self) -> String {
        match self {
            RuleSpec::Log => "log".into(),
            RuleSpec::Brier => "brier".into(),
            RuleSpec::Tsallis { gamma } => format!("tsallis({gamma})"),
            RuleSpec::Hyvarinen => "hyvarinen".into(),
            RuleSpec::Bregman { gauge } => format!("bregman({:?})", gauge),
            RuleSpec::PairwiseLog => "pairwise_log".into(),
            RuleSpec::PairwiseTsallis { gamma } => format!("pairwise_tsallis({gamma})"),
            RuleSpec::Huber { c } => format!("huber({c})"),
        }
    }

    pub fn build(&self, model: &ModelSpec) -> Result<BuiltRule> {
        let pairwise_q = || match model {
            ModelSpec::Equicorrelated { q } => Ok(*q),
            _ => Err(Error::InvalidArgument(
                "pairwise rules need the equi-correlated model".into(),
            )),
        };
        Ok(BuiltRule::Score(match self {
            RuleSpec::Log => ScoringRule::Log,
            RuleSpec::Brier => ScoringRule::Brier,
            RuleSpec::Tsallis { gamma } => ScoringRule::tsallis(*gamma)?,
            RuleSpec::Hyvarinen => ScoringRule::Hyvarinen,
            RuleSpec::Bregman { gauge } => ScoringRule::bregman(gauge.build()?)?,
            RuleSpec::PairwiseLog => {
                ScoringRule::pairwise_equicorrelated(pairwise_q()?, ScoringRule::Log)?
            }
            RuleSpec::PairwiseTsallis { gamma } => {
                ScoringRule::pairwise_equicorrelated(pairwise_q()?, ScoringRule::tsallis(*gamma)?)?
            }
            RuleSpec::Huber { c } => {
                if !(*c > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "Huber constant must be positive, got {c}"
                    )));
                }
                match model {
                    ModelSpec::LocationScale { .. } | ModelSpec::Regression { .. } => {
                        return Ok(BuiltRule::Huber(*c))
                    }
                    _ => {
                        return Err(Error::InvalidArgument(
                            "Huber rows need the location-scale or regression model".into(),
                        ))
                    }
                }
            }
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStat {
    /// Classical likelihood ratio `2{S(θ0) − S(θ̂)}` against χ²_p.
    Lr,
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

impl SimStat {
    pub fn is_profile(&self) -> bool {
        matches!(
            self,
            SimStat::ProfileWald
                | SimStat::ProfileScore
                | SimStat::ProfileRatio
                | SimStat::ProfileRatioM1
                | SimStat::ProfileRatioInv
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimStat::Lr => "lr",
            SimStat::Wald => "wald",
            SimStat::Score => "score",
            SimStat::Ratio => "ratio",
            SimStat::RatioAdj => "ratio_adj",
            SimStat::RatioM1 => "ratio_m1",
            SimStat::RatioInv => "ratio_inv",
            SimStat::ProfileWald => "profile_wald",
            SimStat::ProfileScore => "profile_score",
            SimStat::ProfileRatio => "profile_ratio",
            SimStat::ProfileRatioM1 => "profile_ratio_m1",
            SimStat::ProfileRatioInv => "profile_ratio_inv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub rule: RuleSpec,
    pub statistic: SimStat,
    /// Interest coordinates for profile statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<usize>>,
    /// Overrides the experiment-wide calibration for this row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl RowSpec {
    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}[{}]", self.statistic.name(), self.rule.key()))
    }
}

/// `(1 − ε) P_θ + ε P_θ'`, where θ' inflates the noise scale by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub epsilon: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<Contamination>,
}

impl LawSpec {
    pub fn clean() -> Self {
        Self {
            key: "clean".into(),
            contamination: None,
        }
    }
}

fn default_laws() -> Vec<LawSpec> {
    vec![LawSpec::clean()]
}

fn default_levels() -> Vec<f64> {
    vec![0.90, 0.95, 0.99]
}

fn default_reps() -> usize {
    2000
}

fn default_seed() -> u64 {
    42
}

fn default_failure_rate() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: ModelSpec,
    /// True parameter; every statistic is evaluated here.
    pub theta: Vec<f64>,
    #[serde(default = "default_laws")]
    pub laws: Vec<LawSpec>,
    pub sample_sizes: Vec<usize>,
    pub rows: Vec<RowSpec>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.replications < 100 {
            return bad(format!(
                "replications must be at least 100, got {}",
                self.replications
            ));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return bad(format!("levels must lie in (0, 1), got {:?}", self.levels));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return bad(format!(
                "sample sizes must be at least 2, got {:?}",
                self.sample_sizes
            ));
        }
        if self.rows.is_empty() || self.laws.is_empty() {
            return bad("an experiment needs at least one row and one law".into());
        }
        if !(0.0..1.0).contains(&self.max_failure_rate) {
            return bad(format!(
                "max_failure_rate {} not in [0, 1)",
                self.max_failure_rate
            ));
        }
        let p = self.model.param_dim();
        if self.theta.len() != p {
            return Err(Error::Dimension(format!(
                "theta has {} coordinates, model has {p}",
                self.theta.len()
            )));
        }
        if let ModelSpec::Regression { p, .. } = self.model {
            if p != 3 {
                return bad(format!(
                    "regression experiments use the three-column design, got p={p}"
                ));
            }
        }
        self.model.build()?.check_theta(&self.theta)?;
        for law in &self.laws {
            if let Some(c) = law.contamination {
                if !(0.0..1.0).contains(&c.epsilon) || !(c.scale > 0.0) {
                    return bad(format!(
                        "law {}: need 0 <= epsilon < 1 and scale > 0",
                        law.key
                    ));
                }
                self.model.build_scaled(c.scale, None)?;
            }
        }
        for row in &self.rows {
            let label = row.label();
            let built = row.rule.build(&self.model)?;
            if matches!(built, BuiltRule::Huber(_)) && row.statistic != SimStat::Wald {
                return bad(format!(
                    "row {label}: the Huber estimator only has a Wald statistic"
                ));
            }
            if row.statistic == SimStat::RatioAdj && p != 1 {
                return Err(Error::NotScalarParam(p));
            }
            match (&row.psi, row.statistic.is_profile()) {
                (None, true) => return bad(format!("row {label}: profile statistics need psi")),
                (Some(_), false) => {
                    return bad(format!(
                        "row {label}: psi only applies to profile statistics"
                    ))
                }
                (Some(psi), true) => {
                    crate::estimate::partition_mask(p, psi)?;
                }
                (None, false) => {}
            }
        }
        Ok(())
    }
}
