use std::fmt;
use std::sync::Arc;

use super::{ScoreEval, ScoringRule};
use crate::error::{Error, Result};
use crate::models::ParametricModel;

/// One term of a composite score: a marginal variable (a coordinate
/// selection), the model it follows, and the rule that scores it. The
/// component model shares the joint parameter vector.
#[derive(Clone)]
pub struct Component {
    pub coords: Vec<usize>,
    pub model: Arc<dyn ParametricModel>,
    pub rule: ScoringRule,
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@{:?} ~ {}",
            self.rule.name(),
            self.coords,
            self.model.name()
        )
    }
}

impl Component {
    pub fn marginal(
        coords: Vec<usize>,
        model: Arc<dyn ParametricModel>,
        rule: ScoringRule,
    ) -> Self {
        Self {
            coords,
            model,
            rule,
        }
    }

    fn extract(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.coords
            .iter()
            .map(|&c| {
                x.get(c).copied().ok_or_else(|| {
                    Error::Dimension(format!("coordinate {c} outside row of width {}", x.len()))
                })
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64], theta: &[f64], with_hessian: bool) -> Result<ScoreEval> {
        let sub = self.extract(x)?;
        self.rule
            .eval(self.model.as_ref(), &sub, theta, with_hessian)
    }

    pub fn value(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        let sub = self.extract(x)?;
        self.rule.value(self.model.as_ref(), &sub, theta)
    }
}
