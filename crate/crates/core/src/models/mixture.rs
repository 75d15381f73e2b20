use rand::Rng;

use super::{sample_with, ParametricModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Anything that can draw indexed observations.
pub trait DataGenerator: Send + Sync {
    fn obs_dim(&self) -> usize;

    fn draw(&self, index: usize, rng: &mut SimRng) -> Vec<f64>;

    fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        sample_with(self, n, seed)
    }
}

/// A model frozen at one parameter value.
#[derive(Debug, Clone, Copy)]
pub struct ModelAt<'a> {
    pub model: &'a dyn ParametricModel,
    pub theta: &'a [f64],
}

impl<'a> ModelAt<'a> {
    pub fn new(model: &'a dyn ParametricModel, theta: &'a [f64]) -> Self {
        Self { model, theta }
    }
}

impl DataGenerator for ModelAt<'_> {
    fn obs_dim(&self) -> usize {
        self.model.obs_dim()
    }

    fn draw(&self, index: usize, rng: &mut SimRng) -> Vec<f64> {
        self.model.sample_one(self.theta, index, rng)
    }
}

/// `(1 − ε) P_core + ε P_contaminant`. Each observation first draws its
/// contamination indicator, then the selected component.
#[derive(Debug)]
pub struct ContaminationMixture<'a> {
    core: ModelAt<'a>,
    contaminant: ModelAt<'a>,
    epsilon: f64,
}

impl<'a> ContaminationMixture<'a> {
    pub fn new(core: ModelAt<'a>, contaminant: ModelAt<'a>, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "epsilon {epsilon} not in [0, 1)"
            )));
        }
        if core.model.obs_dim() != contaminant.model.obs_dim() {
            return Err(Error::Dimension(
                "mixture components disagree on row width".into(),
            ));
        }
        core.model.check_theta(core.theta)?;
        contaminant.model.check_theta(contaminant.theta)?;
        Ok(Self {
            core,
            contaminant,
            epsilon,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Like `sample`, also returning the contamination indicators.
    pub fn sample_labelled(&self, n: usize, seed: u64) -> Result<(Dataset, Vec<bool>)> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "sample size must be at least 1".into(),
            ));
        }
        let mut rng = crate::rng::seed_rng(seed);
        let mut values = Vec::with_capacity(n * self.obs_dim());
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let (row, c) = self.draw_labelled(i, &mut rng);
            values.extend(row);
            labels.push(c);
        }
        Ok((Dataset::new(self.obs_dim(), values)?, labels))
    }

    fn draw_labelled(&self, index: usize, rng: &mut SimRng) -> (Vec<f64>, bool) {
        let u: f64 = rng.random();
        if u < self.epsilon {
            (self.contaminant.draw(index, rng), true)
        } else {
            (self.core.draw(index, rng), false)
        }
    }
}

impl DataGenerator for ContaminationMixture<'_> {
    fn obs_dim(&self) -> usize {
        self.core.obs_dim()
    }

    fn draw(&self, index: usize, rng: &mut SimRng) -> Vec<f64> {
        self.draw_labelled(index, rng).0
    }
}
