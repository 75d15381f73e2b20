//! Standardized univariate densities with their log-derivatives.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum StdDensity {
    Normal,
    Logistic,
    Cauchy,
    Exponential,
    /// Gamma with unit rate.
    Gamma {
        shape: f64,
    },
    LogNormal,
}

impl StdDensity {
    pub fn name(&self) -> String {
        match self {
            StdDensity::Normal => "normal".into(),
            StdDensity::Logistic => "logistic".into(),
            StdDensity::Cauchy => "cauchy".into(),
            StdDensity::Exponential => "exponential".into(),
            StdDensity::Gamma { shape } => format!("gamma({shape})"),
            StdDensity::LogNormal => "lognormal".into(),
        }
    }

    pub fn positive_support(&self) -> bool {
        matches!(
            self,
            StdDensity::Exponential | StdDensity::Gamma { .. } | StdDensity::LogNormal
        )
    }

    pub fn ln_pdf(&self, u: f64) -> f64 {
        if self.positive_support() && u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            StdDensity::Normal => -0.5 * u * u - LN_SQRT_2PI,
            StdDensity::Logistic => {
                let a = -u.abs();
                a - 2.0 * a.exp().ln_1p()
            }
            StdDensity::Cauchy => -(PI.ln()) - u.mul_add(u, 1.0).ln(),
            StdDensity::Exponential => -u,
            StdDensity::Gamma { shape } => {
                (shape - 1.0) * u.ln() - u - statrs::function::gamma::ln_gamma(shape)
            }
            StdDensity::LogNormal => {
                let l = u.ln();
                -l - 0.5 * l * l - LN_SQRT_2PI
            }
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        self.ln_pdf(u).exp()
    }

    /// First three derivatives of `ln f` at `u`.
    pub fn dlog(&self, u: f64) -> [f64; 3] {
        match *self {
            StdDensity::Normal => [-u, -1.0, 0.0],
            StdDensity::Logistic => {
                let t = (0.5 * u).tanh();
                let sech2 = 1.0 - t * t;
                [-t, -0.5 * sech2, 0.5 * sech2 * t]
            }
            StdDensity::Cauchy => {
                let d = 1.0 + u * u;
                [
                    -2.0 * u / d,
                    -2.0 * (1.0 - u * u) / (d * d),
                    4.0 * u * (3.0 - u * u) / (d * d * d),
                ]
            }
            StdDensity::Exponential => [-1.0, 0.0, 0.0],
            StdDensity::Gamma { shape } => {
                let k = shape - 1.0;
                [k / u - 1.0, -k / (u * u), 2.0 * k / (u * u * u)]
            }
            StdDensity::LogNormal => {
                let l = u.ln();
                let u2 = u * u;
                [-(1.0 + l) / u, l / u2, (1.0 - 2.0 * l) / (u2 * u)]
            }
        }
    }

    /// `f'(u)`.
    pub fn d_pdf(&self, u: f64) -> f64 {
        self.pdf(u) * self.dlog(u)[0]
    }

    /// `ln |f'(u)|`, finite even where `f` underflows.
    pub fn ln_abs_d_pdf(&self, u: f64) -> f64 {
        self.ln_pdf(u) + self.dlog(u)[0].abs().ln()
    }

    /// Closed form of `∫ f^gamma`, where one is known.
    pub fn power_integral(&self, gamma: f64) -> Option<f64> {
        match self {
            StdDensity::Normal => Some(gamma.powf(-0.5) * (2.0 * PI).powf(-(gamma - 1.0) / 2.0)),
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            StdDensity::Normal => StandardNormal.sample(rng),
            StdDensity::Logistic => {
                let u: f64 = open01(rng);
                (u / (1.0 - u)).ln()
            }
            StdDensity::Cauchy => {
                let u: f64 = open01(rng);
                (PI * (u - 0.5)).tan()
            }
            StdDensity::Exponential => -open01(rng).ln(),
            StdDensity::Gamma { shape } => rand_distr::Gamma::new(shape, 1.0)
                .expect("positive shape")
                .sample(rng),
            StdDensity::LogNormal => {
                let z: f64 = StandardNormal.sample(rng);
                z.exp()
            }
        }
    }
}

fn open01(rng: &mut SimRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
