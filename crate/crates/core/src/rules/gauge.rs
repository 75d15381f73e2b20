//! Bregman gauges `α = ψ''` and the defining functions they determine.
//!
//! Normalization: `ψ(0) = 0` wherever the limit exists, so that
//! `∫ [ψ(q) − q ψ'(q)]` converges over unbounded sample spaces.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::integrate;

type GaugeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Gauge {
    /// `α(t) = 1/t`, the log score.
    Log,
    /// `α(t) = γ(γ−1) t^{γ−2}`, the Tsallis score.
    Power { gamma: f64 },
    /// `α(t) = 2`, the quadratic (Brier) score.
    Brier,
    /// `α(t) = 2/(1+t²)`.
    Arctan,
    /// `α(t) = 1/(1+t)`.
    LogOnePlus,
    /// User-supplied gauge; ψ is rebuilt by quadrature.
    Custom { name: String, alpha: GaugeFn },
}

impl fmt::Debug for Gauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gauge::Log => write!(f, "Log"),
            Gauge::Power { gamma } => write!(f, "Power({gamma})"),
            Gauge::Brier => write!(f, "Brier"),
            Gauge::Arctan => write!(f, "Arctan"),
            Gauge::LogOnePlus => write!(f, "LogOnePlus"),
            Gauge::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

const PSI_TOL: f64 = 1e-8;

impl Gauge {
    pub fn custom(
        name: impl Into<String>,
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Gauge::Custom {
            name: name.into(),
            alpha: Arc::new(alpha),
        }
    }

    pub fn tsallis(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Tsallis gamma must exceed 1, got {gamma}"
            )));
        }
        Ok(Gauge::Power { gamma })
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match self {
            Gauge::Log => 1.0 / t,
            Gauge::Power { gamma } => gamma * (gamma - 1.0) * t.powf(gamma - 2.0),
            Gauge::Brier => 2.0,
            Gauge::Arctan => 2.0 / (1.0 + t * t),
            Gauge::LogOnePlus => 1.0 / (1.0 + t),
            Gauge::Custom { alpha, .. } => alpha(t),
        }
    }

    /// `ln α(t)` given `ln t`; finite when `t` itself underflows.
    pub fn ln_alpha(&self, ln_t: f64) -> f64 {
        match self {
            Gauge::Log => -ln_t,
            Gauge::Power { gamma } => (gamma * (gamma - 1.0)).ln() + (gamma - 2.0) * ln_t,
            Gauge::Brier => 2f64.ln(),
            _ => self.alpha(ln_t.exp()).ln(),
        }
    }

    pub fn checked_alpha(&self, t: f64) -> Result<f64> {
        let a = self.alpha(t);
        if a < 0.0 || a.is_nan() {
            return Err(Error::GaugeNegative { t, value: a });
        }
        Ok(a)
    }

    /// `ψ'(t)`.
    pub fn psi_prime(&self, t: f64) -> Result<f64> {
        Ok(match self {
            Gauge::Log => t.ln() + 1.0,
            Gauge::Power { gamma } => gamma * t.powf(gamma - 1.0),
            Gauge::Brier => 2.0 * t,
            Gauge::Arctan => 2.0 * t.atan(),
            Gauge::LogOnePlus => t.ln_1p() + 1.0,
            Gauge::Custom { .. } => {
                self.checked_alpha(t)?;
                let v = integrate(|u| self.alpha(u), 1.0f64.min(t), 1.0f64.max(t), PSI_TOL)?;
                if t < 1.0 {
                    -v
                } else {
                    v
                }
            }
        })
    }

    /// `ψ(t)` with `ψ(0) = 0`.
    pub fn psi(&self, t: f64) -> Result<f64> {
        Ok(match self {
            Gauge::Log => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln()
                }
            }
            Gauge::Power { gamma } => t.powf(*gamma),
            Gauge::Brier => t * t,
            Gauge::Arctan => 2.0 * t * t.atan() - t.mul_add(t, 1.0).ln(),
            Gauge::LogOnePlus => (1.0 + t) * t.ln_1p(),
            Gauge::Custom { .. } => {
                let mut err = None;
                let v = integrate(
                    |u| match self.psi_prime(u) {
                        Ok(v) => v,
                        Err(e) => {
                            err = Some(e);
                            0.0
                        }
                    },
                    0.0,
                    t,
                    PSI_TOL,
                )?;
                if let Some(e) = err {
                    return Err(e);
                }
                v
            }
        })
    }

    /// `ψ(t) − t ψ'(t) = −∫₀ᵗ s α(s) ds`.
    pub fn psi_minus_tangent(&self, t: f64) -> Result<f64> {
        match self {
            Gauge::Custom { .. } => {
                self.checked_alpha(t)?;
                Ok(-integrate(|u| u * self.alpha(u), 0.0, t, PSI_TOL)?)
            }
            _ => Ok(self.psi(t)? - t * self.psi_prime(t)?),
        }
    }

    pub fn name(&self) -> String {
        format!("{self:?}")
    }
}
