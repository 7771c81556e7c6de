//! Alpha-fair throughput utilities with an optional linear energy penalty.
//!
//! A source with total rate `x` and energy rate `e` scores
//! `U(x) - gamma * e`, where `U` is the alpha-fair family
//! `w * log(x)` (alpha = 1) or `w * x^(1 - alpha) / (1 - alpha)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("utility argument must be positive, got {0}")]
    Domain(f64),
    #[error("energy rate must be nonnegative, got {0}")]
    NegativeEnergy(f64),
    #[error("invalid utility spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub alpha: f64,
    pub weight: f64,
    #[serde(default)]
    pub energy_weight: f64,
}

impl Default for UtilitySpec {
    fn default() -> Self {
        Self::proportional_fair()
    }
}

impl UtilitySpec {
    pub fn new(alpha: f64, weight: f64, energy_weight: f64) -> Result<Self, UtilityError> {
        let spec = Self { alpha, weight, energy_weight };
        spec.validate()?;
        Ok(spec)
    }

    /// `log(x)` with unit weight and no energy term.
    pub const fn proportional_fair() -> Self {
        Self { alpha: 1.0, weight: 1.0, energy_weight: 0.0 }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_energy_weight(mut self, energy_weight: f64) -> Self {
        self.energy_weight = energy_weight;
        self
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(UtilityError::InvalidSpec(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(UtilityError::InvalidSpec(format!("weight must be > 0, got {}", self.weight)));
        }
        if !(self.energy_weight.is_finite() && self.energy_weight >= 0.0) {
            return Err(UtilityError::InvalidSpec(format!(
                "energy weight must be >= 0, got {}",
                self.energy_weight
            )));
        }
        Ok(())
    }

    fn is_log(&self) -> bool {
        self.alpha == 1.0
    }

    pub fn value(&self, x: f64) -> Result<f64, UtilityError> {
        check_rate(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn energy_value(&self, x: f64, e: f64) -> Result<f64, UtilityError> {
        check_rate(x)?;
        if !(e >= 0.0) {
            return Err(UtilityError::NegativeEnergy(e));
        }
        Ok(self.value_unchecked(x) - self.energy_weight * e)
    }

    pub fn gradient(&self, x: f64) -> Result<f64, UtilityError> {
        check_rate(x)?;
        Ok(self.gradient_unchecked(x))
    }

    /// Second derivative, `-alpha * w * x^(-alpha - 1)`.
    pub fn curvature(&self, x: f64) -> Result<f64, UtilityError> {
        check_rate(x)?;
        Ok(-self.alpha * self.weight * x.powf(-self.alpha - 1.0))
    }

    /// Value without the domain check. Returns `-inf` at `x = 0` when
    /// `alpha >= 1`, which solvers rely on to reject boundary steps.
    pub(crate) fn value_unchecked(&self, x: f64) -> f64 {
        if self.is_log() {
            self.weight * x.ln()
        } else {
            let p = 1.0 - self.alpha;
            self.weight * x.powf(p) / p
        }
    }

    pub(crate) fn gradient_unchecked(&self, x: f64) -> f64 {
        if self.is_log() {
            self.weight / x
        } else {
            self.weight * x.powf(-self.alpha)
        }
    }
}

fn check_rate(x: f64) -> Result<(), UtilityError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(UtilityError::Domain(x))
    }
}
