//! Parameters of the scaled system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scaling parameter, regime index, transport coefficients and the
/// reference state `(theta_c, I_c)` of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParameters {
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    pub mu: f64,
    pub lambda: f64,
    pub theta_c: f64,
    pub i_c: f64,
}

impl Default for ScaledParameters {
    fn default() -> Self {
        Self::new(0.1, 2.0, 0.5, 0.5, 0.0, 0.0).expect("defaults are valid")
    }
}

impl ScaledParameters {
    /// Builds a validated parameter set; `I_c` is derived as `exp(4 theta_c)`.
    pub fn new(epsilon: f64, delta: f64, kappa: f64, mu: f64, lambda: f64, theta_c: f64) -> Result<Self> {
        let p = ScaledParameters {
            epsilon,
            delta,
            kappa,
            mu,
            lambda,
            theta_c,
            i_c: (4.0 * theta_c).exp(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            errs.push(format!("epsilon must lie in (0,1], got {}", self.epsilon));
        }
        if !(0.0..=2.0).contains(&self.delta) {
            errs.push(format!("delta must lie in [0,2], got {}", self.delta));
        }
        if !(self.kappa > 0.0) {
            errs.push(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.mu > 0.0) {
            errs.push(format!("mu must be positive, got {}", self.mu));
        }
        if !(2.0 * self.mu + 3.0 * self.lambda >= 0.0) {
            errs.push(format!(
                "need 2 mu + 3 lambda >= 0, got {}",
                2.0 * self.mu + 3.0 * self.lambda
            ));
        }
        if !self.theta_c.is_finite() {
            errs.push("theta_c must be finite".into());
        }
        let ic = (4.0 * self.theta_c).exp();
        if (self.i_c - ic).abs() > 4.0 * f64::EPSILON * ic {
            errs.push(format!("I_c must equal exp(4 theta_c) = {ic}, got {}", self.i_c));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut p = *self;
        p.epsilon = epsilon;
        p.validate()?;
        Ok(p)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut p = *self;
        p.delta = delta;
        p.validate()?;
        Ok(p)
    }

    /// Radiative damping rate `1 + eps^-delta`.
    pub fn damping(&self) -> f64 {
        1.0 + self.epsilon.powf(-self.delta)
    }

    /// Coefficient `eps + eps^(1-delta)` of `I1.u` in the pressure equation.
    pub fn pressure_work_coeff(&self) -> f64 {
        self.epsilon + self.epsilon.powf(1.0 - self.delta)
    }

    /// Coefficient `eps^2 + eps^(2-delta)` of `I1.u` in the temperature equation.
    pub fn temperature_work_coeff(&self) -> f64 {
        self.epsilon * self.epsilon + self.epsilon.powf(2.0 - self.delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_energy_follows_temperature() {
        let p = ScaledParameters::new(0.1, 2.0, 1.0, 1.0, 0.0, 0.25).unwrap();
        assert_eq!(p.i_c, 1.0_f64.exp());
        let p0 = ScaledParameters::new(0.1, 2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(p0.i_c, 1.0);
    }

    #[test]
    fn viscosity_condition_enforced() {
        assert!(ScaledParameters::new(0.1, 2.0, 1.0, 1.0, -0.6, 0.0).is_ok());
        assert!(ScaledParameters::new(0.1, 2.0, 1.0, 1.0, -0.7, 0.0).is_err());
        assert!(ScaledParameters::new(0.1, 2.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn work_coefficient_at_unit_scaling() {
        let p = ScaledParameters::new(1.0, 1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(p.temperature_work_coeff(), 2.0);
        let q = ScaledParameters::new(0.5, 2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(q.damping(), 5.0);
    }
}
