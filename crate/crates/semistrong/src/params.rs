use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar parameters and nonlinearity exponents of the model
///
/// ```text
/// U_t = eps^-2 U_xx - eps^alpha mu U - eps^-1 U^a11 V^a12 + eps^(alpha/2) rho
/// V_t = V_xx - V + U^a21 V^a22
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub eps: f64,
    pub mu: f64,
    pub rho: f64,
    pub alpha: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::gray_scott(0.1, 1.0, 3.3, 0.25)
    }
}

impl ModelParams {
    /// Gray–Scott exponents (1, 2, 1, 2), for which theta = -1.
    pub fn gray_scott(eps: f64, mu: f64, rho: f64, alpha: f64) -> Self {
        Self {
            eps,
            mu,
            rho,
            alpha,
            a11: 1.0,
            a12: 2.0,
            a21: 1.0,
            a22: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.eps, self.mu, self.rho, self.alpha, self.a11, self.a12, self.a21, self.a22,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite entry".into()));
        }
        let checks = [
            (self.eps > 0.0, "eps must be positive"),
            (self.mu > 0.0, "mu must be positive"),
            (self.rho >= 0.0, "rho must be non-negative"),
            (self.alpha >= 0.0, "alpha must be non-negative"),
            (self.a11 >= 0.0, "a11 must be non-negative"),
            (self.a21 >= 0.0, "a21 must be non-negative"),
            (self.a12 > 1.0, "a12 must exceed 1"),
            (self.a22 > 1.0, "a22 must exceed 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParams(msg.into()));
            }
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        self.a11 - self.a12 * self.a21 / (self.a22 - 1.0)
    }

    pub fn gamma(&self) -> f64 {
        self.a11.max(self.a21)
    }

    /// Linear damping rate eps^alpha mu of the slow component.
    pub fn damping(&self) -> f64 {
        self.eps.powf(self.alpha) * self.mu
    }

    /// Source term eps^(alpha/2) rho.
    pub fn forcing(&self) -> f64 {
        self.eps.powf(0.5 * self.alpha) * self.rho
    }

    /// Homogeneous equilibrium of U with V = 0.
    pub fn far_field(&self) -> f64 {
        self.eps.powf(-0.5 * self.alpha) * self.rho / self.mu
    }

    /// Decay rate of the slow Green's function at lambda = 0.
    pub fn k0(&self) -> f64 {
        self.eps.powf(1.0 + 0.5 * self.alpha) * self.mu.sqrt()
    }

    /// Natural length eps^-(1 + alpha/2) of the slow field.
    pub fn slow_length(&self) -> f64 {
        self.eps.powf(-(1.0 + 0.5 * self.alpha))
    }

    /// Power of q multiplying the fast pulse: phi_j = q^(-a21/(a22-1)) phi0.
    pub fn amplitude_exponent(&self) -> f64 {
        -self.a21 / (self.a22 - 1.0)
    }
}
