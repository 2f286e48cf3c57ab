use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary spatiotemporal covariance families `C(h, u) = σ² R(h, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpatioTemporalModel {
    /// `R(h, u) = exp(-h/φ_s) exp(-|u|/φ_t)`
    ExponentialSeparable { sigma2: f64, phi_s: f64, phi_t: f64 },
    /// `R(h, u) = (1 + (h/φ_s)^{α_s} + (|u|/φ_t)^{α_t})^{-β}`
    Iacocesare {
        sigma2: f64,
        phi_s: f64,
        phi_t: f64,
        alpha_s: f64,
        alpha_t: f64,
        beta_exp: f64,
    },
}

/// Family tag without parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StFamily {
    ExponentialSeparable,
    Iacocesare,
}

impl StFamily {
    pub fn name(&self) -> &'static str {
        match self {
            StFamily::ExponentialSeparable => "exponential_separable",
            StFamily::Iacocesare => "iacocesare",
        }
    }

    /// Canonical parameter ordering for gradients and `V_θ`.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            StFamily::ExponentialSeparable => &["phi_s", "phi_t", "sigma2"],
            StFamily::Iacocesare => &["phi_s", "phi_t", "sigma2", "alpha_s", "alpha_t", "beta_exp"],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }
}

impl std::str::FromStr for StFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential_separable" | "exponential" => Ok(StFamily::ExponentialSeparable),
            "iacocesare" => Ok(StFamily::Iacocesare),
            other => Err(Error::Parse(format!("unknown spatiotemporal family `{other}`"))),
        }
    }
}

impl SpatioTemporalModel {
    pub fn exponential(sigma2: f64, phi_s: f64, phi_t: f64) -> Self {
        Self::ExponentialSeparable { sigma2, phi_s, phi_t }
    }

    pub fn iacocesare(sigma2: f64, phi_s: f64, phi_t: f64, alpha_s: f64, alpha_t: f64, beta_exp: f64) -> Self {
        Self::Iacocesare { sigma2, phi_s, phi_t, alpha_s, alpha_t, beta_exp }
    }

    pub fn family(&self) -> StFamily {
        match self {
            Self::ExponentialSeparable { .. } => StFamily::ExponentialSeparable,
            Self::Iacocesare { .. } => StFamily::Iacocesare,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match *self {
            Self::ExponentialSeparable { sigma2, .. } | Self::Iacocesare { sigma2, .. } => sigma2,
        }
    }

    pub fn phi_s(&self) -> f64 {
        match *self {
            Self::ExponentialSeparable { phi_s, .. } | Self::Iacocesare { phi_s, .. } => phi_s,
        }
    }

    pub fn with_sigma2(mut self, value: f64) -> Self {
        match &mut self {
            Self::ExponentialSeparable { sigma2, .. } | Self::Iacocesare { sigma2, .. } => *sigma2 = value,
        }
        self
    }

    /// Parameters in the family's canonical order.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::ExponentialSeparable { sigma2, phi_s, phi_t } => vec![phi_s, phi_t, sigma2],
            Self::Iacocesare { sigma2, phi_s, phi_t, alpha_s, alpha_t, beta_exp } => {
                vec![phi_s, phi_t, sigma2, alpha_s, alpha_t, beta_exp]
            }
        }
    }

    pub fn from_params(family: StFamily, p: &[f64]) -> Self {
        match family {
            StFamily::ExponentialSeparable => Self::exponential(p[2], p[0], p[1]),
            StFamily::Iacocesare => Self::iacocesare(p[2], p[0], p[1], p[3], p[4], p[5]),
        }
    }

    pub(crate) fn range_violations(&self) -> Vec<String> {
        let names = self.family().param_names();
        let mut v = Vec::new();
        for (name, value) in names.iter().zip(self.params()) {
            if !(value > 0.0 && value.is_finite()) {
                v.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        if let Self::Iacocesare { alpha_s, alpha_t, .. } = *self {
            for (name, value) in [("alpha_s", alpha_s), ("alpha_t", alpha_t)] {
                if value > 2.0 {
                    v.push(format!("{name} must be <= 2 (got {value})"));
                }
            }
        }
        v
    }

    pub(crate) fn check(&self) -> Result<()> {
        let v = self.range_violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    /// Correlation without parameter checks.
    #[inline]
    pub fn correlation_unchecked(&self, h: f64, u: f64) -> f64 {
        let u = u.abs();
        match *self {
            Self::ExponentialSeparable { phi_s, phi_t, .. } => (-h / phi_s - u / phi_t).exp(),
            Self::Iacocesare { phi_s, phi_t, alpha_s, alpha_t, beta_exp, .. } => {
                (1.0 + (h / phi_s).powf(alpha_s) + (u / phi_t).powf(alpha_t)).powf(-beta_exp)
            }
        }
    }

    /// `R(h, u)`.
    pub fn correlation(&self, h: f64, u: f64) -> Result<f64> {
        self.check()?;
        if !(h >= 0.0) || !u.is_finite() {
            return Err(Error::Domain(format!("invalid lag (h = {h}, u = {u})")));
        }
        Ok(self.correlation_unchecked(h, u))
    }

    /// `C(h, u) = σ² R(h, u)`.
    pub fn covariance(&self, h: f64, u: f64) -> Result<f64> {
        Ok(self.sigma2() * self.correlation(h, u)?)
    }

    #[inline]
    pub(crate) fn sigma_d2_unchecked(&self, h: f64, u: f64) -> f64 {
        2.0 * self.sigma2() * (1.0 - self.correlation_unchecked(h, u))
    }

    /// Variance of `Y(s, t) - Y(s + h, t + u)`: `2σ²(1 - R(h, u)) = 2γ(h, u)`.
    pub fn sigma_d2(&self, h: f64, u: f64) -> Result<f64> {
        Ok(2.0 * self.sigma2() * (1.0 - self.correlation(h, u)?))
    }

    /// Spatial distance at which the correlation at time lag `u` falls to
    /// 0.05 (95% of the sill), Iacocesare family only:
    /// `φ_s (20^{1/β} - 1 - (|u|/φ_t)^{α_t})^{1/α_s}`.
    pub fn practical_range(&self, u: f64) -> Result<f64> {
        match *self {
            Self::Iacocesare { phi_s, phi_t, alpha_s, alpha_t, beta_exp, .. } => {
                self.check()?;
                let bracket = 20f64.powf(1.0 / beta_exp) - 1.0 - (u.abs() / phi_t).powf(alpha_t);
                if bracket <= 0.0 {
                    return Err(Error::ConditionViolated(format!(
                        "20^(1/beta) - 1 - (|u|/phi_t)^alpha_t = {bracket} is not positive at u = {u}"
                    )));
                }
                Ok(phi_s * bracket.powf(1.0 / alpha_s))
            }
            Self::ExponentialSeparable { .. } => {
                Err(Error::Domain("practical range formula is defined for the Iacocesare family".into()))
            }
        }
    }
}
