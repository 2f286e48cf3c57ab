use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_bessel_k_scaled, ln_gamma};

/// Matérn correlation `M(h; ν, a) = 2^{1-ν}/Γ(ν) (ah)^ν K_ν(ah)`.
///
/// Defined as 1 at `h = 0` by continuity.
pub fn matern_correlation(h: f64, nu: f64, a: f64) -> Result<f64> {
    check_matern(h, nu, a)?;
    Ok(matern_unchecked(h, nu, a))
}

fn check_matern(h: f64, nu: f64, a: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Domain(format!("Matérn smoothness must be positive, got {nu}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("Matérn decay must be positive, got {a}")));
    }
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("distance must be non-negative, got {h}")));
    }
    Ok(())
}

pub(crate) fn matern_unchecked(h: f64, nu: f64, a: f64) -> f64 {
    let x = a * h;
    if x == 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let ln_m = (1.0 - nu) * LN_2 - ln_gamma(nu) + nu * x.ln() + ln_bessel_k_scaled(nu, x) - x;
    ln_m.exp().min(1.0)
}

/// Closed form of the Matérn correlation at `ν = m + 1/2`:
/// `exp(-ah) Σ_k (m+k)!/(2m)! C(m,k) (2ah)^{m-k}`.
pub fn matern_half_integer(h: f64, m: u32, a: f64) -> Result<f64> {
    check_matern(h, m as f64 + 0.5, a)?;
    let x = a * h;
    // Coefficients of (2x)^{m-k}; built from the k = m term (equal to 1)
    // downwards via the ratio of consecutive terms.
    let m = m as usize;
    let mut coeffs = vec![0.0; m + 1];
    coeffs[m] = 1.0;
    for k in (0..m).rev() {
        // c_k / c_{k+1} = (m+k)!/(m+k+1)! * C(m,k)/C(m,k+1)
        //              = 1/(m+k+1) * (k+1)/(m-k)
        coeffs[k] = coeffs[k + 1] * (k + 1) as f64 / ((m + k + 1) as f64 * (m - k) as f64);
    }
    // Horner in y = 2x over powers m-k, i.e. highest power first at k = 0.
    let y = 2.0 * x;
    let poly = coeffs.iter().fold(0.0, |acc, &c| acc * y + c);
    Ok((-x).exp() * poly)
}

/// Univariate Matérn covariance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub nu: f64,
    pub a: f64,
}

impl MaternParams {
    pub fn covariance(&self, h: f64) -> Result<f64> {
        Ok(self.sigma2 * matern_correlation(h, self.nu, self.a)?)
    }
}

/// Bivariate Matérn model: marginal covariances `σ² M(h; ν, a)` for each
/// component and cross-covariance `ρ σ_X σ_Y M(h; ν_XY, a_XY)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateMatern {
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub nu_x: f64,
    pub nu_y: f64,
    pub nu_xy: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub a_xy: f64,
    pub rho_xy: f64,
}

impl BivariateMatern {
    /// Canonical parameter ordering used by gradients and `V_θ`.
    pub const PARAM_NAMES: [&'static str; 9] = [
        "sigma2_x", "sigma2_y", "nu_x", "nu_y", "nu_xy", "a_x", "a_y", "a_xy", "rho_xy",
    ];

    /// Same smoothness and decay for both margins and the cross term.
    pub fn isotropic(sigma2_x: f64, sigma2_y: f64, nu: f64, a: f64, rho_xy: f64) -> Self {
        Self {
            sigma2_x,
            sigma2_y,
            nu_x: nu,
            nu_y: nu,
            nu_xy: nu,
            a_x: a,
            a_y: a,
            a_xy: a,
            rho_xy,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        vec![
            self.sigma2_x, self.sigma2_y, self.nu_x, self.nu_y, self.nu_xy, self.a_x, self.a_y,
            self.a_xy, self.rho_xy,
        ]
    }

    pub fn from_params(p: &[f64]) -> Self {
        Self {
            sigma2_x: p[0],
            sigma2_y: p[1],
            nu_x: p[2],
            nu_y: p[3],
            nu_xy: p[4],
            a_x: p[5],
            a_y: p[6],
            a_xy: p[7],
            rho_xy: p[8],
        }
    }

    pub(crate) fn range_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, value) in [("sigma2_x", self.sigma2_x), ("sigma2_y", self.sigma2_y)] {
            if !(value > 0.0) {
                v.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        for (name, value) in [("nu_x", self.nu_x), ("nu_y", self.nu_y), ("nu_xy", self.nu_xy)] {
            if !(value > 0.0) {
                v.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        for (name, value) in [("a_x", self.a_x), ("a_y", self.a_y), ("a_xy", self.a_xy)] {
            if !(value > 0.0) {
                v.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        if !(self.rho_xy.abs() <= 1.0) {
            v.push(format!("|rho_xy| must be <= 1 (got {})", self.rho_xy));
        }
        v
    }

    pub fn cov_x(&self, h: f64) -> f64 {
        self.sigma2_x * matern_unchecked(h, self.nu_x, self.a_x)
    }

    pub fn cov_y(&self, h: f64) -> f64 {
        self.sigma2_y * matern_unchecked(h, self.nu_y, self.a_y)
    }

    pub fn cross(&self, h: f64) -> f64 {
        self.rho_xy * (self.sigma2_x * self.sigma2_y).sqrt() * matern_unchecked(h, self.nu_xy, self.a_xy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_lag_is_one() {
        assert_eq!(matern_correlation(0.0, 0.7, 3.2).unwrap(), 1.0);
        for m in 0..6 {
            assert_eq!(matern_half_integer(0.0, m, 1.7).unwrap(), 1.0);
        }
    }

    #[test]
    fn exponential_special_case() {
        assert_relative_eq!(matern_correlation(1.0, 0.5, 1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(matern_correlation(1.0, 0.5, 1.0).unwrap(), 0.367_879_4, epsilon = 1e-7);
        for &h in &[0.1, 1.0, 4.0] {
            assert_relative_eq!(matern_half_integer(h, 0, 2.0).unwrap(), (-2.0 * h).exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn hand_expanded_coefficients() {
        // m = 1: (1 + x) e^{-x}
        assert_relative_eq!(matern_correlation(2.0, 1.5, 1.0).unwrap(), 3.0 * (-2.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(matern_correlation(2.0, 1.5, 1.0).unwrap(), 0.406_005_8, epsilon = 1e-7);
        // m = 2: e^{-1} (1 + 1 + 1/3)
        let expected = (-1.0f64).exp() * (1.0 + 1.0 + 1.0 / 3.0);
        assert_relative_eq!(matern_half_integer(1.0, 2, 1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.858_385_4, epsilon = 1e-7);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(matern_correlation(1.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(matern_correlation(1.0, 1.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(matern_half_integer(1.0, 1, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn half_integer_matches_bessel_form() {
        for m in 0..=5u32 {
            for &a in &[0.5, 1.0, 2.0] {
                let mut h = 0.01;
                while h <= 50.0 {
                    let closed = matern_half_integer(h, m, a).unwrap();
                    let general = matern_correlation(h, m as f64 + 0.5, a).unwrap();
                    assert_relative_eq!(closed, general, max_relative = 1e-10);
                    h *= 1.21;
                }
            }
        }
    }
}
