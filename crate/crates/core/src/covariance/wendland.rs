use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{beta, ln_beta};

/// Absolute tolerance of the quadrature used for `κ ≥ 1`.
pub const GW_QUADRATURE_TOL: f64 = 1e-10;

/// Generalized Wendland correlation `GW(h; κ, μ)` on the normalized distance.
///
/// `κ = 0` is the closed form `(1 - h²)^μ`; for `κ ≥ 1` the beta-normalized
/// integral `∫_h^1 u (u² - h²)^{κ-1} (1 - u)^μ du / B(2κ, μ + 1)` is
/// evaluated by adaptive Gauss–Kronrod quadrature. Exactly zero for `h ≥ 1`.
pub fn gw_correlation(h: f64, kappa: u32, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("Wendland exponent mu must be positive, got {mu}")));
    }
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("distance must be non-negative, got {h}")));
    }
    gw_unchecked(h, kappa, mu)
}

pub(crate) fn gw_unchecked(h: f64, kappa: u32, mu: f64) -> Result<f64> {
    if h >= 1.0 {
        return Ok(0.0);
    }
    if kappa == 0 {
        return Ok((1.0 - h * h).powf(mu));
    }
    let norm = (-ln_beta(2.0 * kappa as f64, mu + 1.0)).exp();
    let k1 = (kappa - 1) as i32;
    let integrand = |u: f64| norm * u * (u * u - h * h).max(0.0).powi(k1) * (1.0 - u).max(0.0).powf(mu);
    let v = quadrature::integrate(integrand, h, 1.0, GW_QUADRATURE_TOL)?;
    Ok(v.clamp(0.0, 1.0))
}

/// Smallest `μ` for which `GW(·; κ, μ)` is known to be positive definite in
/// the plane (`μ ≥ κ + 3/2`). Used only for warnings.
pub fn gw_planar_mu_bound(kappa: u32) -> f64 {
    kappa as f64 + 1.5
}

/// Bivariate Generalized Wendland model. Each entry has the form
/// `s · c_ij b_ij^{ν+2κ+1} B(ν+2κ-1, γ_ij+1) GW(h/b_ij; κ, ν+γ_ij+1)`
/// with `s = σ_X²`, `σ_Y²` or `ρ σ_X σ_Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateWendland {
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub rho_xy: f64,
    pub nu: f64,
    pub kappa: u32,
    pub c11: f64,
    pub c22: f64,
    pub c12: f64,
    pub b11: f64,
    pub b22: f64,
    pub b12: f64,
    pub gamma11: f64,
    pub gamma22: f64,
    pub gamma12: f64,
}

impl BivariateWendland {
    /// Canonical parameter ordering; `kappa` is discrete and excluded.
    pub const PARAM_NAMES: [&'static str; 13] = [
        "sigma2_x", "sigma2_y", "rho_xy", "nu", "c11", "c22", "c12", "b11", "b22", "b12", "gamma11",
        "gamma22", "gamma12",
    ];

    /// Build a model whose `c_ij` are chosen so every scale prefactor equals
    /// one, making `C_X(0) = σ_X²`, `C_Y(0) = σ_Y²`, `C_XY(0) = ρ σ_X σ_Y`.
    #[allow(clippy::too_many_arguments)]
    pub fn normalized(
        sigma2_x: f64,
        sigma2_y: f64,
        rho_xy: f64,
        nu: f64,
        kappa: u32,
        scales: [f64; 3],
        gammas: [f64; 3],
    ) -> Self {
        let c = |b: f64, g: f64| 1.0 / (b.powf(nu + 2.0 * kappa as f64 + 1.0) * beta(nu + 2.0 * kappa as f64 - 1.0, g + 1.0));
        Self {
            sigma2_x,
            sigma2_y,
            rho_xy,
            nu,
            kappa,
            c11: c(scales[0], gammas[0]),
            c22: c(scales[1], gammas[1]),
            c12: c(scales[2], gammas[2]),
            b11: scales[0],
            b22: scales[1],
            b12: scales[2],
            gamma11: gammas[0],
            gamma22: gammas[1],
            gamma12: gammas[2],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        vec![
            self.sigma2_x, self.sigma2_y, self.rho_xy, self.nu, self.c11, self.c22, self.c12, self.b11,
            self.b22, self.b12, self.gamma11, self.gamma22, self.gamma12,
        ]
    }

    pub fn from_params(p: &[f64], kappa: u32) -> Self {
        Self {
            sigma2_x: p[0],
            sigma2_y: p[1],
            rho_xy: p[2],
            nu: p[3],
            kappa,
            c11: p[4],
            c22: p[5],
            c12: p[6],
            b11: p[7],
            b22: p[8],
            b12: p[9],
            gamma11: p[10],
            gamma22: p[11],
            gamma12: p[12],
        }
    }

    pub(crate) fn range_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, value) in [("sigma2_x", self.sigma2_x), ("sigma2_y", self.sigma2_y)] {
            if !(value > 0.0) {
                v.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        if !(self.rho_xy.abs() <= 1.0) {
            v.push(format!("|rho_xy| must be <= 1 (got {})", self.rho_xy));
        }
        for (name, value) in [("b11", self.b11), ("b22", self.b22), ("b12", self.b12)] {
            if !(value > 0.0) {
                v.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        for (name, value) in [("c11", self.c11), ("c22", self.c22)] {
            if !(value > 0.0) {
                v.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        if !(self.c12 >= 0.0) {
            v.push(format!("c12 must be >= 0 (got {})", self.c12));
        }
        let beta_arg = self.nu + 2.0 * self.kappa as f64 - 1.0;
        if !(beta_arg > 0.0) {
            v.push(format!("nu + 2*kappa - 1 must be > 0 (got {beta_arg})"));
        }
        for (name, g) in [("gamma11", self.gamma11), ("gamma22", self.gamma22), ("gamma12", self.gamma12)] {
            if !(g > -1.0) {
                v.push(format!("{name} must be > -1 (got {g})"));
            }
            if !(self.nu + g + 1.0 > 0.0) {
                v.push(format!("nu + {name} + 1 must be > 0"));
            }
        }
        v
    }

    /// `μ` exponents passed to `GW` for the (11, 22, 12) entries.
    pub fn exponents(&self) -> [f64; 3] {
        [self.nu + self.gamma11 + 1.0, self.nu + self.gamma22 + 1.0, self.nu + self.gamma12 + 1.0]
    }

    fn entry(&self, scale: f64, c: f64, b: f64, gamma: f64, h: f64) -> Result<f64> {
        let k = self.kappa as f64;
        let prefactor = c * b.powf(self.nu + 2.0 * k + 1.0) * beta(self.nu + 2.0 * k - 1.0, gamma + 1.0);
        Ok(scale * prefactor * gw_unchecked(h / b, self.kappa, self.nu + gamma + 1.0)?)
    }

    pub fn cov_x(&self, h: f64) -> Result<f64> {
        self.entry(self.sigma2_x, self.c11, self.b11, self.gamma11, h)
    }

    pub fn cov_y(&self, h: f64) -> Result<f64> {
        self.entry(self.sigma2_y, self.c22, self.b22, self.gamma22, h)
    }

    pub fn cross(&self, h: f64) -> Result<f64> {
        let s = self.rho_xy * (self.sigma2_x * self.sigma2_y).sqrt();
        self.entry(s, self.c12, self.b12, self.gamma12, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson rule with a million panels on the raw integral.
    fn simpson_oracle(h: f64, kappa: u32, mu: f64) -> f64 {
        let n = 1_000_000usize;
        let step = (1.0 - h) / n as f64;
        let f = |u: f64| u * (u * u - h * h).powi(kappa as i32 - 1) * (1.0 - u).powf(mu);
        let mut s = f(h) + f(1.0);
        for i in 1..n {
            let u = h + i as f64 * step;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        // B(2, 5) = Γ(2)Γ(5)/Γ(7) = 24/720
        let b = match (kappa, mu as u32) {
            (1, 4) => 24.0 / 720.0,
            _ => unreachable!(),
        };
        s * step / 3.0 / b
    }

    #[test]
    fn closed_form_kappa_zero() {
        assert_relative_eq!(gw_correlation(0.5, 0, 2.0).unwrap(), 0.5625, epsilon = 1e-15);
    }

    #[test]
    fn compact_support() {
        assert_eq!(gw_correlation(1.2, 3, 5.0).unwrap(), 0.0);
        assert_eq!(gw_correlation(1.0, 0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_at_origin() {
        for kappa in 0..5 {
            assert_relative_eq!(gw_correlation(0.0, kappa, kappa as f64 + 2.0).unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn quadrature_matches_simpson_oracle() {
        let oracle = simpson_oracle(0.3, 1, 4.0);
        // Frozen from the oracle: κ = 1 has the closed form
        // (1-h)^{μ+1}(1 + (μ+1)h) for μ = 4, i.e. 0.7^5 * 2.5.
        assert_relative_eq!(oracle, 0.7f64.powi(5) * 2.5, max_relative = 1e-10);
        assert_relative_eq!(gw_correlation(0.3, 1, 4.0).unwrap(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn invalid_mu() {
        assert!(matches!(gw_correlation(0.2, 1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(gw_correlation(0.2, 1, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn normalized_prefactors() {
        let m = BivariateWendland::normalized(2.0, 3.0, 0.5, 1.5, 1, [1.0, 2.0, 1.5], [0.5, 0.5, 0.5]);
        assert_relative_eq!(m.cov_x(0.0).unwrap(), 2.0, max_relative = 1e-9);
        assert_relative_eq!(m.cov_y(0.0).unwrap(), 3.0, max_relative = 1e-9);
        assert_relative_eq!(m.cross(0.0).unwrap(), 0.5 * 6f64.sqrt(), max_relative = 1e-9);
        assert_eq!(m.cross(1.5).unwrap(), 0.0);
    }
}
