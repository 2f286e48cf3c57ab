//! Parametric covariance families, the variance of the difference process
//! `σ_D²`, parameter gradients, and validity checks.
//!
//! Parameter sets serialize as flat key-value tables whose keys are the
//! struct field names, with a `family` key selecting the variant.

mod matern;
mod spatiotemporal;
mod wendland;

pub use matern::{matern_correlation, matern_half_integer, BivariateMatern, MaternParams};
pub use spatiotemporal::{SpatioTemporalModel, StFamily};
pub use wendland::{gw_correlation, gw_planar_mu_bound, BivariateWendland, GW_QUADRATURE_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, PivotPolicy};
use crate::randomfield::{assemble_bivariate, assemble_st, GridSpec};

/// Separable model with the oscillating `sin(h/φ)/(h/φ)` correlation for both
/// margins and `ρ` times it for the cross term. Its `σ_D²` is not monotone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveModel {
    pub sigma2: f64,
    pub phi: f64,
    pub rho_xy: f64,
}

impl WaveModel {
    pub const PARAM_NAMES: [&'static str; 3] = ["sigma2", "phi", "rho_xy"];

    pub fn correlation(&self, h: f64) -> f64 {
        let x = h / self.phi;
        if x == 0.0 {
            1.0
        } else {
            x.sin() / x
        }
    }
}

/// Bivariate spatial covariance models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceModel {
    Matern(BivariateMatern),
    Wendland(BivariateWendland),
    Wave(WaveModel),
}

impl CovarianceModel {
    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Matern(_) => "matern",
            Self::Wendland(_) => "wendland",
            Self::Wave(_) => "wave",
        }
    }

    /// Names of the continuous parameters in canonical order:
    ///
    /// * Matérn: `sigma2_x, sigma2_y, nu_x, nu_y, nu_xy, a_x, a_y, a_xy, rho_xy`
    /// * Wendland: `sigma2_x, sigma2_y, rho_xy, nu, c11, c22, c12, b11, b22, b12,
    ///   gamma11, gamma22, gamma12`
    /// * Wave: `sigma2, phi, rho_xy`
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Self::Matern(_) => &BivariateMatern::PARAM_NAMES,
            Self::Wendland(_) => &BivariateWendland::PARAM_NAMES,
            Self::Wave(_) => &WaveModel::PARAM_NAMES,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Self::Matern(m) => m.params(),
            Self::Wendland(m) => m.params(),
            Self::Wave(m) => vec![m.sigma2, m.phi, m.rho_xy],
        }
    }

    /// Same family (and `κ`) with new continuous parameters.
    pub fn with_params(&self, p: &[f64]) -> Self {
        match self {
            Self::Matern(_) => Self::Matern(BivariateMatern::from_params(p)),
            Self::Wendland(m) => Self::Wendland(BivariateWendland::from_params(p, m.kappa)),
            Self::Wave(_) => Self::Wave(WaveModel { sigma2: p[0], phi: p[1], rho_xy: p[2] }),
        }
    }

    pub fn rho_xy(&self) -> f64 {
        match self {
            Self::Matern(m) => m.rho_xy,
            Self::Wendland(m) => m.rho_xy,
            Self::Wave(m) => m.rho_xy,
        }
    }

    pub(crate) fn range_violations(&self) -> Vec<String> {
        match self {
            Self::Matern(m) => m.range_violations(),
            Self::Wendland(m) => m.range_violations(),
            Self::Wave(m) => {
                let mut v = Vec::new();
                if !(m.sigma2 > 0.0) {
                    v.push(format!("sigma2 must be > 0 (got {})", m.sigma2));
                }
                if !(m.phi > 0.0) {
                    v.push(format!("phi must be > 0 (got {})", m.phi));
                }
                if !(m.rho_xy.abs() <= 1.0) {
                    v.push(format!("|rho_xy| must be <= 1 (got {})", m.rho_xy));
                }
                v
            }
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        let v = self.range_violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    /// `(C_X(h), C_Y(h), C_XY(h))` without parameter checks.
    pub(crate) fn entries_unchecked(&self, h: f64) -> Result<(f64, f64, f64)> {
        Ok(match self {
            Self::Matern(m) => (m.cov_x(h), m.cov_y(h), m.cross(h)),
            Self::Wendland(m) => (m.cov_x(h)?, m.cov_y(h)?, m.cross(h)?),
            Self::Wave(m) => {
                let r = m.correlation(h);
                (m.sigma2 * r, m.sigma2 * r, m.rho_xy * m.sigma2 * r)
            }
        })
    }

    /// Marginal covariances and cross-covariance at distance `h`.
    pub fn entries(&self, h: f64) -> Result<(f64, f64, f64)> {
        self.check()?;
        check_lag(h)?;
        self.entries_unchecked(h)
    }

    fn sigma_d2_unchecked(&self, h: f64) -> Result<f64> {
        let (cx0, cy0, _) = self.entries_unchecked(0.0)?;
        let (_, _, cxy) = self.entries_unchecked(h)?;
        Ok(cx0 + cy0 - 2.0 * cxy)
    }
}

fn check_lag(h: f64) -> Result<()> {
    if h >= 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("distance must be finite and non-negative, got {h}")))
    }
}

/// Cross-covariance `C_XY(h)`.
pub fn cross_covariance(model: &CovarianceModel, h: f64) -> Result<f64> {
    Ok(model.entries(h)?.2)
}

/// `σ_D²(h) = C_X(0) + C_Y(0) - 2 C_XY(h)`.
///
/// Rounding-level negatives are clamped to zero; a clearly negative value
/// means the parameters do not describe a valid model.
pub fn sigma_d2_spatial(model: &CovarianceModel, h: f64) -> Result<f64> {
    model.check()?;
    check_lag(h)?;
    let (cx0, cy0, _) = model.entries_unchecked(0.0)?;
    let v = model.sigma_d2_unchecked(h)?;
    let scale = cx0 + cy0;
    if v < -1e-12 * scale {
        return Err(Error::InvalidModel(vec![format!(
            "variance of the difference is negative ({v:e}) at h = {h}"
        )]));
    }
    Ok(v.max(0.0))
}

/// `R(h, u)` of a spatiotemporal model.
pub fn st_correlation(model: &SpatioTemporalModel, h: f64, u: f64) -> Result<f64> {
    model.correlation(h, u)
}

/// `σ_D²(h, u) = 2σ²(1 - R(h, u))`.
pub fn st_sigma_d2(model: &SpatioTemporalModel, h: f64, u: f64) -> Result<f64> {
    model.sigma_d2(h, u)
}

/// Practical range of an Iacocesare model at time lag `u`.
pub fn practical_range(model: &SpatioTemporalModel, u: f64) -> Result<f64> {
    model.practical_range(u)
}

/// Outcome of [`validate_model`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidityReport {
    /// Conditions that make the model unusable.
    pub violations: Vec<String>,
    /// Conditions that could not be verified but do not block use.
    pub warnings: Vec<String>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(self.violations))
        }
    }
}

/// Pivot tolerance (relative to the largest diagonal entry) used by the
/// positive-definiteness probe.
pub const PROBE_PIVOT_TOLERANCE: f64 = 1e-10;

/// Range checks followed by an empirical positive-definiteness probe: the
/// joint covariance of both components on a 6×6 unit-spaced grid must admit
/// a symmetric factorization without jitter.
pub fn validate_model(model: &CovarianceModel) -> ValidityReport {
    let mut report = ValidityReport { violations: model.range_violations(), warnings: Vec::new() };
    if let CovarianceModel::Wendland(w) = model {
        for (entry, mu) in ["11", "22", "12"].iter().zip(w.exponents()) {
            if mu < gw_planar_mu_bound(w.kappa) {
                report.warnings.push(format!(
                    "Wendland exponent for entry {entry} ({mu}) is below kappa + 3/2; planar validity unverified"
                ));
            }
        }
    }
    if !report.is_valid() {
        return report;
    }
    let grid = GridSpec { n_s: 6, spacing: 1.0, n_t: 1 };
    match assemble_bivariate(&grid, model) {
        Ok(c) => {
            let n = 2 * grid.n_sites();
            if let Err(e) = Cholesky::factor(&c, n, PivotPolicy::Semidefinite { tolerance: PROBE_PIVOT_TOLERANCE }) {
                report.violations.push(format!("positive-definiteness probe failed: {e}"));
            }
        }
        Err(e) => report.violations.push(format!("covariance assembly failed: {e}")),
    }
    report
}

/// Range checks and factorization probe (6×6×3 grid) for a spatiotemporal
/// model.
pub fn validate_st_model(model: &SpatioTemporalModel) -> ValidityReport {
    let mut report = ValidityReport { violations: model.range_violations(), warnings: Vec::new() };
    if !report.is_valid() {
        return report;
    }
    let grid = GridSpec { n_s: 6, spacing: 1.0, n_t: 3 };
    match assemble_st(&grid, model) {
        Ok(c) => {
            if let Err(e) = Cholesky::factor(&c, grid.n_points(), PivotPolicy::Strict) {
                report.violations.push(format!("positive-definiteness probe failed: {e}"));
            }
        }
        Err(e) => report.violations.push(format!("covariance assembly failed: {e}")),
    }
    report
}

/// Relative finite-difference step for parameter gradients.
pub const GRADIENT_REL_STEP: f64 = 1e-6;
/// Absolute floor of the finite-difference step.
pub const GRADIENT_ABS_STEP: f64 = 1e-8;

fn central_gradient<F>(params: &[f64], names: &'static [&'static str], f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let step = (GRADIENT_REL_STEP * params[i].abs()).max(GRADIENT_ABS_STEP);
        p[i] = params[i] + step;
        let up = f(&p)?;
        p[i] = params[i] - step;
        let down = f(&p)?;
        p[i] = params[i];
        let g = (up - down) / (2.0 * step);
        if !g.is_finite() {
            return Err(Error::NonFiniteDerivative { index: i, name: names[i] });
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Gradient of `σ_D²(h)` with respect to the model's continuous parameters,
/// in the order of [`CovarianceModel::param_names`].
pub fn grad_sigma_d2(model: &CovarianceModel, h: f64) -> Result<Vec<f64>> {
    model.check()?;
    check_lag(h)?;
    central_gradient(&model.params(), model.param_names(), |p| model.with_params(p).sigma_d2_unchecked(h))
}

/// Gradient of `σ_D²(h, u)` with respect to the spatiotemporal parameters,
/// in the order of [`StFamily::param_names`].
pub fn grad_st_sigma_d2(model: &SpatioTemporalModel, h: f64, u: f64) -> Result<Vec<f64>> {
    model.check()?;
    check_lag(h)?;
    let family = model.family();
    central_gradient(&model.params(), family.param_names(), |p| {
        Ok(SpatioTemporalModel::from_params(family, p).sigma_d2_unchecked(h, u))
    })
}
