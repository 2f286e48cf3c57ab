//! Probability of agreement, its plug-in estimate with delta-method variance,
//! the approximate z-test, and curve sweeps over lags and thresholds.

use serde::{Deserialize, Serialize};

use crate::covariance::{grad_sigma_d2, grad_st_sigma_d2, sigma_d2_spatial, CovarianceModel, SpatioTemporalModel};
use crate::error::{Error, Result};
use crate::linalg::quadratic_form;
use crate::special::{normal_cdf, normal_pdf, normal_quantile, normal_sf};

/// Linear time trend `μ(t) = a0 + a1·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendCoefficients {
    pub a0: f64,
    pub a1: f64,
}

impl TrendCoefficients {
    pub fn new(a0: f64, a1: f64) -> Self {
        Self { a0, a1 }
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.a0 + self.a1 * t
    }

    /// Mean difference between values `u` time steps apart.
    pub fn mean_difference(&self, u: f64) -> f64 {
        self.a1 * u
    }
}

/// Inputs of the agreement probability: threshold `c`, mean difference and
/// standard deviation of the difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementSpec {
    pub c: f64,
    pub mu_d: f64,
    pub sigma_d: f64,
}

impl AgreementSpec {
    pub fn new(c: f64, mu_d: f64, sigma_d: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("threshold c must be positive, got {c}")));
        }
        if !(sigma_d >= 0.0) || !sigma_d.is_finite() {
            return Err(Error::Domain(format!("sigma_D must be non-negative, got {sigma_d}")));
        }
        if !mu_d.is_finite() {
            return Err(Error::Domain(format!("mu_D must be finite, got {mu_d}")));
        }
        Ok(Self { c, mu_d, sigma_d })
    }
}

/// `P(|D| ≤ c)` for `D ~ N(μ_D, σ_D²)`; with `σ_D = 0` this is `1{|μ_D| ≤ c}`.
pub fn psi(spec: &AgreementSpec) -> f64 {
    psi_raw(spec.c, spec.mu_d, spec.sigma_d)
}

fn psi_raw(c: f64, mu: f64, sigma: f64) -> f64 {
    let mu = mu.abs();
    if sigma == 0.0 {
        return if mu <= c { 1.0 } else { 0.0 };
    }
    let hi = (c - mu) / sigma;
    let lo = -(c + mu) / sigma;
    // Difference of upper tails keeps precision when both arguments are large.
    let v = if lo > 0.0 { normal_sf(lo) - normal_sf(hi) } else { normal_cdf(hi) - normal_cdf(lo) };
    v.clamp(0.0, 1.0)
}

/// Agreement between `X(s)` and `Y(s + h)` for a bivariate spatial model.
pub fn psi_spatial(model: &CovarianceModel, mu_d: f64, c: f64, h: f64) -> Result<f64> {
    let s2 = sigma_d2_spatial(model, h)?;
    Ok(psi(&AgreementSpec::new(c, mu_d, s2.sqrt())?))
}

/// Agreement between `Y(s, t)` and `Y(s + h, t + u)` under a linear trend.
pub fn psi_spatiotemporal(
    model: &SpatioTemporalModel,
    trend: &TrendCoefficients,
    c: f64,
    h: f64,
    u: f64,
) -> Result<f64> {
    let s2 = model.sigma_d2(h, u)?;
    Ok(psi(&AgreementSpec::new(c, trend.mean_difference(u), s2.sqrt())?))
}

/// Delta-method variance of `σ̂_D` from the gradient of `σ_D²` and the
/// parameter covariance `V_θ` (row-major, matching the gradient ordering).
pub fn var_sigma_d_hat(grad_sigma_d2: &[f64], v_theta: &[f64], sigma_d2: f64) -> Result<f64> {
    let p = grad_sigma_d2.len();
    if v_theta.len() != p * p {
        return Err(Error::DimensionMismatch(format!(
            "V_theta has {} entries, expected {p}x{p}",
            v_theta.len()
        )));
    }
    if !(sigma_d2 > 0.0) {
        return Err(Error::Degenerate("sigma_D^2 is zero".into()));
    }
    Ok((quadratic_form(grad_sigma_d2, v_theta) / (4.0 * sigma_d2)).max(0.0))
}

/// [`var_sigma_d_hat`] for a bivariate spatial model at lag `h`.
pub fn var_sigma_d_hat_spatial(model: &CovarianceModel, h: f64, v_theta: &[f64]) -> Result<f64> {
    let g = grad_sigma_d2(model, h)?;
    var_sigma_d_hat(&g, v_theta, sigma_d2_spatial(model, h)?)
}

/// [`var_sigma_d_hat`] for a spatiotemporal model at lags `(h, u)`.
pub fn var_sigma_d_hat_st(model: &SpatioTemporalModel, h: f64, u: f64, v_theta: &[f64]) -> Result<f64> {
    let g = grad_st_sigma_d2(model, h, u)?;
    var_sigma_d_hat(&g, v_theta, model.sigma_d2(h, u)?)
}

/// Partial derivatives `(∂ψ/∂μ_D, ∂ψ/∂σ_D)`.
pub fn psi_partials(spec: &AgreementSpec) -> Result<(f64, f64)> {
    let AgreementSpec { c, mu_d, sigma_d } = *spec;
    if sigma_d == 0.0 {
        return Err(Error::Degenerate("psi is not differentiable at sigma_D = 0".into()));
    }
    let z1 = (c - mu_d) / sigma_d;
    let z2 = -(c + mu_d) / sigma_d;
    let (p1, p2) = (normal_pdf(z1), normal_pdf(z2));
    Ok(((p2 - p1) / sigma_d, (z2 * p2 - z1 * p1) / sigma_d))
}

/// Plug-in agreement probability with two delta-method variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaEstimate {
    pub psi: f64,
    /// First-order delta method with exact partials of `ψ`; used for inference.
    pub variance: f64,
    /// The closed-form approximation `(2/π)·exp{-(c-μ)²/σ²}·[V_μ + (c-μ)²/σ²·V_σ]`.
    pub variance_closed_form: f64,
    pub c: f64,
    pub h: f64,
    pub u: f64,
    pub mu_d: f64,
    pub sigma_d: f64,
    pub var_mu_d: f64,
    pub var_sigma_d: f64,
    /// `μ̂_D` and `θ̂` are treated as independent, so their contributions add.
    pub assumes_independence: bool,
}

impl PaEstimate {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Two-sided Wald interval clamped to `[0, 1]`.
    pub fn confidence_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")));
        }
        let half = normal_quantile(0.5 + level / 2.0) * self.sd();
        Ok(((self.psi - half).max(0.0), (self.psi + half).min(1.0)))
    }
}

/// Assemble a [`PaEstimate`] from `(μ_D, σ_D)` and their variances.
pub fn pa_estimate_from_moments(
    spec: &AgreementSpec,
    var_mu_d: f64,
    var_sigma_d: f64,
    h: f64,
    u: f64,
) -> Result<PaEstimate> {
    if !(var_mu_d >= 0.0) || !(var_sigma_d >= 0.0) {
        return Err(Error::Domain("variances must be non-negative".into()));
    }
    let (dmu, dsigma) = psi_partials(spec)?;
    let AgreementSpec { c, mu_d, sigma_d } = *spec;
    let r2 = ((c - mu_d) / sigma_d).powi(2);
    let closed = 2.0 / std::f64::consts::PI * (-r2).exp() * (var_mu_d + r2 * var_sigma_d);
    Ok(PaEstimate {
        psi: psi(spec),
        variance: dmu * dmu * var_mu_d + dsigma * dsigma * var_sigma_d,
        variance_closed_form: closed,
        c,
        h,
        u,
        mu_d,
        sigma_d,
        var_mu_d,
        var_sigma_d,
        assumes_independence: true,
    })
}

/// Model whose agreement probability is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PaModel {
    /// Bivariate spatial model with a constant mean difference.
    Spatial { model: CovarianceModel, mu_d: f64 },
    /// Spatiotemporal model with linear trend; `μ_D = a1·u`.
    SpatioTemporal { model: SpatioTemporalModel, trend: TrendCoefficients },
}

/// Estimation uncertainty feeding the delta method.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterUncertainty {
    /// Covariance of the covariance-model parameters in canonical order.
    pub v_theta: Vec<f64>,
    /// Variance of `μ̂_D` for spatial models, or of `â1` for spatiotemporal
    /// models (scaled by `u²`).
    pub v_mean: f64,
}

impl PaModel {
    pub fn sigma_d2(&self, h: f64, u: f64) -> Result<f64> {
        match self {
            Self::Spatial { model, .. } => sigma_d2_spatial(model, h),
            Self::SpatioTemporal { model, .. } => model.sigma_d2(h, u),
        }
    }

    pub fn mu_d(&self, u: f64) -> f64 {
        match self {
            Self::Spatial { mu_d, .. } => *mu_d,
            Self::SpatioTemporal { trend, .. } => trend.mean_difference(u),
        }
    }

    pub fn psi(&self, c: f64, h: f64, u: f64) -> Result<f64> {
        Ok(psi(&AgreementSpec::new(c, self.mu_d(u), self.sigma_d2(h, u)?.sqrt())?))
    }

    /// Plug-in estimate with delta-method variances at `(h, u)`.
    pub fn estimate(&self, c: f64, h: f64, u: f64, unc: &ParameterUncertainty) -> Result<PaEstimate> {
        let s2 = self.sigma_d2(h, u)?;
        let spec = AgreementSpec::new(c, self.mu_d(u), s2.sqrt())?;
        let (var_sigma, var_mu) = match self {
            Self::Spatial { model, .. } => (var_sigma_d_hat_spatial(model, h, &unc.v_theta)?, unc.v_mean),
            Self::SpatioTemporal { model, .. } => {
                (var_sigma_d_hat_st(model, h, u, &unc.v_theta)?, u * u * unc.v_mean)
            }
        };
        pa_estimate_from_moments(&spec, var_mu, var_sigma, h, u)
    }
}

/// Plug-in estimate for a spatial model.
pub fn pa_estimate_spatial(
    model: &CovarianceModel,
    mu_d: f64,
    c: f64,
    h: f64,
    v_theta: &[f64],
    v_mu_d: f64,
) -> Result<PaEstimate> {
    PaModel::Spatial { model: *model, mu_d }.estimate(c, h, 0.0, &ParameterUncertainty {
        v_theta: v_theta.to_vec(),
        v_mean: v_mu_d,
    })
}

/// Plug-in estimate for a spatiotemporal model; `v_a1` is the variance of
/// the slope estimate, so `V_μD = u²·v_a1`.
pub fn pa_estimate_st(
    model: &SpatioTemporalModel,
    trend: &TrendCoefficients,
    c: f64,
    h: f64,
    u: f64,
    v_theta: &[f64],
    v_a1: f64,
) -> Result<PaEstimate> {
    PaModel::SpatioTemporal { model: *model, trend: *trend }.estimate(c, h, u, &ParameterUncertainty {
        v_theta: v_theta.to_vec(),
        v_mean: v_a1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Less,
    Greater,
}

impl Alternative {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TwoSided => "two_sided",
            Self::Less => "less",
            Self::Greater => "greater",
        }
    }
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "two_sided" => Ok(Self::TwoSided),
            "less" => Ok(Self::Less),
            "greater" => Ok(Self::Greater),
            _ => Err(Error::Parse(format!("unknown alternative `{s}`"))),
        }
    }
}

pub const MONOTONE_REMARK: &str =
    "when sigma_D^2(h) is non-decreasing in h, rejecting at h = 0 in favour of lower agreement also rejects at every h";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaTestResult {
    pub psi_hat: f64,
    pub psi0: f64,
    pub sd: f64,
    pub z: f64,
    pub p_value: f64,
    pub alternative: Alternative,
}

impl PaTestResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Wald test of `H0: ψ = ψ0` using the estimate's primary variance.
pub fn pa_test(estimate: &PaEstimate, psi0: f64, alternative: Alternative) -> Result<PaTestResult> {
    z_test(estimate.psi, estimate.variance, psi0, alternative)
}

/// Wald test from a point estimate and its variance.
pub fn z_test(psi_hat: f64, variance: f64, psi0: f64, alternative: Alternative) -> Result<PaTestResult> {
    if !(0.0..=1.0).contains(&psi0) {
        return Err(Error::Domain(format!("null value must lie in [0, 1], got {psi0}")));
    }
    if !(variance > 0.0) {
        return Err(Error::Degenerate("estimate has zero variance".into()));
    }
    let sd = variance.sqrt();
    let z = (psi_hat - psi0) / sd;
    let p = match alternative {
        Alternative::TwoSided => 2.0 * normal_sf(z.abs()),
        Alternative::Less => normal_cdf(z),
        Alternative::Greater => normal_sf(z),
    };
    Ok(PaTestResult { psi_hat, psi0, sd, z, p_value: p.clamp(0.0, 1.0), alternative })
}

/// One row of an agreement curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub u: f64,
    pub c: f64,
    pub h: f64,
    pub psi: f64,
    /// Delta-method standard deviation; absent without uncertainty input or
    /// where `σ_D = 0`.
    pub sd: Option<f64>,
}

pub const CURVE_HEADER: &str = "u,c,h,psi,sd";

/// Sweep `ψ` over `u` (outer), `c`, then `h` (inner).
pub fn pa_curve(
    model: &PaModel,
    cs: &[f64],
    hs: &[f64],
    us: &[f64],
    uncertainty: Option<&ParameterUncertainty>,
) -> Result<Vec<CurveRow>> {
    if cs.is_empty() || hs.is_empty() || us.is_empty() {
        return Err(Error::Domain("curve grids must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(cs.len() * hs.len() * us.len());
    for &u in us {
        for &c in cs {
            for &h in hs {
                let psi = model.psi(c, h, u)?;
                let sd = match uncertainty {
                    Some(unc) if model.sigma_d2(h, u)? > 0.0 => Some(model.estimate(c, h, u, unc)?.sd()),
                    _ => None,
                };
                rows.push(CurveRow { u, c, h, psi, sd });
            }
        }
    }
    Ok(rows)
}

/// Render curve rows under [`CURVE_HEADER`]; a missing `sd` is left empty.
pub fn write_curve<W: std::io::Write>(rows: &[CurveRow], mut w: W) -> Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for r in rows {
        let sd = r.sd.map(|s| s.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", r.u, r.c, r.h, r.psi, sd)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{BivariateMatern, WaveModel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec(c: f64, mu: f64, s: f64) -> AgreementSpec {
        AgreementSpec::new(c, mu, s).unwrap()
    }

    #[test]
    fn central_interval() {
        assert!((psi(&spec(1.96, 0.0, 1.0)) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn wave_values() {
        assert!((psi(&spec(1.0, 0.0, 1.3633803f64.sqrt())) - 0.6082).abs() < 5e-5);
        assert!((psi(&spec(1.0, 0.0, 2.2122066f64.sqrt())) - 0.4986).abs() < 5e-5);
        let wave = CovarianceModel::Wave(WaveModel { sigma2: 1.0, phi: 1.0, rho_xy: 0.5 });
        assert!((psi_spatial(&wave, 0.0, 1.0, 2.5 * PI).unwrap() - 0.5351).abs() < 5e-5);
    }

    #[test]
    fn degenerate_sigma() {
        assert_eq!(psi(&spec(1.0, 0.5, 0.0)), 1.0);
        assert_eq!(psi(&spec(1.0, 1.0, 0.0)), 1.0);
        assert_eq!(psi(&spec(1.0, -1.5, 0.0)), 0.0);
        assert!(AgreementSpec::new(0.0, 0.0, 1.0).is_err());
        assert!(AgreementSpec::new(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn matern_chain() {
        let m = CovarianceModel::Matern(BivariateMatern {
            sigma2_x: 1.0,
            sigma2_y: 4.0,
            nu_x: 0.5,
            nu_y: 0.5,
            nu_xy: 0.5,
            a_x: 2.0,
            a_y: 2.0,
            a_xy: 2.0,
            rho_xy: 0.9,
        });
        let want = 2.0 * normal_cdf(1.0 / 1.4f64.sqrt()) - 1.0;
        assert_relative_eq!(psi_spatial(&m, 0.0, 1.0, 0.0).unwrap(), want, max_relative = 1e-14);
        assert!((want - 0.60198).abs() < 1e-5);
    }

    #[test]
    fn perfectly_correlated_identical_processes() {
        let m = CovarianceModel::Matern(BivariateMatern::isotropic(1.0, 1.0, 0.5, 1.0, 1.0));
        assert_eq!(psi_spatial(&m, 0.0, 0.1, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn classical_reduction() {
        let m = CovarianceModel::Matern(BivariateMatern::isotropic(1.0, 2.0, 1.5, 0.7, 0.0));
        let direct = psi(&spec(1.2, 0.3, 3.0f64.sqrt()));
        assert_relative_eq!(psi_spatial(&m, 0.3, 1.2, 0.0).unwrap(), direct, max_relative = 1e-14);
    }

    #[test]
    fn spatiotemporal_plugin() {
        let model = SpatioTemporalModel::exponential(0.1, 6.676, 1.0);
        let trend = TrendCoefficients::new(0.5, 0.1);
        let s = (0.2 * (1.0 - (-1.0f64).exp())).sqrt();
        let want = normal_cdf(0.4 / s) - normal_cdf(-0.6 / s);
        assert_relative_eq!(psi_spatiotemporal(&model, &trend, 0.5, 0.0, 1.0).unwrap(), want, max_relative = 1e-14);
        assert_eq!(psi_spatiotemporal(&model, &trend, 0.5, 0.0, 0.0).unwrap(), 1.0);
        let flipped = TrendCoefficients::new(0.5, -0.1);
        for u in [1.0, 2.0, 3.5] {
            assert_eq!(
                psi_spatiotemporal(&model, &trend, 0.5, 2.0, u).unwrap(),
                psi_spatiotemporal(&model, &flipped, 0.5, 2.0, u).unwrap()
            );
        }
    }

    #[test]
    fn zero_uncertainty_gives_zero_variance() {
        let model = SpatioTemporalModel::exponential(0.1, 6.676, 1.0);
        let e = pa_estimate_st(&model, &TrendCoefficients::new(0.5, 0.1), 0.5, 1.0, 1.0, &[0.0; 9], 0.0).unwrap();
        assert_eq!(e.variance, 0.0);
        assert_eq!(e.variance_closed_form, 0.0);
        assert!(e.assumes_independence);
    }

    #[test]
    fn var_sigma_d_scalar_case() {
        // σ_D² = 2σ²(1 - e^{-h/φ}) with only σ² uncertain.
        let (s2, phi, h, v) = (0.3, 2.0, 1.5, 0.01);
        let k = 2.0 * (1.0 - (-h / phi as f64).exp());
        let got = var_sigma_d_hat(&[k], &[v], k * s2).unwrap();
        assert_relative_eq!(got, k * k * v / (4.0 * k * s2), max_relative = 1e-15);
        assert!(var_sigma_d_hat(&[k], &[v], 0.0).is_err());
        assert!(var_sigma_d_hat(&[k, 1.0], &[v], 1.0).is_err());
    }

    #[test]
    fn var_sigma_d_matches_model_gradient() {
        let model = SpatioTemporalModel::exponential(0.1, 6.676, 1.0);
        let mut v = vec![0.0; 9];
        v[8] = 4e-4;
        let (h, u) = (2.0, 1.0);
        let r: f64 = (-h / 6.676f64 - u).exp();
        let want = (2.0 * (1.0 - r)).powi(2) * 4e-4 / (4.0 * 0.2 * (1.0 - r));
        assert_relative_eq!(var_sigma_d_hat_st(&model, h, u, &v).unwrap(), want, max_relative = 1e-7);
    }

    #[test]
    fn partials_match_finite_differences() {
        for &(c, mu, s) in &[(1.0, 0.0, 1.0), (0.5, 0.1, 0.3), (2.0, -0.7, 1.7), (0.3, 0.25, 0.05)] {
            let (dmu, dsigma) = psi_partials(&spec(c, mu, s)).unwrap();
            let e = 1e-6;
            let fd_mu = (psi_raw(c, mu + e, s) - psi_raw(c, mu - e, s)) / (2.0 * e);
            let fd_s = (psi_raw(c, mu, s + e) - psi_raw(c, mu, s - e)) / (2.0 * e);
            assert_relative_eq!(dmu, fd_mu, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(dsigma, fd_s, max_relative = 1e-6);
        }
    }

    #[test]
    fn closed_form_route_is_reported_separately() {
        let e = pa_estimate_from_moments(&spec(1.0, 0.2, 0.8), 0.01, 0.02, 0.0, 0.0).unwrap();
        let r2: f64 = (0.8f64 / 0.8).powi(2);
        let want = 2.0 / PI * (-r2).exp() * (0.01 + r2 * 0.02);
        assert_relative_eq!(e.variance_closed_form, want, max_relative = 1e-15);
        assert!(e.variance > 0.0 && e.variance != e.variance_closed_form);
    }

    #[test]
    fn test_examples() {
        let r = z_test(0.9, 0.02f64.powi(2), 0.95, Alternative::Less).unwrap();
        assert_relative_eq!(r.z, -2.5, max_relative = 1e-12);
        assert!((r.p_value - 0.00621).abs() < 1e-5);
        let r = z_test(0.9, 0.01, 0.9, Alternative::TwoSided).unwrap();
        assert_eq!(r.z, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(z_test(0.9, 0.0, 0.9, Alternative::Less).is_err());
        assert!(z_test(0.9, 0.01, 1.1, Alternative::Less).is_err());
        assert_eq!("two-sided".parse::<Alternative>().unwrap(), Alternative::TwoSided);
    }

    #[test]
    fn interval_contains_estimate() {
        let e = pa_estimate_from_moments(&spec(1.0, 0.0, 0.8), 0.01, 0.02, 0.0, 0.0).unwrap();
        let (lo, hi) = e.confidence_interval(0.95).unwrap();
        assert!(lo < e.psi && e.psi < hi);
        assert_relative_eq!(hi - e.psi, 1.959963984540054 * e.sd(), max_relative = 1e-9);
    }

    #[test]
    fn curve_reduces_to_point_values_and_orders_by_rho() {
        let model = SpatioTemporalModel::exponential(0.1, 6.676, 1.0);
        let trend = TrendCoefficients::new(0.5, -0.1);
        let pm = PaModel::SpatioTemporal { model, trend };
        let rows = pa_curve(&pm, &[0.5], &[3.0], &[2.0], None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].psi, psi_spatiotemporal(&model, &trend, 0.5, 3.0, 2.0).unwrap());
        assert!(pa_curve(&pm, &[0.5], &[], &[0.0], None).is_err());

        let hs: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let mut prev: Option<Vec<CurveRow>> = None;
        for rho in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let m = CovarianceModel::Matern(BivariateMatern::isotropic(1.0, 1.0, 0.5, 1.0, rho));
            let rows = pa_curve(&PaModel::Spatial { model: m, mu_d: 0.0 }, &[1.0], &hs, &[0.0], None).unwrap();
            for w in rows.windows(2) {
                assert!(w[1].psi <= w[0].psi + 1e-12);
            }
            let uncorrelated = psi(&spec(1.0, 0.0, 2.0f64.sqrt()));
            assert!((rows.last().unwrap().psi - uncorrelated).abs() < 1e-3);
            if let Some(p) = prev {
                for (a, b) in p.iter().zip(&rows) {
                    assert!(b.psi >= a.psi - 1e-12);
                }
            }
            prev = Some(rows);
        }
    }

    #[test]
    fn curve_with_uncertainty_skips_degenerate_points() {
        let model = SpatioTemporalModel::exponential(0.1, 6.676, 1.0);
        let pm = PaModel::SpatioTemporal { model, trend: TrendCoefficients::new(0.5, 0.1) };
        let unc = ParameterUncertainty { v_theta: vec![1e-4, 0.0, 0.0, 0.0, 1e-4, 0.0, 0.0, 0.0, 1e-4], v_mean: 1e-5 };
        let rows = pa_curve(&pm, &[0.5], &[0.0, 1.0], &[0.0], Some(&unc)).unwrap();
        assert_eq!(rows[0].sd, None);
        assert!(rows[1].sd.unwrap() > 0.0);
        let mut buf = Vec::new();
        write_curve(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("u,c,h,psi,sd\n0,0.5,0,1,\n"));
    }

    proptest! {
        #[test]
        fn psi_is_a_probability(c in 1e-3f64..10.0, mu in -10.0f64..10.0, s in 0.0f64..10.0) {
            let p = psi(&spec(c, mu, s));
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn psi_symmetric_in_mean(c in 1e-3f64..10.0, mu in -10.0f64..10.0, s in 0.0f64..10.0) {
            prop_assert_eq!(psi(&spec(c, mu, s)), psi(&spec(c, -mu, s)));
        }

        #[test]
        fn psi_decreasing_in_sigma(c in 0.1f64..5.0, frac in 0.0f64..0.9, k in 0.2f64..5.0, ds in 0.01f64..1.0) {
            let (mu, s) = (frac * c, k * c);
            prop_assert!(psi(&spec(c, mu, s + ds)) < psi(&spec(c, mu, s)));
        }

        #[test]
        fn exact_variance_is_non_negative(
            c in 0.1f64..5.0, mu in -3.0f64..3.0, s in 0.05f64..5.0, vm in 0.0f64..1.0, vs in 0.0f64..1.0
        ) {
            let e = pa_estimate_from_moments(&spec(c, mu, s), vm, vs, 0.0, 0.0).unwrap();
            prop_assert!(e.variance >= 0.0);
            if vm == 0.0 && vs == 0.0 {
                prop_assert_eq!(e.variance, 0.0);
            }
        }

        #[test]
        fn two_sided_p_monotone_in_z(a in 0.0f64..6.0, b in 0.0f64..6.0) {
            let pa = z_test(0.5 + a * 0.01, 1e-4, 0.5, Alternative::TwoSided).unwrap().p_value;
            let pb = z_test(0.5 + b * 0.01, 1e-4, 0.5, Alternative::TwoSided).unwrap().p_value;
            if a < b { prop_assert!(pa >= pb); }
            prop_assert!((0.0..=1.0).contains(&pa));
        }
    }
}
