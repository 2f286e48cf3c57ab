//! Trend and covariance estimation for spatiotemporal fields by pairwise
//! composite likelihood (or the exact joint likelihood), with numerical
//! parameter covariance, pseudo-AIC, variograms and Monte Carlo summaries.

pub mod likelihood;
pub mod neldermead;
mod variogram;

pub use likelihood::{for_each_pair, FullData, PairClasses, FULL_DENSE_LIMIT, SINGULAR_CORRELATION_MARGIN};
pub use variogram::{
    detrend_field, empirical_variogram, ols_detrend, VariogramBin, VariogramBins, VariogramEstimate,
    VARIOGRAM_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::agreement::{PaModel, ParameterUncertainty, TrendCoefficients};
use crate::covariance::{SpatioTemporalModel, StFamily};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, PivotPolicy};
use crate::randomfield::StObservation;
use likelihood::Moments;
use neldermead::{minimize, NelderMeadOptions};

pub const DEFAULT_SPATIAL_CUTOFF_FRACTION: f64 = 0.25;
pub const DEFAULT_TEMPORAL_CUTOFF: f64 = 2.0;
pub const HESSIAN_REL_STEP: f64 = 1e-4;
const HESSIAN_ABS_STEP: f64 = 1e-6;
const SIGMA2_INDEX: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    /// Sum of bivariate normal log-densities over pairs within the cutoffs.
    Pairwise,
    /// Exact joint Gaussian log-likelihood.
    Full,
}

impl LikelihoodKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Pairwise => "pairwise",
            Self::Full => "full",
        }
    }
}

impl std::str::FromStr for LikelihoodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(Self::Pairwise),
            "full" => Ok(Self::Full),
            _ => Err(Error::Parse(format!("unknown likelihood `{s}`"))),
        }
    }
}

/// Fitting options. Parameter vectors follow the family's canonical order
/// ([`StFamily::param_names`]); the `sigma2` entries are ignored because the
/// variance is profiled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairwiseConfig {
    /// Largest spatial distance of a pair; defaults to a quarter of the
    /// site extent.
    pub spatial_cutoff: Option<f64>,
    pub temporal_cutoff: f64,
    pub max_evaluations: usize,
    /// Relative objective spread at which the simplex search stops.
    pub tolerance: f64,
    pub initial: Option<Vec<f64>>,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub likelihood: LikelihoodKind,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        Self {
            spatial_cutoff: None,
            temporal_cutoff: DEFAULT_TEMPORAL_CUTOFF,
            max_evaluations: 4000,
            tolerance: 1e-8,
            initial: None,
            bounds: None,
            likelihood: LikelihoodKind::Pairwise,
        }
    }
}

impl PairwiseConfig {
    fn check(&self) -> Result<()> {
        if let Some(c) = self.spatial_cutoff {
            if !(c > 0.0) {
                return Err(Error::Domain(format!("spatial cutoff must be positive, got {c}")));
            }
        }
        if !(self.temporal_cutoff > 0.0) {
            return Err(Error::Domain(format!("temporal cutoff must be positive, got {}", self.temporal_cutoff)));
        }
        if self.max_evaluations < 1 {
            return Err(Error::Domain("optimizer budget must be at least 1".into()));
        }
        Ok(())
    }

    pub fn spatial_cutoff_for(&self, obs: &[StObservation]) -> f64 {
        self.spatial_cutoff.unwrap_or(DEFAULT_SPATIAL_CUTOFF_FRACTION * site_extent(obs))
    }
}

/// Diagonal of the bounding box of the observation sites.
pub fn site_extent(obs: &[StObservation]) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for o in obs {
        x0 = x0.min(o.x);
        x1 = x1.max(o.x);
        y0 = y0.min(o.y);
        y1 = y1.max(o.y);
    }
    if obs.is_empty() {
        0.0
    } else {
        (x1 - x0).hypot(y1 - y0)
    }
}

/// `2p - 2·CL`.
pub fn pseudo_aic(n_params: usize, loglik: f64) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

/// Pairwise composite log-likelihood of `obs` under the trend and model.
pub fn composite_loglik(
    obs: &[StObservation],
    model: &SpatioTemporalModel,
    trend: &TrendCoefficients,
    config: &PairwiseConfig,
) -> Result<f64> {
    config.check()?;
    model.check()?;
    let pc = PairClasses::build(obs, config.spatial_cutoff_for(obs), config.temporal_cutoff)?;
    Ok(pc.moments(model)?.loglik(trend, model.sigma2()))
}

/// Exact joint Gaussian log-likelihood of `obs`.
pub fn full_loglik(obs: &[StObservation], model: &SpatioTemporalModel, trend: &TrendCoefficients) -> Result<f64> {
    model.check()?;
    Ok(FullData::new(obs)?.moments(model)?.loglik(trend, model.sigma2()))
}

enum Objective {
    Pairwise(PairClasses),
    Full(FullData),
}

impl Objective {
    fn moments(&self, model: &SpatioTemporalModel) -> Result<Moments> {
        match self {
            Self::Pairwise(p) => p.moments(model),
            Self::Full(f) => f.moments(model),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Transform {
    Log,
    /// `θ = 2 / (1 + e^{-x})`
    HalfLogit,
}

impl Transform {
    fn forward(&self, v: f64) -> f64 {
        match self {
            Self::Log => v.ln(),
            Self::HalfLogit => {
                let p = (v / 2.0).min(1.0 - 1e-12);
                (p / (1.0 - p)).ln()
            }
        }
    }

    fn back(&self, x: f64) -> f64 {
        match self {
            Self::Log => x.exp(),
            Self::HalfLogit => 2.0 / (1.0 + (-x).exp()),
        }
    }
}

fn transforms(family: StFamily) -> Vec<Transform> {
    family
        .param_names()
        .iter()
        .map(|n| if n.starts_with("alpha") { Transform::HalfLogit } else { Transform::Log })
        .collect()
}

/// Starting values in canonical order.
pub fn default_initial(family: StFamily, extent: f64) -> Vec<f64> {
    let phi_s = if extent > 0.0 { extent / 10.0 } else { 1.0 };
    match family {
        StFamily::ExponentialSeparable => vec![phi_s, 1.0, 1.0],
        StFamily::Iacocesare => vec![phi_s, 1.0, 1.0, 1.0, 1.0, 1.0],
    }
}

/// Default box constraints in canonical order.
pub fn default_bounds(family: StFamily) -> Vec<(f64, f64)> {
    family
        .param_names()
        .iter()
        .map(|n| if n.starts_with("alpha") { (1e-3, 2.0) } else { (1e-6, 1e6) })
        .collect()
}

/// Estimated trend and covariance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: StFamily,
    pub trend: TrendCoefficients,
    pub model: SpatioTemporalModel,
    /// Maximized log-likelihood (composite or full).
    pub loglik: f64,
    /// Free parameters: two trend coefficients plus the family's.
    pub n_params: usize,
    pub pseudo_aic: f64,
    /// Inverse of the negative numerical Hessian over [`Self::param_names`],
    /// row-major. For the pairwise likelihood this is the naive estimator,
    /// not the sandwich form.
    pub vcov: Option<Vec<f64>>,
    /// `0 < φ̂_s < max_extent`.
    pub valid: bool,
    pub converged: bool,
    pub evaluations: usize,
    pub max_extent: f64,
    pub n_pairs: Option<usize>,
    pub likelihood: LikelihoodKind,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// `a0, a1`, then the family's canonical names.
    pub fn param_names(&self) -> Vec<&'static str> {
        let mut v = vec!["a0", "a1"];
        v.extend_from_slice(self.family.param_names());
        v
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut v = vec![self.trend.a0, self.trend.a1];
        v.extend(self.model.params());
        v
    }

    /// Covariance of the covariance-model parameters only.
    pub fn covariance_vcov(&self) -> Option<Vec<f64>> {
        let v = self.vcov.as_ref()?;
        let p = self.n_params;
        let q = p - 2;
        let mut out = Vec::with_capacity(q * q);
        for i in 2..p {
            for j in 2..p {
                out.push(v[i * p + j]);
            }
        }
        Some(out)
    }

    pub fn var_a1(&self) -> Option<f64> {
        self.vcov.as_ref().map(|v| v[self.n_params + 1])
    }

    pub fn pa_model(&self) -> PaModel {
        PaModel::SpatioTemporal { model: self.model, trend: self.trend }
    }

    pub fn uncertainty(&self) -> Option<ParameterUncertainty> {
        Some(ParameterUncertainty { v_theta: self.covariance_vcov()?, v_mean: self.var_a1()? })
    }

    /// `key,value` records; covariance entries are keyed `vcov:<name>:<name>`.
    pub fn records(&self) -> Vec<(String, String)> {
        let mut r = vec![
            ("family".to_string(), self.family.name().to_string()),
            ("likelihood".to_string(), self.likelihood.name().to_string()),
        ];
        let names = self.param_names();
        for (n, v) in names.iter().zip(self.theta()) {
            r.push((n.to_string(), v.to_string()));
        }
        r.push(("loglik".into(), self.loglik.to_string()));
        r.push(("n_params".into(), self.n_params.to_string()));
        r.push(("pseudo_aic".into(), self.pseudo_aic.to_string()));
        r.push(("valid".into(), self.valid.to_string()));
        r.push(("converged".into(), self.converged.to_string()));
        r.push(("evaluations".into(), self.evaluations.to_string()));
        r.push(("max_extent".into(), self.max_extent.to_string()));
        if let Some(n) = self.n_pairs {
            r.push(("n_pairs".into(), n.to_string()));
        }
        if let Some(v) = &self.vcov {
            let p = self.n_params;
            for i in 0..p {
                for j in 0..p {
                    r.push((format!("vcov:{}:{}", names[i], names[j]), v[i * p + j].to_string()));
                }
            }
        }
        r
    }

    pub fn write_table<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "key,value")?;
        for (k, v) in self.records() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }

    pub fn read_table<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key,value", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).ok_or_else(|| Error::Parse(format!("missing key `{k}`")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Parse(format!("`{k}`: {e}")))
        };
        let family: StFamily = get("family")?.parse()?;
        let likelihood: LikelihoodKind = get("likelihood")?.parse()?;
        let params: Vec<f64> = family.param_names().iter().map(|n| num(n)).collect::<Result<_>>()?;
        let model = SpatioTemporalModel::from_params(family, &params);
        let trend = TrendCoefficients::new(num("a0")?, num("a1")?);
        let n_params = family.n_params() + 2;
        let mut names = vec!["a0", "a1"];
        names.extend_from_slice(family.param_names());
        let vcov = if map.contains_key(&format!("vcov:{}:{}", names[0], names[0])) {
            let mut v = Vec::with_capacity(n_params * n_params);
            for a in &names {
                for b in &names {
                    v.push(num(&format!("vcov:{a}:{b}"))?);
                }
            }
            Some(v)
        } else {
            None
        };
        let boolean = |k: &str| -> Result<bool> {
            get(k)?.parse::<bool>().map_err(|e| Error::Parse(format!("`{k}`: {e}")))
        };
        Ok(Self {
            family,
            trend,
            model,
            loglik: num("loglik")?,
            n_params,
            pseudo_aic: num("pseudo_aic")?,
            vcov,
            valid: boolean("valid")?,
            converged: boolean("converged")?,
            evaluations: num("evaluations")? as usize,
            max_extent: num("max_extent")?,
            n_pairs: map.get("n_pairs").and_then(|s| s.parse().ok()),
            likelihood,
            warnings: Vec::new(),
        })
    }
}

/// Fit trend and covariance parameters of `family` to `obs`.
///
/// The trend and `σ²` are profiled out in closed form; the remaining
/// correlation parameters are searched by Nelder–Mead on log scale (`α` on a
/// logit scale over `(0, 2)`).
pub fn fit(obs: &[StObservation], family: StFamily, config: &PairwiseConfig) -> Result<FitResult> {
    config.check()?;
    if obs.len() < 2 {
        return Err(Error::Domain("at least two observations are required".into()));
    }
    if obs.iter().all(|o| o.t == obs[0].t) {
        return Err(Error::Degenerate("fitting a time trend needs at least two distinct times".into()));
    }
    let extent = site_extent(obs);
    let objective = match config.likelihood {
        LikelihoodKind::Pairwise => {
            Objective::Pairwise(PairClasses::build(obs, config.spatial_cutoff_for(obs), config.temporal_cutoff)?)
        }
        LikelihoodKind::Full => Objective::Full(FullData::new(obs)?),
    };
    let np = family.n_params();
    let initial = config.initial.clone().unwrap_or_else(|| default_initial(family, extent));
    let bounds = config.bounds.clone().unwrap_or_else(|| default_bounds(family));
    if initial.len() != np || bounds.len() != np {
        return Err(Error::DimensionMismatch(format!(
            "{} expects {np} initial values and bounds",
            family.name()
        )));
    }
    let free: Vec<usize> = (0..np).filter(|&i| i != SIGMA2_INDEX).collect();
    for &i in &free {
        let (lo, hi) = bounds[i];
        if !(lo <= initial[i] && initial[i] <= hi) {
            return Err(Error::Domain(format!(
                "initial {} = {} outside bounds [{lo}, {hi}]",
                family.param_names()[i],
                initial[i]
            )));
        }
    }
    let tf = transforms(family);

    let unpack = |x: &[f64]| -> Option<Vec<f64>> {
        let mut p = initial.clone();
        p[SIGMA2_INDEX] = 1.0;
        for (k, &i) in free.iter().enumerate() {
            let v = tf[i].back(x[k]);
            let (lo, hi) = bounds[i];
            if !(v >= lo && v <= hi) {
                return None;
            }
            p[i] = v;
        }
        Some(p)
    };
    let profiled = |p: &[f64]| -> Result<likelihood::Profile> {
        objective.moments(&SpatioTemporalModel::from_params(family, p))?.profile()
    };

    let x0: Vec<f64> = free.iter().map(|&i| tf[i].forward(initial[i])).collect();
    let opts = NelderMeadOptions {
        tolerance: config.tolerance,
        max_evaluations: config.max_evaluations,
        ..Default::default()
    };
    let best = minimize(
        |x| match unpack(x) {
            Some(p) => profiled(&p).map(|pr| -pr.loglik).unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        },
        &x0,
        &opts,
    );
    let mut params = unpack(&best.x).ok_or_else(|| Error::Numerical("optimizer left the bounds".into()))?;
    let prof = profiled(&params)?;
    params[SIGMA2_INDEX] = prof.sigma2;
    let model = SpatioTemporalModel::from_params(family, &params);

    let mut warnings = Vec::new();
    if !best.converged {
        warnings.push(format!("optimizer budget of {} evaluations exhausted", config.max_evaluations));
    }
    let mut theta = vec![prof.trend.a0, prof.trend.a1];
    theta.extend_from_slice(&params);
    let loglik_at = |th: &[f64]| -> Result<f64> {
        let m = SpatioTemporalModel::from_params(family, &th[2..]);
        Ok(objective.moments(&m)?.loglik(&TrendCoefficients::new(th[0], th[1]), m.sigma2()))
    };
    let vcov = match numerical_hessian(&loglik_at, &theta).and_then(|h| invert_negative(&h, theta.len())) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("parameter covariance omitted: {e}"));
            None
        }
    };
    let n_params = np + 2;
    let phi_s = model.phi_s();
    Ok(FitResult {
        family,
        trend: prof.trend,
        model,
        loglik: prof.loglik,
        n_params,
        pseudo_aic: pseudo_aic(n_params, prof.loglik),
        vcov,
        valid: phi_s > 0.0 && phi_s < extent,
        converged: best.converged,
        evaluations: best.evaluations,
        max_extent: extent,
        n_pairs: match &objective {
            Objective::Pairwise(p) => Some(p.n_pairs()),
            Objective::Full(_) => None,
        },
        likelihood: config.likelihood,
        warnings,
    })
}

/// Central-difference Hessian with steps `1e-4·|θ_i|` (floor `1e-6`).
pub fn numerical_hessian<F>(f: &F, theta: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let p = theta.len();
    let steps: Vec<f64> = theta.iter().map(|v| (HESSIAN_REL_STEP * v.abs()).max(HESSIAN_ABS_STEP)).collect();
    let f0 = f(theta)?;
    let at = |moves: &[(usize, f64)]| -> Result<f64> {
        let mut x = theta.to_vec();
        for &(i, d) in moves {
            x[i] += d;
        }
        f(&x)
    };
    let mut h = vec![0.0; p * p];
    for i in 0..p {
        let si = steps[i];
        let up = at(&[(i, si)])?;
        let down = at(&[(i, -si)])?;
        h[i * p + i] = (up - 2.0 * f0 + down) / (si * si);
        for j in 0..i {
            let sj = steps[j];
            let pp = at(&[(i, si), (j, sj)])?;
            let pm = at(&[(i, si), (j, -sj)])?;
            let mp = at(&[(i, -si), (j, sj)])?;
            let mm = at(&[(i, -si), (j, -sj)])?;
            let v = (pp - pm - mp + mm) / (4.0 * si * sj);
            h[i * p + j] = v;
            h[j * p + i] = v;
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Hessian entry".into()));
    }
    Ok(h)
}

fn invert_negative(h: &[f64], p: usize) -> Result<Vec<f64>> {
    let neg: Vec<f64> = h.iter().map(|v| -v).collect();
    Cholesky::factor(&neg, p, PivotPolicy::Strict)
        .map_err(|_| Error::Numerical("Hessian is not negative definite".into()))?
        .inverse()
}

/// Share of fits flagged valid, in percent; `NaN` for an empty list.
pub fn percent_valid(fits: &[FitResult]) -> f64 {
    if fits.is_empty() {
        return f64::NAN;
    }
    100.0 * fits.iter().filter(|f| f.valid).count() as f64 / fits.len() as f64
}

/// Replicate summary: per-parameter mean and standard deviation over the
/// valid fits, plus the percentage of valid fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub family: StFamily,
    pub names: Vec<&'static str>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub percent_valid: f64,
    pub n_fits: usize,
    pub n_valid: usize,
}

pub fn summarize(fits: &[FitResult]) -> Result<FitSummary> {
    let first = fits.first().ok_or_else(|| Error::Domain("no fits to summarize".into()))?;
    if fits.iter().any(|f| f.family != first.family) {
        return Err(Error::Domain("fits mix covariance families".into()));
    }
    let names = first.param_names();
    let valid: Vec<Vec<f64>> = fits.iter().filter(|f| f.valid).map(|f| f.theta()).collect();
    let k = valid.len() as f64;
    let p = names.len();
    let mean: Vec<f64> = (0..p).map(|i| valid.iter().map(|t| t[i]).sum::<f64>() / k).collect();
    let sd: Vec<f64> = (0..p)
        .map(|i| (valid.iter().map(|t| (t[i] - mean[i]).powi(2)).sum::<f64>() / (k - 1.0)).sqrt())
        .collect();
    Ok(FitSummary {
        family: first.family,
        names,
        mean,
        sd,
        percent_valid: percent_valid(fits),
        n_fits: fits.len(),
        n_valid: valid.len(),
    })
}

impl FitSummary {
    /// Rows `true` (when given), `mean`, `sd`; columns are the parameters
    /// followed by `percent_valid`.
    pub fn write_table<W: std::io::Write>(&self, truth: Option<&[f64]>, mut w: W) -> Result<()> {
        writeln!(w, "statistic,{},percent_valid", self.names.join(","))?;
        let row = |label: &str, v: &[f64], extra: String, w: &mut W| -> Result<()> {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
            writeln!(w, "{label},{},{extra}", cells.join(","))?;
            Ok(())
        };
        if let Some(t) = truth {
            row("true", t, String::new(), &mut w)?;
        }
        row("mean", &self.mean, format!("{:.1}", self.percent_valid), &mut w)?;
        row("sd", &self.sd, String::new(), &mut w)?;
        Ok(())
    }
}
