//! Run configuration: a TOML file with one section per concern.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use spa_core::agreement::{Alternative, TrendCoefficients};
use spa_core::covariance::{CovarianceModel, SpatioTemporalModel, StFamily};
use spa_core::estimation::{LikelihoodKind, PairwiseConfig};
use spa_core::randomfield::GridSpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Option<toml::Value>,
    pub trend: Option<TrendCoefficients>,
    pub grid: Option<GridSpec>,
    pub simulate: SimulateSection,
    pub fit: FitSection,
    pub pa: PaSection,
    pub test: TestSection,
    pub gcc: GccSection,
    pub variogram: VariogramSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub replicates: usize,
    /// Means of the two components for bivariate models.
    pub means: [f64; 2],
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { replicates: 1, means: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub input: Option<PathBuf>,
    pub family: String,
    pub likelihood: LikelihoodKind,
    pub spatial_cutoff: Option<f64>,
    pub temporal_cutoff: f64,
    pub max_evaluations: usize,
    pub tolerance: f64,
    pub initial: Option<Vec<f64>>,
    pub bounds: Option<Vec<[f64; 2]>>,
    /// True parameter values (`a0, a1`, then the family's) for the summary.
    pub truth: Option<Vec<f64>>,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = PairwiseConfig::default();
        Self {
            input: None,
            family: StFamily::ExponentialSeparable.name().to_string(),
            likelihood: d.likelihood,
            spatial_cutoff: d.spatial_cutoff,
            temporal_cutoff: d.temporal_cutoff,
            max_evaluations: d.max_evaluations,
            tolerance: d.tolerance,
            initial: None,
            bounds: None,
            truth: None,
        }
    }
}

impl FitSection {
    pub fn family(&self) -> CliResult<StFamily> {
        self.family.parse().map_err(CliError::from)
    }

    pub fn pairwise(&self) -> PairwiseConfig {
        PairwiseConfig {
            spatial_cutoff: self.spatial_cutoff,
            temporal_cutoff: self.temporal_cutoff,
            max_evaluations: self.max_evaluations,
            tolerance: self.tolerance,
            initial: self.initial.clone(),
            bounds: self.bounds.as_ref().map(|b| b.iter().map(|p| (p[0], p[1])).collect()),
            likelihood: self.likelihood,
        }
    }
}

/// A list of values, or an inclusive `from`/`to`/`step` range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

impl Values {
    pub fn expand(&self, name: &str) -> CliResult<Vec<f64>> {
        let v = match *self {
            Values::List(ref v) => v.clone(),
            Values::Range { from, to, step } => {
                if !(step > 0.0) || !(to >= from) {
                    return Err(CliError::config(format!("{name}: range needs step > 0 and to >= from")));
                }
                let n = ((to - from) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| from + i as f64 * step).collect()
            }
        };
        if v.is_empty() {
            return Err(CliError::config(format!("{name}: grid is empty")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaSection {
    /// Fit table providing model, trend and parameter covariance.
    pub fit: Option<PathBuf>,
    pub c: Values,
    pub h: Values,
    pub u: Values,
    /// Mean difference for bivariate models.
    pub mu_d: f64,
}

impl Default for PaSection {
    fn default() -> Self {
        Self {
            fit: None,
            c: Values::List(vec![0.5]),
            h: Values::Range { from: 0.0, to: 10.0, step: 0.5 },
            u: Values::List(vec![0.0, 1.0, 2.0, 3.0]),
            mu_d: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    pub fit: Option<PathBuf>,
    /// Direct estimate, used instead of a fit table.
    pub psi_hat: Option<f64>,
    pub sd: Option<f64>,
    pub c: f64,
    pub h: f64,
    pub u: f64,
    pub psi0: f64,
    pub alternative: Alternative,
    pub level: f64,
}

impl Default for TestSection {
    fn default() -> Self {
        Self {
            fit: None,
            psi_hat: None,
            sd: None,
            c: 0.5,
            h: 1.0,
            u: 0.0,
            psi0: 0.95,
            alternative: Alternative::Less,
            level: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GccOrder {
    /// Block-average RGB, then compute G_cc.
    DownscaleFirst,
    /// Compute G_cc per pixel, then block-average it.
    GccFirst,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GccSection {
    pub input_dir: Option<PathBuf>,
    /// `[x0, y0, width, height]`.
    pub clip: Option<[usize; 4]>,
    pub window: usize,
    pub order: GccOrder,
}

impl Default for GccSection {
    fn default() -> Self {
        Self { input_dir: None, clip: None, window: 15, order: GccOrder::DownscaleFirst }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariogramSection {
    pub input: Option<PathBuf>,
    pub h_width: f64,
    /// Defaults to half the site extent.
    pub h_max: Option<f64>,
    pub u_max: f64,
    pub detrend: bool,
}

impl Default for VariogramSection {
    fn default() -> Self {
        Self { input: None, h_width: 1.0, h_max: None, u_max: 3.0, detrend: true }
    }
}

/// The `[model]` section, resolved by its `family` key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    SpatioTemporal(SpatioTemporalModel),
    Bivariate(CovarianceModel),
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self { base_dir: PathBuf::from("."), ..Default::default() }) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Resolve a path from the config relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn model(&self) -> CliResult<Option<ModelSpec>> {
        let Some(v) = &self.model else { return Ok(None) };
        let family = v
            .get("family")
            .and_then(|f| f.as_str())
            .ok_or_else(|| CliError::config("[model] needs a `family` key"))?;
        let bad = |e: toml::de::Error| CliError::config(format!("[model]: {e}"));
        Ok(Some(match family {
            "exponential_separable" | "iacocesare" => {
                ModelSpec::SpatioTemporal(v.clone().try_into().map_err(bad)?)
            }
            "matern" | "wendland" | "wave" => ModelSpec::Bivariate(v.clone().try_into().map_err(bad)?),
            other => return Err(CliError::config(format!("[model]: unknown family `{other}`"))),
        }))
    }

    pub fn require_model(&self) -> CliResult<ModelSpec> {
        self.model()?.ok_or_else(|| CliError::config("a [model] section is required"))
    }

    pub fn trend_or_zero(&self) -> TrendCoefficients {
        self.trend.unwrap_or(TrendCoefficients::new(0.0, 0.0))
    }
}
