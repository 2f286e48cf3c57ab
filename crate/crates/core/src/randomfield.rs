//! Gaussian random field simulation on regular grids by dense symmetric
//! factorization.
//!
//! Point ordering: sites are row-major over the spatial grid (`col` fastest),
//! and time is the outer loop, so point `k` is
//! `t_index * n_s² + row * n_s + col`. Site `(row, col)` sits at
//! `x = (col + 1) * spacing`, `y = (row + 1) * spacing`, and time step `k`
//! (0-based) is `t = k + 1`.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`): the key is derived with
//! `seed_from_u64(seed)` and replicate `k` reads stream `k`, so replicates
//! are independent and reproducible in any order.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::agreement::TrendCoefficients;
use crate::covariance::{CovarianceModel, SpatioTemporalModel};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, PivotPolicy};

/// Largest number of jointly simulated values accepted.
pub const MAX_SIMULATION_SIZE: usize = 40_000;

/// Pivot tolerance, relative to the largest variance, below which a pivot is
/// treated as an exact zero while sampling.
pub const SAMPLING_PIVOT_TOLERANCE: f64 = 1e-11;

/// Relative diagonal jitter applied when the plain factorization fails.
pub const FALLBACK_JITTER: f64 = 1e-10;

/// Regular `n_s × n_s` spatial grid observed at times `1..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_s: usize,
    pub spacing: f64,
    pub n_t: usize,
}

impl GridSpec {
    pub fn new(n_s: usize, spacing: f64, n_t: usize) -> Result<Self> {
        let g = Self { n_s, spacing, n_t };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if self.n_s < 1 || !(self.spacing > 0.0) || self.n_t < 1 {
            return Err(Error::Domain(format!(
                "grid needs n_s >= 1, spacing > 0, n_t >= 1 (got {}, {}, {})",
                self.n_s, self.spacing, self.n_t
            )));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n_s * self.n_s
    }

    pub fn n_points(&self) -> usize {
        self.n_sites() * self.n_t
    }

    /// Coordinates of site `index`.
    pub fn site(&self, index: usize) -> (f64, f64) {
        let (row, col) = (index / self.n_s, index % self.n_s);
        ((col + 1) as f64 * self.spacing, (row + 1) as f64 * self.spacing)
    }

    /// `(x, y, t)` of every point in simulation order.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut pts = Vec::with_capacity(self.n_points());
        for k in 0..self.n_t {
            for s in 0..self.n_sites() {
                let (x, y) = self.site(s);
                pts.push((x, y, (k + 1) as f64));
            }
        }
        pts
    }

    /// Largest distance between two sites, `(n_s - 1) · spacing · √2`.
    pub fn max_extent(&self) -> f64 {
        (self.n_s.saturating_sub(1)) as f64 * self.spacing * std::f64::consts::SQRT_2
    }

    /// Side length of the grid, `(n_s - 1) · spacing`.
    pub fn side_length(&self) -> f64 {
        (self.n_s.saturating_sub(1)) as f64 * self.spacing
    }
}

/// One value of a spatiotemporal field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StObservation {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub value: f64,
}

/// One site of a bivariate field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateObservation {
    pub x: f64,
    pub y: f64,
    pub first: f64,
    pub second: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    SpatioTemporal(Vec<StObservation>),
    Bivariate(Vec<BivariateObservation>),
}

/// Model a sample was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldModel {
    SpatioTemporal { model: SpatioTemporalModel, trend: TrendCoefficients },
    Bivariate { model: CovarianceModel, means: (f64, f64) },
}

/// How a simulated sample was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub grid: GridSpec,
    pub model: FieldModel,
    pub seed: u64,
    pub stream: u64,
    /// Diagonal jitter that had to be added before factoring (0 if none).
    pub jitter: f64,
}

/// A realization of a field, simulated or observed.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub values: FieldValues,
    pub provenance: Option<Provenance>,
}

pub const ST_HEADER: &str = "x,y,t,value";
pub const BIVARIATE_HEADER: &str = "x,y,X,Y";

impl FieldSample {
    pub fn spatiotemporal(obs: Vec<StObservation>) -> Self {
        Self { values: FieldValues::SpatioTemporal(obs), provenance: None }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            FieldValues::SpatioTemporal(v) => v.len(),
            FieldValues::Bivariate(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatiotemporal observations, or an error for bivariate samples.
    pub fn st_observations(&self) -> Result<&[StObservation]> {
        match &self.values {
            FieldValues::SpatioTemporal(v) => Ok(v),
            FieldValues::Bivariate(_) => Err(Error::Domain("expected a spatiotemporal field".into())),
        }
    }

    pub fn bivariate_observations(&self) -> Result<&[BivariateObservation]> {
        match &self.values {
            FieldValues::Bivariate(v) => Ok(v),
            FieldValues::SpatioTemporal(_) => Err(Error::Domain("expected a bivariate field".into())),
        }
    }

    /// Columnar text: header `x,y,t,value` or `x,y,X,Y`, one row per value.
    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.values {
            FieldValues::SpatioTemporal(v) => {
                writeln!(w, "{ST_HEADER}")?;
                for o in v {
                    writeln!(w, "{},{},{},{}", o.x, o.y, o.t, o.value)?;
                }
            }
            FieldValues::Bivariate(v) => {
                writeln!(w, "{BIVARIATE_HEADER}")?;
                for o in v {
                    writeln!(w, "{},{},{},{}", o.x, o.y, o.first, o.second)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_table<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field table".into()))??;
        let bivariate = match header.trim() {
            ST_HEADER => false,
            BIVARIATE_HEADER => true,
            other => return Err(Error::Parse(format!("unrecognized field header `{other}`"))),
        };
        let mut st = Vec::new();
        let mut bi = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if cols.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns, got {}", lineno + 2, cols.len())));
            }
            if bivariate {
                bi.push(BivariateObservation { x: cols[0], y: cols[1], first: cols[2], second: cols[3] });
            } else {
                st.push(StObservation { x: cols[0], y: cols[1], t: cols[2], value: cols[3] });
            }
        }
        let values = if bivariate { FieldValues::Bivariate(bi) } else { FieldValues::SpatioTemporal(st) };
        Ok(Self { values, provenance: None })
    }
}

fn guard(size: usize) -> Result<()> {
    if size > MAX_SIMULATION_SIZE {
        Err(Error::SizeGuard { size, limit: MAX_SIMULATION_SIZE })
    } else {
        Ok(())
    }
}

/// Covariance matrix of a spatiotemporal model at arbitrary `(x, y, t)`
/// points, row-major. Entry `(i, j)` is `C(‖s_i - s_j‖, |t_i - t_j|)`.
pub fn assemble_st_points(points: &[(f64, f64, f64)], model: &SpatioTemporalModel) -> Result<Vec<f64>> {
    model.check()?;
    let n = points.len();
    guard(n)?;
    let sigma2 = model.sigma2();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        c[i * n + i] = sigma2;
        for j in 0..i {
            let (xi, yi, ti) = points[i];
            let (xj, yj, tj) = points[j];
            let h = (xi - xj).hypot(yi - yj);
            let v = sigma2 * model.correlation_unchecked(h, ti - tj);
            c[i * n + j] = v;
            c[j * n + i] = v;
        }
    }
    Ok(c)
}

/// Covariance matrix of a spatiotemporal model on a grid.
pub fn assemble_st(grid: &GridSpec, model: &SpatioTemporalModel) -> Result<Vec<f64>> {
    grid.check()?;
    guard(grid.n_points())?;
    assemble_st_points(&grid.points(), model)
}

/// Joint covariance of `(X, Y)` at arbitrary sites: all `X` values first,
/// then all `Y` values, giving the block matrix `[[C_X, C_XY], [C_XY, C_Y]]`.
pub fn assemble_bivariate_sites(sites: &[(f64, f64)], model: &CovarianceModel) -> Result<Vec<f64>> {
    model.check()?;
    let m = sites.len();
    guard(2 * m)?;
    let n = 2 * m;
    let mut c = vec![0.0; n * n];
    // Distances repeat heavily on grids; cache entries by exact distance.
    let mut cache: std::collections::HashMap<u64, (f64, f64, f64)> = std::collections::HashMap::new();
    for i in 0..m {
        for j in 0..=i {
            let h = (sites[i].0 - sites[j].0).hypot(sites[i].1 - sites[j].1);
            let (cx, cy, cxy) = match cache.get(&h.to_bits()) {
                Some(&e) => e,
                None => {
                    let e = model.entries_unchecked(h)?;
                    cache.insert(h.to_bits(), e);
                    e
                }
            };
            let mut set = |r: usize, s: usize, v: f64| {
                c[r * n + s] = v;
                c[s * n + r] = v;
            };
            set(i, j, cx);
            set(m + i, m + j, cy);
            set(i, m + j, cxy);
            set(j, m + i, cxy);
        }
    }
    Ok(c)
}

/// Joint covariance of a bivariate model on the spatial grid.
pub fn assemble_bivariate(grid: &GridSpec, model: &CovarianceModel) -> Result<Vec<f64>> {
    grid.check()?;
    let sites: Vec<(f64, f64)> = (0..grid.n_sites()).map(|s| grid.site(s)).collect();
    assemble_bivariate_sites(&sites, model)
}

/// Random number generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn factor_for_sampling(c: &[f64], n: usize, variance_scale: f64) -> Result<Cholesky> {
    let policy = PivotPolicy::Semidefinite { tolerance: SAMPLING_PIVOT_TOLERANCE };
    match Cholesky::factor(c, n, policy) {
        Ok(f) => Ok(f),
        Err(Error::NotPositiveDefinite { .. }) => {
            Cholesky::factor_jittered(c, n, policy, FALLBACK_JITTER * variance_scale)
        }
        Err(e) => Err(e),
    }
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Spatiotemporal simulator holding the factored covariance so replicates
/// reuse a single factorization.
#[derive(Debug, Clone)]
pub struct StSimulator {
    grid: GridSpec,
    model: SpatioTemporalModel,
    factor: Cholesky,
}

impl StSimulator {
    pub fn new(grid: GridSpec, model: SpatioTemporalModel) -> Result<Self> {
        let c = assemble_st(&grid, &model)?;
        let factor = factor_for_sampling(&c, grid.n_points(), model.sigma2())?;
        Ok(Self { grid, model, factor })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Jitter added to the diagonal before factoring, 0 if none was needed.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    /// Draw `Y = Fβ + L z` for replicate `stream` of `seed`.
    pub fn sample(&self, trend: &TrendCoefficients, seed: u64, stream: u64) -> FieldSample {
        let mut rng = rng_for(seed, stream);
        let z = standard_normals(&mut rng, self.grid.n_points());
        let noise = self.factor.lower_mul(&z);
        let obs = self
            .grid
            .points()
            .into_iter()
            .zip(noise)
            .map(|((x, y, t), e)| StObservation { x, y, t, value: trend.mean(t) + e })
            .collect();
        FieldSample {
            values: FieldValues::SpatioTemporal(obs),
            provenance: Some(Provenance {
                grid: self.grid,
                model: FieldModel::SpatioTemporal { model: self.model, trend: *trend },
                seed,
                stream,
                jitter: self.factor.jitter(),
            }),
        }
    }
}

/// Simulate a spatiotemporal field with linear time trend.
pub fn simulate_st(
    grid: &GridSpec,
    model: &SpatioTemporalModel,
    trend: &TrendCoefficients,
    seed: u64,
) -> Result<FieldSample> {
    Ok(StSimulator::new(*grid, *model)?.sample(trend, seed, 0))
}

/// Bivariate simulator over the spatial grid (`n_t` is ignored).
#[derive(Debug, Clone)]
pub struct BivariateSimulator {
    grid: GridSpec,
    model: CovarianceModel,
    factor: Cholesky,
}

impl BivariateSimulator {
    pub fn new(grid: GridSpec, model: CovarianceModel) -> Result<Self> {
        let c = assemble_bivariate(&grid, &model)?;
        let n = 2 * grid.n_sites();
        let scale = (0..n).map(|i| c[i * n + i]).fold(0.0, f64::max);
        let factor = factor_for_sampling(&c, n, scale)?;
        Ok(Self { grid, model, factor })
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn sample(&self, means: (f64, f64), seed: u64, stream: u64) -> FieldSample {
        let m = self.grid.n_sites();
        let mut rng = rng_for(seed, stream);
        let z = standard_normals(&mut rng, 2 * m);
        let v = self.factor.lower_mul(&z);
        let obs = (0..m)
            .map(|s| {
                let (x, y) = self.grid.site(s);
                BivariateObservation { x, y, first: means.0 + v[s], second: means.1 + v[m + s] }
            })
            .collect();
        FieldSample {
            values: FieldValues::Bivariate(obs),
            provenance: Some(Provenance {
                grid: self.grid,
                model: FieldModel::Bivariate { model: self.model, means },
                seed,
                stream,
                jitter: self.factor.jitter(),
            }),
        }
    }
}

/// Simulate a bivariate stationary field on the spatial grid.
pub fn simulate_bivariate(
    grid: &GridSpec,
    model: &CovarianceModel,
    means: (f64, f64),
    seed: u64,
) -> Result<FieldSample> {
    Ok(BivariateSimulator::new(*grid, *model)?.sample(means, seed, 0))
}
