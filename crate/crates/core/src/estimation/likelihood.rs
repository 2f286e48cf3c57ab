//! Sufficient statistics for the pairwise and full Gaussian likelihoods
//! under a linear time trend.
//!
//! Both objectives reduce to `const - weight·ln σ² - Q(a0, a1)/(2σ²)` where
//! `Q` is a quadratic form in `w = (1, -a0, -a1)`, so the trend and `σ²` are
//! profiled out in closed form.

use std::collections::HashMap;

use crate::agreement::TrendCoefficients;
use crate::covariance::SpatioTemporalModel;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, PivotPolicy};
use crate::randomfield::StObservation;

/// Pairs with `|correlation|` this close to 1 make the pair density singular.
pub const SINGULAR_CORRELATION_MARGIN: f64 = 1e-12;

/// Largest number of points for the dense full-likelihood path.
pub const FULL_DENSE_LIMIT: usize = 500;

/// Largest number of sites for the separable full-likelihood path.
pub const FULL_SEPARABLE_SITE_LIMIT: usize = 4000;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Centering {
    pub y: f64,
    pub t: f64,
}

impl Centering {
    fn of(obs: &[StObservation]) -> Self {
        let n = obs.len() as f64;
        Self {
            y: obs.iter().map(|o| o.value).sum::<f64>() / n,
            t: obs.iter().map(|o| o.t).sum::<f64>() / n,
        }
    }

    fn vector(&self, o: &StObservation) -> [f64; 3] {
        [o.value - self.y, 1.0, o.t - self.t]
    }

    /// Intercept on the centered scale.
    fn centered_intercept(&self, trend: &TrendCoefficients) -> f64 {
        trend.a0 - self.y + trend.a1 * self.t
    }

    fn uncentered(&self, a0c: f64, a1: f64) -> TrendCoefficients {
        TrendCoefficients::new(a0c + self.y - a1 * self.t, a1)
    }
}

/// `const - weight·ln σ² - wᵀMw/(2σ²)` for a fixed correlation structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Moments {
    pub m: [[f64; 3]; 3],
    pub constant: f64,
    pub weight: f64,
    pub centering: Centering,
    pub has_slope: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Profile {
    pub trend: TrendCoefficients,
    pub sigma2: f64,
    pub loglik: f64,
}

impl Moments {
    fn quad(&self, a0c: f64, a1: f64) -> f64 {
        let w = [1.0, -a0c, -a1];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += w[i] * self.m[i][j] * w[j];
            }
        }
        q
    }

    pub fn loglik(&self, trend: &TrendCoefficients, sigma2: f64) -> f64 {
        let a0c = self.centering.centered_intercept(trend);
        self.constant - self.weight * sigma2.ln() - self.quad(a0c, trend.a1) / (2.0 * sigma2)
    }

    /// Maximize over trend and `σ²`.
    pub fn profile(&self) -> Result<Profile> {
        let m = &self.m;
        let (a0c, a1) = if self.has_slope {
            let det = m[1][1] * m[2][2] - m[1][2] * m[2][1];
            if !(det.abs() > 1e-300) {
                return Err(Error::Degenerate("trend design is singular".into()));
            }
            // b = -Mbb⁻¹ Mb0 with b = (-a0c, -a1).
            let b0 = -(m[2][2] * m[1][0] - m[1][2] * m[2][0]) / det;
            let b1 = -(-m[2][1] * m[1][0] + m[1][1] * m[2][0]) / det;
            (-b0, -b1)
        } else {
            (m[1][0] / m[1][1], 0.0)
        };
        let q = self.quad(a0c, a1);
        if !(q > 0.0) {
            return Err(Error::Degenerate("residual quadratic form is not positive".into()));
        }
        let sigma2 = q / (2.0 * self.weight);
        Ok(Profile {
            trend: self.centering.uncentered(a0c, a1),
            sigma2,
            loglik: self.constant - self.weight * sigma2.ln() - self.weight,
        })
    }
}

fn has_slope(obs: &[StObservation]) -> bool {
    obs.iter().any(|o| o.t != obs[0].t)
}

/// Visit every pair `i < j` with spatial distance `≤ h_max` and time lag
/// `|u| ≤ u_max` in a deterministic order.
pub fn for_each_pair<F>(obs: &[StObservation], h_max: f64, u_max: f64, mut f: F)
where
    F: FnMut(usize, usize, f64, f64),
{
    let cell = if h_max.is_finite() && h_max > 0.0 { h_max } else { f64::INFINITY };
    let key = |o: &StObservation| -> (i64, i64) {
        if cell.is_finite() {
            ((o.x / cell).floor() as i64, (o.y / cell).floor() as i64)
        } else {
            (0, 0)
        }
    };
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, o) in obs.iter().enumerate() {
        cells.entry(key(o)).or_default().push(i);
    }
    let mut keys: Vec<(i64, i64)> = cells.keys().copied().collect();
    keys.sort_unstable();
    for &ka in &keys {
        let a = &cells[&ka];
        for dx in -1..=1 {
            for dy in -1..=1 {
                let kb = (ka.0 + dx, ka.1 + dy);
                if kb < ka {
                    continue;
                }
                let Some(b) = cells.get(&kb) else { continue };
                for (ia, &i) in a.iter().enumerate() {
                    let start = if kb == ka { ia + 1 } else { 0 };
                    for &j in &b[start..] {
                        let (oi, oj) = (&obs[i], &obs[j]);
                        let u = oj.t - oi.t;
                        if u.abs() > u_max {
                            continue;
                        }
                        let h = (oi.x - oj.x).hypot(oi.y - oj.y);
                        if h <= h_max {
                            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                            f(lo, hi, h, (obs[hi].t - obs[lo].t).abs());
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct LagClass {
    h: f64,
    u: f64,
    count: usize,
    a: [[f64; 3]; 3],
    b: [[f64; 3]; 3],
}

/// Pairs grouped by exact `(h, |u|)`, with the per-class moment matrices
/// `A = Σ(v_i v_iᵀ + v_j v_jᵀ)` and `B = Σ sym(v_i v_jᵀ)` for `v = (y, 1, t)`.
#[derive(Debug, Clone)]
pub struct PairClasses {
    classes: Vec<LagClass>,
    n_pairs: usize,
    centering: Centering,
    has_slope: bool,
}

impl PairClasses {
    pub fn build(obs: &[StObservation], h_max: f64, u_max: f64) -> Result<Self> {
        if obs.len() < 2 {
            return Err(Error::Domain("at least two observations are required".into()));
        }
        let centering = Centering::of(obs);
        let vs: Vec<[f64; 3]> = obs.iter().map(|o| centering.vector(o)).collect();
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut classes: Vec<LagClass> = Vec::new();
        let mut n_pairs = 0;
        for_each_pair(obs, h_max, u_max, |i, j, h, u| {
            let k = *index.entry((h.to_bits(), u.to_bits())).or_insert_with(|| {
                classes.push(LagClass { h, u, count: 0, a: [[0.0; 3]; 3], b: [[0.0; 3]; 3] });
                classes.len() - 1
            });
            let c = &mut classes[k];
            c.count += 1;
            let (vi, vj) = (&vs[i], &vs[j]);
            for r in 0..3 {
                for s in 0..3 {
                    c.a[r][s] += vi[r] * vi[s] + vj[r] * vj[s];
                    c.b[r][s] += 0.5 * (vi[r] * vj[s] + vj[r] * vi[s]);
                }
            }
            n_pairs += 1;
        });
        if n_pairs == 0 {
            return Err(Error::Domain("no observation pairs fall within the cutoffs".into()));
        }
        classes.sort_by(|x, y| x.u.total_cmp(&y.u).then(x.h.total_cmp(&y.h)));
        Ok(Self { classes, n_pairs, centering, has_slope: has_slope(obs) })
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub(crate) fn moments(&self, model: &SpatioTemporalModel) -> Result<Moments> {
        let mut m = [[0.0; 3]; 3];
        let mut penalty = 0.0;
        for c in &self.classes {
            let r = model.correlation_unchecked(c.h, c.u);
            if !(r.abs() < 1.0 - SINGULAR_CORRELATION_MARGIN) {
                return Err(Error::Numerical(format!(
                    "pair correlation {r} at h = {}, u = {} is singular",
                    c.h, c.u
                )));
            }
            let d = 1.0 - r * r;
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += (c.a[i][j] - 2.0 * r * c.b[i][j]) / d;
                }
            }
            penalty += 0.5 * c.count as f64 * d.ln();
        }
        let n = self.n_pairs as f64;
        Ok(Moments {
            m,
            constant: -n * LN_2PI - penalty,
            weight: n,
            centering: self.centering,
            has_slope: self.has_slope,
        })
    }
}

#[derive(Debug, Clone)]
enum Layout {
    /// Every site observed at every time; `values[s + m·k]`.
    Separable { sites: Vec<(f64, f64)>, times: Vec<f64>, vectors: [Vec<f64>; 3] },
    Dense { points: Vec<(f64, f64, f64)>, vectors: [Vec<f64>; 3] },
}

/// Data prepared for the exact joint Gaussian likelihood.
#[derive(Debug, Clone)]
pub struct FullData {
    layout: Layout,
    n: usize,
    centering: Centering,
    has_slope: bool,
}

fn separable_layout(obs: &[StObservation], centering: &Centering) -> Option<Layout> {
    let mut site_ix: HashMap<(u64, u64), usize> = HashMap::new();
    let mut time_ix: HashMap<u64, usize> = HashMap::new();
    let mut sites = Vec::new();
    let mut times = Vec::new();
    for o in obs {
        site_ix.entry((o.x.to_bits(), o.y.to_bits())).or_insert_with(|| {
            sites.push((o.x, o.y));
            sites.len() - 1
        });
        time_ix.entry(o.t.to_bits()).or_insert_with(|| {
            times.push(o.t);
            times.len() - 1
        });
    }
    let (m, nt) = (sites.len(), times.len());
    if m * nt != obs.len() || m > FULL_SEPARABLE_SITE_LIMIT {
        return None;
    }
    let mut seen = vec![false; m * nt];
    let mut vectors = [vec![0.0; m * nt], vec![0.0; m * nt], vec![0.0; m * nt]];
    for o in obs {
        let k = site_ix[&(o.x.to_bits(), o.y.to_bits())] + m * time_ix[&o.t.to_bits()];
        if seen[k] {
            return None;
        }
        seen[k] = true;
        let v = centering.vector(o);
        for c in 0..3 {
            vectors[c][k] = v[c];
        }
    }
    Some(Layout::Separable { sites, times, vectors })
}

impl FullData {
    pub fn new(obs: &[StObservation]) -> Result<Self> {
        if obs.len() < 2 {
            return Err(Error::Domain("at least two observations are required".into()));
        }
        let centering = Centering::of(obs);
        let layout = match separable_layout(obs, &centering) {
            Some(l) => l,
            None => {
                let mut vectors = [Vec::new(), Vec::new(), Vec::new()];
                for o in obs {
                    let v = centering.vector(o);
                    for c in 0..3 {
                        vectors[c].push(v[c]);
                    }
                }
                Layout::Dense { points: obs.iter().map(|o| (o.x, o.y, o.t)).collect(), vectors }
            }
        };
        Ok(Self { layout, n: obs.len(), centering, has_slope: has_slope(obs) })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub(crate) fn moments(&self, model: &SpatioTemporalModel) -> Result<Moments> {
        let unit = model.with_sigma2(1.0);
        let (whitened, log_det) = match (&self.layout, unit) {
            (Layout::Separable { sites, times, vectors }, SpatioTemporalModel::ExponentialSeparable { .. }) => {
                separable_whiten(sites, times, vectors, &unit)?
            }
            (Layout::Separable { sites, times, vectors }, _) => {
                let points: Vec<(f64, f64, f64)> =
                    times.iter().flat_map(|&t| sites.iter().map(move |&(x, y)| (x, y, t))).collect();
                dense_whiten(&points, vectors, &unit)?
            }
            (Layout::Dense { points, vectors }, _) => dense_whiten(points, vectors, &unit)?,
        };
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = crate::linalg::dot(&whitened[i], &whitened[j]);
            }
        }
        let n = self.n as f64;
        Ok(Moments {
            m,
            constant: -0.5 * n * LN_2PI - 0.5 * log_det,
            weight: 0.5 * n,
            centering: self.centering,
            has_slope: self.has_slope,
        })
    }
}

fn dense_whiten(
    points: &[(f64, f64, f64)],
    vectors: &[Vec<f64>; 3],
    unit: &SpatioTemporalModel,
) -> Result<([Vec<f64>; 3], f64)> {
    let n = points.len();
    if n > FULL_DENSE_LIMIT {
        return Err(Error::SizeGuard { size: n, limit: FULL_DENSE_LIMIT });
    }
    let r = crate::randomfield::assemble_st_points(points, unit)?;
    let l = Cholesky::factor(&r, n, PivotPolicy::Strict)?;
    let mut out = vectors.clone();
    for v in out.iter_mut() {
        l.forward_substitute(v)?;
    }
    Ok((out, l.log_det()))
}

/// Whitening by `(L_t ⊗ L_s)⁻¹` for the separable exponential model.
fn separable_whiten(
    sites: &[(f64, f64)],
    times: &[f64],
    vectors: &[Vec<f64>; 3],
    unit: &SpatioTemporalModel,
) -> Result<([Vec<f64>; 3], f64)> {
    let (m, nt) = (sites.len(), times.len());
    let mut rs = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let h = (sites[i].0 - sites[j].0).hypot(sites[i].1 - sites[j].1);
            rs[i * m + j] = unit.correlation_unchecked(h, 0.0);
        }
    }
    let mut rt = vec![0.0; nt * nt];
    for k in 0..nt {
        for l in 0..nt {
            rt[k * nt + l] = unit.correlation_unchecked(0.0, times[k] - times[l]);
        }
    }
    let ls = Cholesky::factor(&rs, m, PivotPolicy::Strict)?;
    let lt = Cholesky::factor(&rt, nt, PivotPolicy::Strict)?;
    let mut out = vectors.clone();
    let mut row = vec![0.0; nt];
    for v in out.iter_mut() {
        for k in 0..nt {
            ls.forward_substitute(&mut v[k * m..(k + 1) * m])?;
        }
        for s in 0..m {
            for k in 0..nt {
                row[k] = v[s + m * k];
            }
            lt.forward_substitute(&mut row)?;
            for k in 0..nt {
                v[s + m * k] = row[k];
            }
        }
    }
    Ok((out, nt as f64 * ls.log_det() + m as f64 * lt.log_det()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obs(points: &[(f64, f64, f64, f64)]) -> Vec<StObservation> {
        points.iter().map(|&(x, y, t, value)| StObservation { x, y, t, value }).collect()
    }

    #[test]
    fn pair_enumeration_matches_brute_force() {
        let mut o = Vec::new();
        for i in 0..7 {
            for j in 0..5 {
                for t in 1..=3 {
                    o.push(StObservation { x: i as f64 * 0.7, y: j as f64 * 1.3, t: t as f64, value: 0.0 });
                }
            }
        }
        for &(hm, um) in &[(1.0, 0.0), (2.5, 1.0), (100.0, 5.0), (0.1, 2.0)] {
            let mut got = Vec::new();
            for_each_pair(&o, hm, um, |i, j, _, _| got.push((i, j)));
            got.sort_unstable();
            let mut want = Vec::new();
            for i in 0..o.len() {
                for j in i + 1..o.len() {
                    let h = (o[i].x - o[j].x).hypot(o[i].y - o[j].y);
                    if h <= hm && (o[i].t - o[j].t).abs() <= um {
                        want.push((i, j));
                    }
                }
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn separable_and_dense_paths_agree() {
        let mut o = Vec::new();
        let mut v = 0.3;
        for t in 1..=3 {
            for r in 0..4 {
                for c in 0..4 {
                    v = (v * 3.7 + 0.11) % 1.0;
                    o.push(StObservation { x: c as f64 + 1.0, y: r as f64 + 1.0, t: t as f64, value: v });
                }
            }
        }
        let model = SpatioTemporalModel::exponential(1.0, 2.0, 1.5);
        let sep = FullData::new(&o).unwrap();
        assert!(matches!(sep.layout, Layout::Separable { .. }));
        let dense = FullData {
            layout: Layout::Dense {
                points: o.iter().map(|p| (p.x, p.y, p.t)).collect(),
                vectors: match &sep.layout {
                    Layout::Separable { vectors, .. } => vectors.clone(),
                    _ => unreachable!(),
                },
            },
            ..sep.clone()
        };
        let a = sep.moments(&model).unwrap();
        let b = dense.moments(&model).unwrap();
        assert_relative_eq!(a.constant, b.constant, max_relative = 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(a.m[i][j], b.m[i][j], max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn profile_recovers_exact_trend() {
        let o = obs(&[(1.0, 1.0, 1.0, 0.4), (2.0, 1.0, 2.0, 0.3 + 1e-3), (1.0, 2.0, 3.0, 0.2), (2.0, 2.0, 4.0, 0.1)]);
        let pc = PairClasses::build(&o, 10.0, 10.0).unwrap();
        let p = pc.moments(&SpatioTemporalModel::exponential(1.0, 1.0, 1.0)).unwrap().profile().unwrap();
        assert!((p.trend.a1 + 0.1).abs() < 1e-3);
        assert!(p.sigma2 > 0.0);
    }
}
