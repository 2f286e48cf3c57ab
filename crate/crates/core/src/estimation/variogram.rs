//! Ordinary least-squares detrending and method-of-moments variograms.

use std::collections::BTreeMap;

use crate::agreement::TrendCoefficients;
use crate::error::{Error, Result};
use crate::randomfield::StObservation;

use super::likelihood::for_each_pair;

/// Least-squares line through `(t, value)` pairs and its residuals.
pub fn ols_detrend(series: &[(f64, f64)]) -> Result<(TrendCoefficients, Vec<f64>)> {
    if series.len() < 2 {
        return Err(Error::Degenerate("at least two points are required".into()));
    }
    let n = series.len() as f64;
    let tm = series.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = series.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = series.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(Error::Degenerate("all time values are equal".into()));
    }
    let sty: f64 = series.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let a1 = sty / stt;
    let trend = TrendCoefficients::new(ym - a1 * tm, a1);
    let residuals = series.iter().map(|&(t, y)| y - trend.mean(t)).collect();
    Ok((trend, residuals))
}

/// Replace each value by its residual from an OLS fit on time.
pub fn detrend_field(obs: &[StObservation]) -> Result<(TrendCoefficients, Vec<StObservation>)> {
    let series: Vec<(f64, f64)> = obs.iter().map(|o| (o.t, o.value)).collect();
    let (trend, res) = ols_detrend(&series)?;
    let out = obs.iter().zip(res).map(|(o, r)| StObservation { value: r, ..*o }).collect();
    Ok((trend, out))
}

/// Binning of spatial distance and time lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramBins {
    /// Width of the spatial bins; bin `k` collects `round(h / width) = k`.
    pub h_width: f64,
    pub h_max: f64,
    /// Largest absolute time lag; time lags are binned by `round(|u|)`.
    pub u_max: f64,
}

/// One bin of an empirical variogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramBin {
    /// Mean spatial distance of the pairs in the bin.
    pub h: f64,
    pub u: f64,
    pub semivariance: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariogramEstimate {
    pub bins: Vec<VariogramBin>,
}

pub const VARIOGRAM_HEADER: &str = "h,u,semivariance,count";

impl VariogramEstimate {
    /// Bins at time lag 0.
    pub fn spatial_marginal(&self) -> Vec<VariogramBin> {
        self.bins.iter().copied().filter(|b| b.u == 0.0).collect()
    }

    /// Bins in the zero-distance class.
    pub fn temporal_marginal(&self) -> Vec<VariogramBin> {
        self.bins.iter().copied().filter(|b| b.h == 0.0).collect()
    }

    pub fn write_table<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{VARIOGRAM_HEADER}")?;
        for b in &self.bins {
            writeln!(w, "{},{},{},{}", b.h, b.u, b.semivariance, b.count)?;
        }
        Ok(())
    }
}

/// `γ̂ = (1/2N) Σ (Y_i - Y_j)²` over pairs in each `(h, u)` bin; empty bins
/// are omitted. Rows are ordered by time lag, then distance.
pub fn empirical_variogram(obs: &[StObservation], bins: &VariogramBins) -> Result<VariogramEstimate> {
    if obs.len() < 2 {
        return Err(Error::Domain("at least two observations are required".into()));
    }
    if !(bins.h_width > 0.0) || !(bins.h_max >= 0.0) || !(bins.u_max >= 0.0) {
        return Err(Error::Domain("variogram bins need width > 0 and non-negative limits".into()));
    }
    // (u bin, h bin) -> (Σ h, Σ d², count)
    let mut acc: BTreeMap<(u64, u64), (f64, f64, usize)> = BTreeMap::new();
    for_each_pair(obs, bins.h_max, bins.u_max, |i, j, h, u| {
        let key = ((u.round()) as u64, (h / bins.h_width).round() as u64);
        let e = acc.entry(key).or_insert((0.0, 0.0, 0));
        e.0 += h;
        e.1 += (obs[i].value - obs[j].value).powi(2);
        e.2 += 1;
    });
    let bins = acc
        .into_iter()
        .map(|((u, _), (sh, sd, n))| VariogramBin {
            h: sh / n as f64,
            u: u as f64,
            semivariance: sd / (2.0 * n as f64),
            count: n,
        })
        .collect();
    Ok(VariogramEstimate { bins })
}
