//! Hurst exponent estimators and the preprocessing they rely on.
//!
//! * [`hurst_fbm`]: log-log slope of quadratic variations (pure fBm model).
//! * [`hurst_mixed`]: closed-form three-scale solution of the mixed model
//!   `q(τ) = a τ + b τ^{2H}`.
//! * [`hurst_volume`]: least-squares fit of fractional Gaussian noise
//!   autocovariances to the increments of a binned volume rate.
//!
//! All estimators work on increments, so the starting level of the input
//! path never matters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::fgn_autocovariance;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FbmQv,
    MixedQv,
    VolumeAcf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub method: Method,
    #[serde(rename = "H_hat")]
    pub h_hat: Option<f64>,
    pub degenerate: bool,
    pub reason: Option<String>,
    /// Optimum on the edge of the search range.
    pub boundary: bool,
    pub auxiliary: BTreeMap<String, f64>,
}

impl EstimateReport {
    fn ok(method: Method, h: f64, auxiliary: BTreeMap<String, f64>) -> Self {
        Self { schema_version: SCHEMA_VERSION, method, h_hat: Some(h), degenerate: false, reason: None, boundary: false, auxiliary }
    }

    fn degenerate(method: Method, reason: impl Into<String>, auxiliary: BTreeMap<String, f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            method,
            h_hat: None,
            degenerate: true,
            reason: Some(reason.into()),
            boundary: false,
            auxiliary,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Mean squared increment at `lag`: `(1/(n-lag)) Σ (x_{i+lag} - x_i)²`.
pub fn qv(series: &[f64], lag: usize) -> Result<f64> {
    if lag == 0 || series.len() <= lag {
        return Err(Error::Length(format!("need lag ≥ 1 and more than {lag} points, got {}", series.len())));
    }
    let m = series.len() - lag;
    Ok((0..m).map(|i| (series[i + lag] - series[i]).powi(2)).sum::<f64>() / m as f64)
}

/// Least-squares slope of `log qv(lag)` on `log lag`, halved.
pub fn hurst_fbm(series: &[f64], lags: &[usize]) -> Result<EstimateReport> {
    if lags.len() < 2 {
        return Err(Error::Length("need at least two lags".into()));
    }
    let mut aux = BTreeMap::new();
    let mut pts = Vec::with_capacity(lags.len());
    for &lag in lags {
        let q = qv(series, lag)?;
        aux.insert(format!("qv_{lag}"), q);
        if q <= 0.0 {
            return Ok(EstimateReport::degenerate(Method::FbmQv, format!("zero quadratic variation at lag {lag}"), aux));
        }
        pts.push(((lag as f64).ln(), q.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Length("lags must not all be equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    aux.insert("slope".into(), slope);
    Ok(EstimateReport::ok(Method::FbmQv, slope / 2.0, aux))
}

/// Mixed-model estimate from quadratic variations at `Δ`, `2Δ`, `4Δ`.
pub fn hurst_mixed(series: &[f64], delta: usize) -> Result<EstimateReport> {
    if delta == 0 || series.len() < 16 * delta {
        return Err(Error::Length(format!("need at least {} points for delta {delta}", 16 * delta)));
    }
    let q1 = qv(series, delta)?;
    let q2 = qv(series, 2 * delta)?;
    let q4 = qv(series, 4 * delta)?;
    Ok(hurst_mixed_from_qv(q1, q2, q4, delta as f64))
}

/// Closed form on given quadratic variations at time lags `Δ, 2Δ, 4Δ`.
///
/// Under `q(τ) = a τ + b τ^{2H}` the ratio `(q₄ - 2q₂)/(q₂ - 2q₁)` equals
/// `2^{2H}`; `a` and `b` follow by back-substitution.
pub fn hurst_mixed_from_qv(q1: f64, q2: f64, q4: f64, delta: f64) -> EstimateReport {
    let mut aux = BTreeMap::from([("q1".to_string(), q1), ("q2".to_string(), q2), ("q4".to_string(), q4)]);
    let den = q2 - 2.0 * q1;
    if !(den > 0.0) {
        return EstimateReport::degenerate(Method::MixedQv, "q(2Δ) - 2q(Δ) ≤ 0: no fractional component at this scale", aux);
    }
    let ratio = (q4 - 2.0 * q2) / den;
    aux.insert("ratio".into(), ratio);
    if !(ratio > 1.0) {
        return EstimateReport::degenerate(Method::MixedQv, "scale ratio ≤ 1", aux);
    }
    let h = 0.5 * ratio.log2();
    let d2h = delta.powf(2.0 * h);
    let b = den / (d2h * (2f64.powf(2.0 * h) - 2.0));
    let a = (q1 - b * d2h) / delta;
    aux.insert("sigma_h_sq".into(), b);
    aux.insert("sigma_w_sq".into(), a);
    EstimateReport::ok(Method::MixedQv, h, aux)
}

/// Matrix of day rows by intraday-bin columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Deseasonalized {
    pub values: Vec<Vec<f64>>,
    /// Columns whose across-day mean is zero (left untouched).
    pub zero_columns: Vec<usize>,
}

/// Divides each intraday column by its mean across days.
pub fn deseasonalize(bins: &[Vec<f64>]) -> Result<Deseasonalized> {
    if bins.len() < 5 {
        return Err(Error::Shape(format!("need at least 5 days, got {}", bins.len())));
    }
    let width = bins[0].len();
    if width == 0 || bins.iter().any(|r| r.len() != width) {
        return Err(Error::Shape("rows must be nonempty and of equal length".into()));
    }
    if bins.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(Error::Shape("volumes must be nonnegative".into()));
    }
    let days = bins.len() as f64;
    let means: Vec<f64> = (0..width).map(|j| bins.iter().map(|r| r[j]).sum::<f64>() / days).collect();
    let zero_columns = (0..width).filter(|&j| means[j] == 0.0).collect();
    let values = bins
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| if *m == 0.0 { *v } else { v / m }).collect())
        .collect();
    Ok(Deseasonalized { values, zero_columns })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub values: Vec<f64>,
    pub clipped: usize,
}

/// Clips to `±c·sd` with `sd` the sample standard deviation.
pub fn truncate_outliers(increments: &[f64], c: f64) -> Result<Truncated> {
    if increments.is_empty() {
        return Err(Error::Length("nothing to truncate".into()));
    }
    let n = increments.len() as f64;
    let mean = increments.iter().sum::<f64>() / n;
    let sd = if increments.len() > 1 {
        (increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let bound = c * sd;
    let mut clipped = 0;
    let values = increments
        .iter()
        .map(|&x| {
            if x.abs() > bound {
                clipped += 1;
                bound.copysign(x)
            } else {
                x
            }
        })
        .collect();
    Ok(Truncated { values, clipped })
}

const H_MIN: f64 = 0.01;
const H_MAX: f64 = 0.49;
const H_STEP: f64 = 0.005;

/// Empirical autocovariances of `x` (mean removed) at lags `0..=max_lag`.
pub fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    (0..=max_lag).map(|k| (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / n as f64).collect()
}

/// Fits `σ² γ_H(k)` to the autocovariances of `increments` at lags
/// `0..=max_lag` over `H ∈ [0.01, 0.49]`, with `σ²` in closed form per `H`.
pub fn hurst_volume(increments: &[f64], max_lag: usize) -> Result<EstimateReport> {
    if max_lag < 4 {
        return Err(Error::Length(format!("max_lag must be at least 4, got {max_lag}")));
    }
    if increments.len() <= 2 * max_lag {
        return Err(Error::Length(format!("need more than {} increments", 2 * max_lag)));
    }
    let acov = autocovariances(increments, max_lag);
    let mut aux = BTreeMap::new();
    aux.insert("acov_0".into(), acov[0]);
    if !(acov[0] > 0.0) {
        return Ok(EstimateReport::degenerate(Method::VolumeAcf, "zero lag-0 autocovariance", aux));
    }
    let steps = ((H_MAX - H_MIN) / H_STEP).round() as usize;
    let mut best = (f64::INFINITY, H_MIN, 0.0);
    for s in 0..=steps {
        let h = H_MIN + s as f64 * H_STEP;
        let model: Vec<f64> = (0..=max_lag).map(|k| fgn_autocovariance(h, k as f64)).collect();
        let num: f64 = model.iter().zip(&acov).map(|(m, c)| m * c).sum();
        let den: f64 = model.iter().map(|m| m * m).sum();
        let sigma2 = (num / den).max(0.0);
        let sse: f64 = model.iter().zip(&acov).map(|(m, c)| (sigma2 * m - c).powi(2)).sum();
        if sse < best.0 {
            best = (sse, h, sigma2);
        }
    }
    let (sse, h, sigma2) = best;
    aux.insert("sigma".into(), sigma2.sqrt());
    aux.insert("sse".into(), sse);
    let mut report = EstimateReport::ok(Method::VolumeAcf, h, aux);
    report.boundary = (h - H_MIN).abs() < 1e-9 || (h - H_MAX).abs() < 1e-9;
    Ok(report)
}

/// Full volume pipeline on a cumulative volume path: per-bin volumes at
/// `delta` points, their increments, `c·sd` truncation, autocovariance fit.
pub fn hurst_volume_from_path(cumulative: &[f64], delta: usize, max_lag: usize, c: f64) -> Result<EstimateReport> {
    if delta == 0 {
        return Err(Error::Length("delta must be positive".into()));
    }
    let binned: Vec<f64> = cumulative.iter().step_by(delta).copied().collect();
    let volumes: Vec<f64> = binned.windows(2).map(|w| w[1] - w[0]).collect();
    let inc: Vec<f64> = volumes.windows(2).map(|w| w[1] - w[0]).collect();
    if inc.is_empty() {
        return Err(Error::Length("path too short for the bin size".into()));
    }
    let t = truncate_outliers(&inc, c)?;
    let mut report = hurst_volume(&t.values, max_lag)?;
    report.auxiliary.insert("clipped".into(), t.clipped as f64);
    Ok(report)
}

/// Mean of the non-degenerate per-day estimates. Days are estimated
/// separately because overnight gaps break the increment structure.
pub fn average_over_days(method: Method, days: &[EstimateReport]) -> EstimateReport {
    let good: Vec<f64> = days.iter().filter_map(|r| r.h_hat).collect();
    let mut aux = BTreeMap::from([
        ("days".to_string(), days.len() as f64),
        ("degenerate_days".to_string(), (days.len() - good.len()) as f64),
    ]);
    if good.is_empty() {
        return EstimateReport::degenerate(method, "no day gave an estimate", aux);
    }
    let n = good.len() as f64;
    let mean = good.iter().sum::<f64>() / n;
    if good.len() > 1 {
        let sd = (good.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        aux.insert("H_sd_across_days".into(), sd);
    }
    let mut report = EstimateReport::ok(method, mean, aux);
    report.boundary = days.iter().any(|r| r.boundary);
    report
}
