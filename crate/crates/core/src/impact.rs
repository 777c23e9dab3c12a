//! Propagator prices, analytic impact curves and the metaorder experiment.
//!
//! Prices are linear in the order flow: every event of sign `ε` at time
//! `s` moves the price by `κ ε ξ(t - s)`. The decay kernel `ξ` is chosen so
//! that the price is a martingale. An event's price weight is one for the
//! event itself plus the expected signed size of everything its not yet
//! born direct children will still trigger:
//!
//! ```text
//! R      = 1 / (1 - a₁‖k₂‖)
//! ξ_R(u) = 1 + a₁ R K₂(u)                          (reaction events)
//! ξ_C(u) = ξ_R(u) + a₀ R Φ̄₀(u) / (1 - a₀)          (core events)
//! ```
//!
//! with `K₂(u) = ∫_u^∞ k₂` and `Φ̄₀(u) = ∫_u^∞ φ₀`. Both start at the total
//! expected cluster weight and decay to one, the permanent component.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridKernel, PathGrid, UniformGrid};
use crate::hawkes::{simulate_injected, EventStream, Mark, TwoLayerParams, INJECTION_STREAM};
use crate::kernels::{KernelMatrixSpec, KernelSpec};
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, PartialEq)]
enum Decay {
    /// One kernel for every event; power-law continuation past the grid.
    Tabulated { xi: GridKernel, tail_alpha: Option<f64> },
    TwoLayer { a0: f64, core: KernelSpec, a1: f64, reaction: KernelMatrixSpec },
}

/// Decay kernel `ξ` and permanent impact coefficient `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorSpec {
    pub kappa: f64,
    decay: Decay,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParams(format!("kappa must be positive, got {kappa}")));
    }
    Ok(())
}

impl PropagatorSpec {
    /// Martingale propagator of the two-layer model, evaluated from the
    /// closed-form kernel tails.
    pub fn two_layer(params: &TwoLayerParams, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self {
            kappa,
            decay: Decay::TwoLayer {
                a0: params.a0,
                core: params.core_kernel.clone(),
                a1: params.a1,
                reaction: params.reaction.clone(),
            },
        })
    }

    /// `ξ` applied to an event of type `mark` at lag `u ≥ 0`.
    pub fn xi(&self, mark: Mark, u: f64) -> f64 {
        match &self.decay {
            Decay::TwoLayer { a0, core, a1, reaction } => {
                let r = 1.0 / (1.0 - a1 * reaction.imbalance());
                let k2_tail = reaction.same_mass * reaction.same.tail(u) - reaction.cross_mass * reaction.cross.tail(u);
                let react = 1.0 + a1 * r * k2_tail;
                if mark.is_core() {
                    react + a0 * r * core.tail(u) / (1.0 - a0)
                } else {
                    react
                }
            }
            Decay::Tabulated { xi, tail_alpha } => {
                let grid = xi.grid;
                let v = &xi.values;
                let x = u.max(0.0) / grid.step;
                let i = x.floor() as usize;
                if i + 1 < v.len() {
                    let w = x - i as f64;
                    v[i] + w * (v[i + 1] - v[i])
                } else {
                    let last = v[v.len() - 1];
                    match tail_alpha {
                        Some(alpha) => {
                            1.0 + (last - 1.0) * ((1.0 + u) / (1.0 + grid.horizon())).powf(-alpha)
                        }
                        None => 1.0,
                    }
                }
            }
        }
    }

    /// `ξ` for `mark` sampled on `grid`.
    pub fn xi_on(&self, mark: Mark, grid: UniformGrid) -> GridKernel {
        GridKernel::sample(grid, |u| self.xi(mark, u))
    }
}

/// Propagator from a tabulated signed kernel `k₂` with branching ratio `a`:
/// `ξ(t) = 1 + a R ∫_t^∞ k₂` with `R = 1/(1 - a‖k₂‖₁)`.
///
/// The integral past the grid horizon `H` is continued analytically as
/// `k₂(H)(1 + H)/α` for a tail `∝ (1 + t)^{-1-α}`; `None` treats `k₂` as
/// zero beyond the grid.
pub fn propagator_kernel(k2: &GridKernel, a: f64, tail_alpha: Option<f64>, kappa: f64) -> Result<PropagatorSpec> {
    check_kappa(kappa)?;
    if !(a >= 0.0) {
        return Err(Error::InvalidParams(format!("branching ratio must be nonnegative, got {a}")));
    }
    if let Some(alpha) = tail_alpha {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParams(format!("tail exponent must be positive, got {alpha}")));
        }
    }
    let h = k2.grid.step;
    let v = &k2.values;
    let n = v.len();
    let beyond = tail_alpha.map_or(0.0, |alpha| v[n - 1] * (1.0 + k2.grid.horizon()) / alpha);
    let mut tail = vec![0.0; n];
    tail[n - 1] = beyond;
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * h * (v[i] + v[i + 1]);
    }
    let mass = a * tail[0];
    if !(mass < 1.0) {
        return Err(Error::InvalidParams(format!("a·‖k₂‖ = {mass} is not below one")));
    }
    let r = 1.0 / (1.0 - mass);
    let xi = GridKernel { grid: k2.grid, values: tail.iter().map(|t| 1.0 + a * r * t).collect() };
    Ok(PropagatorSpec { kappa, decay: Decay::Tabulated { xi, tail_alpha } })
}

/// `P_t - P₀ = κ Σ_{s ≤ t} ε_s ξ(t - s)` on the grid, column `price`.
pub fn price_path(stream: &EventStream, prop: &PropagatorSpec, grid: &UniformGrid) -> PathGrid {
    let values: Vec<f64> = grid
        .times()
        .par_iter()
        .map(|&t| {
            let end = stream.times.partition_point(|s| *s <= t);
            let sum: f64 = stream.times[..end]
                .iter()
                .zip(&stream.marks[..end])
                .map(|(s, m)| m.sign() * prop.xi(*m, t - s))
                .sum();
            prop.kappa * sum
        })
        .collect();
    PathGrid::on(grid).with("price", values).expect("single column")
}

/// Normalized impact curve `t^{2-2H₀}` on `[0, 1]` and
/// `t^{2-2H₀} - (t - 1)^{2-2H₀}` afterwards, column `impact`.
pub fn mi_curve(h0: f64, grid: &UniformGrid) -> Result<PathGrid> {
    check_h0(h0)?;
    let values = grid.times().iter().map(|&t| mi_value(h0, t)).collect();
    PathGrid::on(grid).with("impact", values)
}

/// Single point of [`mi_curve`]; `h0` is not checked.
pub fn mi_value(h0: f64, t: f64) -> f64 {
    let e = 2.0 - 2.0 * h0;
    if t <= 0.0 {
        0.0
    } else if t <= 1.0 {
        t.powf(e)
    } else {
        t.powf(e) - (t - 1.0).powf(e)
    }
}

fn check_h0(h0: f64) -> Result<()> {
    if !(0.75..1.0).contains(&h0) {
        return Err(Error::Domain(format!("H0 must lie in [3/4, 1), got {h0}")));
    }
    Ok(())
}

/// Hurst exponent `2H₀ - 3/2` of the volatility.
pub fn vol_hurst(h0: f64) -> Result<f64> {
    check_h0(h0)?;
    Ok(2.0 * h0 - 1.5)
}

/// Exponents implied by a core persistence `H₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub h0: f64,
    /// Impact growth `2 - 2H₀`.
    pub impact: f64,
    /// Volume roughness `H₀ - 1/2`.
    pub volume: f64,
    /// Volatility roughness `2H₀ - 3/2`.
    pub volatility: f64,
}

pub fn exponents(h0: f64) -> Result<Exponents> {
    check_h0(h0)?;
    Ok(Exponents { h0, impact: 2.0 - 2.0 * h0, volume: h0 - 0.5, volatility: vol_hurst(h0)? })
}

/// How metaorder child orders enter the market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Core events with core children, like any other core order.
    Core,
    /// No core children; the orders still trigger reactions.
    Exogenous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaorderSpec {
    pub rate: f64,
    pub duration: f64,
    pub horizon: f64,
    pub paths: usize,
    /// Grid step in units of `duration`.
    pub step: f64,
    pub injection: Injection,
}

impl MetaorderSpec {
    pub fn new(rate: f64, duration: f64, horizon: f64, paths: usize) -> Self {
        Self { rate, duration, horizon, paths, step: 0.05, injection: Injection::Core }
    }
}

pub const MIN_PAIRS: usize = 100;
const FIT_RANGE: (f64, f64) = (0.1, 1.0);
const MAX_RELATIVE_STDERR: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaorderResult {
    /// Time in units of `duration`; columns `impact` and `stderr`.
    pub curve: PathGrid,
    /// Slope of `log impact` on `log t` over `t ∈ [0.1, 1]`.
    pub exponent: Option<f64>,
    pub peak: f64,
    pub max_stderr: f64,
}

/// Average price impact of a constant-rate buy metaorder.
///
/// Pair `m` uses seed `derive_seed(seed, m)` for both the baseline and
/// the metaorder path. The injected clusters live on random streams
/// disjoint from the baseline, so the metaorder path is the baseline plus
/// those clusters and, prices being linear in the flow, the matched-pair
/// difference is exactly the price of the injected clusters alone.
pub fn metaorder_experiment(
    params: &TwoLayerParams,
    prop: &PropagatorSpec,
    spec: &MetaorderSpec,
    seed: u64,
) -> Result<MetaorderResult> {
    let MetaorderSpec { rate, duration, horizon, paths, step, injection } = *spec;
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParams(format!("rate must be nonnegative, got {rate}")));
    }
    if !(duration > 0.0 && duration <= horizon / 2.0) {
        return Err(Error::InvalidParams(format!("duration must lie in (0, T/2], got {duration} with T = {horizon}")));
    }
    if paths < MIN_PAIRS {
        return Err(Error::InsufficientPaths(format!("need at least {MIN_PAIRS} pairs, got {paths}")));
    }
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::InvalidParams(format!("normalized step must lie in (0, 0.1], got {step}")));
    }
    let t_max = (horizon / duration).min(3.0);
    let n_steps = (t_max / step + 1e-9).floor() as usize;
    let grid = UniformGrid::new(step * duration, n_steps)?;

    let curves: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|m| -> Result<Vec<f64>> {
            let pair_seed = derive_seed(seed, m);
            let times = injection_times(rate, duration, pair_seed);
            let stream = simulate_injected(params, horizon, pair_seed, &times, injection == Injection::Core)?;
            Ok(price_path(&stream, prop, &grid).series("price")?.to_vec())
        })
        .collect::<Result<_>>()?;

    let n = grid.len();
    let m = paths as f64;
    let mut mean = vec![0.0; n];
    let mut stderr = vec![0.0; n];
    for i in 0..n {
        let mu = curves.iter().map(|c| c[i]).sum::<f64>() / m;
        let var = curves.iter().map(|c| (c[i] - mu).powi(2)).sum::<f64>() / (m - 1.0);
        mean[i] = mu;
        stderr[i] = (var / m).sqrt();
    }
    let peak = mean.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let max_stderr = stderr.iter().fold(0.0f64, |acc, v| acc.max(*v));
    if max_stderr > MAX_RELATIVE_STDERR * peak {
        return Err(Error::InsufficientPaths(format!(
            "standard error {max_stderr:.4e} exceeds 20% of the peak {peak:.4e}"
        )));
    }
    let exponent = fit_exponent(&grid, step, &mean);
    let curve = PathGrid::new(0.0, step).with("impact", mean)?.with("stderr", stderr)?;
    Ok(MetaorderResult { curve, exponent, peak, max_stderr })
}

/// Poisson arrivals of intensity `rate` on `[0, duration]`.
fn injection_times(rate: f64, duration: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, INJECTION_STREAM);
    let count = if rate > 0.0 { Poisson::new(rate * duration).map_or(0.0, |d| d.sample(&mut rng)) as usize } else { 0 };
    let mut times: Vec<f64> = (0..count).map(|_| duration * rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    times
}

fn fit_exponent(grid: &UniformGrid, step: f64, curve: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (0..grid.len())
        .map(|i| (i as f64 * step, curve[i]))
        .filter(|(t, v)| *t >= FIT_RANGE.0 - 1e-9 && *t <= FIT_RANGE.1 + 1e-9 && *v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    log_log_slope(&pts)
}

pub(crate) fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Lag-`k` autocorrelations `Σ x_i x_{i+k} / Σ x_i²` of the increments of
/// a price path, for `k = 1..=max_lag`. Increments have mean zero by
/// buy/sell symmetry, so no mean is removed.
pub fn increment_autocorrelations(prices: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if prices.len() < max_lag + 3 {
        return Err(Error::Length(format!("need more than {} prices", max_lag + 2)));
    }
    let inc: Vec<f64> = prices.windows(2).map(|w| w[1] - w[0]).collect();
    let energy: f64 = inc.iter().map(|x| x * x).sum();
    if energy == 0.0 {
        return Ok(vec![0.0; max_lag]);
    }
    Ok((1..=max_lag).map(|k| inc.iter().zip(&inc[k..]).map(|(a, b)| a * b).sum::<f64>() / energy).collect())
}
