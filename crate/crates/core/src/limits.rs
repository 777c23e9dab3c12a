//! Simulation of the macroscopic limit processes and of (mixed) fractional
//! Brownian motion.
//!
//! The core limit per side solves
//!
//! ```text
//! F±_t = ∫_0^t ϱ(u) du + c ∫_0^t ϱ(t - s) dZ±_s,    ⟨Z±⟩ = F±,
//! ```
//!
//! with `ϱ` the Mittag-Leffler distribution function and `c = (μ₀λ₀)^{-1/2}`.
//! On a grid, `F_k = g(t_k) + c Σ_{i≤k} ϱ̄_{k-i+1} ΔZ_i` where `g = ∫ϱ` is exact
//! and `ϱ̄_j` is the mean of `ϱ` over the lag cell `[(j-1) dt, j dt]`. Given
//! the past, the increment `ΔF_k = d_k + c ϱ̄_1 ΔZ_k` has a known drift `d_k`,
//! and the requirement `E[ΔZ_k²] = E[ΔF_k]` is met exactly by drawing `ΔF_k`
//! from the inverse Gaussian law with mean `d_k` and shape `d_k² / (c ϱ̄_1)²`.
//! Paths are nondecreasing by construction and the first moment matches the
//! deterministic part at every node.
//!
//! The reaction limit is simulated the same way with the sum martingale
//! `Z⁺ + Z⁻` (quadratic variation `2X`) driving `X`, and the difference
//! `Z⁺ - Z⁻` drawn as a conditionally Gaussian increment with variance `2ΔX`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, InverseGaussian, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::PathGrid;
use crate::kernels::KernelMatrixSpec;
use crate::rng::stream_rng;
use crate::scaling::LimitParams;
use crate::specialfn::{ml_cdf, ml_cdf_integral};

pub const MIN_STEPS: usize = 256;
const CHOLESKY_MAX: usize = 1024;

/// Random source for a Volterra simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Seeded(u64),
    /// Martingale terms forced to zero.
    Off,
}

/// Uniform grid on `[0, horizon]` with exact Mittag-Leffler cell weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraGrid {
    pub alpha: f64,
    pub lambda: f64,
    pub n_steps: usize,
    pub dt: f64,
    /// `ϱ(k dt)` for `k = 0..=n_steps`.
    cdf: Vec<f64>,
    /// `∫_0^{k dt} ϱ` for `k = 0..=n_steps`.
    cdf_integral: Vec<f64>,
    /// Mean of `ϱ` over `[(k-1) dt, k dt]`, index 0 unused.
    cell_mean: Vec<f64>,
}

impl VolterraGrid {
    pub fn new(alpha: f64, lambda: f64, n_steps: usize) -> Result<Self> {
        Self::with_horizon(alpha, lambda, n_steps, 1.0)
    }

    pub fn with_horizon(alpha: f64, lambda: f64, n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps < MIN_STEPS {
            return Err(Error::TooFewSteps(n_steps));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
        }
        let dt = horizon / n_steps as f64;
        let cdf = (0..=n_steps).map(|k| ml_cdf(alpha, lambda, k as f64 * dt)).collect::<Result<Vec<_>>>()?;
        let cdf_integral =
            (0..=n_steps).map(|k| ml_cdf_integral(alpha, lambda, k as f64 * dt)).collect::<Result<Vec<_>>>()?;
        let mut cell_mean = vec![0.0; n_steps + 1];
        for k in 1..=n_steps {
            cell_mean[k] = (cdf_integral[k] - cdf_integral[k - 1]) / dt;
        }
        Ok(Self { alpha, lambda, n_steps, dt, cdf, cdf_integral, cell_mean })
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Kernel mass of the cell `[(k-1) dt, k dt]`, `k ≥ 1`.
    pub fn weight(&self, k: usize) -> f64 {
        self.cdf[k] - self.cdf[k - 1]
    }

    pub fn cdf_at(&self, k: usize) -> f64 {
        self.cdf[k]
    }

    fn path(&self) -> PathGrid {
        PathGrid::new(0.0, self.dt)
    }
}

/// One nondecreasing Volterra component `Y_k = base_k + coef Σ_{i≤k} ϱ̄_{k-i+1} ΔM_i`
/// where `ΔM` is centered with conditional variance `scale² ΔY`.
/// Returns `(Y, ΔM)`.
fn volterra_component(
    grid: &VolterraGrid,
    base: &[f64],
    coef: f64,
    scale: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_steps;
    let mut y = vec![0.0; n + 1];
    let mut dm = vec![0.0; n + 1];
    y[0] = base[0];
    let kern = &grid.cell_mean;
    // martingale increments enter with the cell-averaged kernel at their own step
    let sigma = coef * scale * kern[1];
    for k in 1..=n {
        let mut conv = 0.0;
        for i in 1..k {
            conv += kern[k - i + 1] * dm[i];
        }
        let drift = base[k] + coef * conv - y[k - 1];
        let d = drift.max(0.0);
        let inc = match rng.as_deref_mut() {
            Some(r) if d > 0.0 && sigma > 0.0 => {
                InverseGaussian::new(d, d * d / (sigma * sigma)).map(|ig| ig.sample(r)).unwrap_or(d)
            }
            _ => d,
        };
        dm[k] = if sigma > 0.0 { (inc - drift) / (coef * kern[1]) } else { 0.0 };
        if rng.is_none() {
            dm[k] = 0.0;
        }
        y[k] = y[k - 1] + inc;
    }
    (y, dm)
}

fn cumulate(inc: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    inc.iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect()
}

/// Core limit. Columns: `F+`, `F-`, `F` (sum), `V` (difference),
/// `Z+`, `Z-` (driving martingales).
pub fn simulate_core_limit(mu0: f64, grid: &VolterraGrid, noise: Noise) -> Result<PathGrid> {
    if !(mu0 > 0.0) {
        return Err(Error::InvalidParams(format!("mu0 must be positive, got {mu0}")));
    }
    if !(grid.alpha > 0.25 && grid.alpha < 1.0) {
        return Err(Error::InvalidParams(format!("alpha0 must lie in (1/4, 1), got {}", grid.alpha)));
    }
    let coef = 1.0 / (mu0 * grid.lambda).sqrt();
    let base = &grid.cdf_integral;
    let mut sides = Vec::with_capacity(2);
    for stream in 0..2u64 {
        let mut rng = match noise {
            Noise::Seeded(seed) => Some(stream_rng(seed, stream)),
            Noise::Off => None,
        };
        sides.push(volterra_component(grid, base, coef, 1.0, rng.as_mut()));
    }
    let (plus, dz_plus) = &sides[0];
    let (minus, dz_minus) = &sides[1];
    debug_assert!(plus.windows(2).all(|w| w[1] >= w[0]) && minus.windows(2).all(|w| w[1] >= w[0]));
    let total: Vec<f64> = plus.iter().zip(minus).map(|(a, b)| a + b).collect();
    let diff: Vec<f64> = plus.iter().zip(minus).map(|(a, b)| a - b).collect();
    grid.path()
        .with("F+", plus.clone())?
        .with("F-", minus.clone())?
        .with("F", total)?
        .with("V", diff)?
        .with("Z+", cumulate(dz_plus))?
        .with("Z-", cumulate(dz_minus))
}

/// Reaction limit driven by the unsigned core limit `F` (column `F`).
///
/// Columns: `X`, `U` (= 2X), `Z+`, `Z-`, `Zdiff` (= Z+ - Z-).
pub fn simulate_reaction_limit(
    lambda1: f64,
    mu1: f64,
    core: &PathGrid,
    grid: &VolterraGrid,
    noise: Noise,
) -> Result<PathGrid> {
    if !(grid.alpha > 0.5 && grid.alpha < 1.0) {
        return Err(Error::InvalidParams(format!("alpha1 must lie in (1/2, 1), got {}", grid.alpha)));
    }
    if !(lambda1 > 0.0 && mu1 > 0.0) {
        return Err(Error::InvalidParams("lambda1 and mu1 must be positive".into()));
    }
    if (grid.lambda - lambda1).abs() > 1e-12 * lambda1 {
        return Err(Error::InvalidParams("grid rate differs from lambda1".into()));
    }
    let f = core.series("F")?;
    if f.len() != grid.len() || (core.step - grid.dt).abs() > 1e-12 * grid.dt {
        return Err(Error::GridMismatch(format!(
            "core path has {} points of step {}, grid has {} of step {}",
            f.len(),
            core.step,
            grid.len(),
            grid.dt
        )));
    }
    let n = grid.n_steps;
    // ½ ∫_0^t f(t-s) F_s ds with cell-averaged F
    let mut base = vec![0.0; n + 1];
    for (k, b) in base.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for i in 1..=k {
            acc += grid.weight(k - i + 1) * 0.5 * (f[i - 1] + f[i]);
        }
        *b = 0.5 * acc;
    }
    let coef = 1.0 / (2.0 * (lambda1 * mu1).sqrt());
    let mut rng = match noise {
        Noise::Seeded(seed) => Some(stream_rng(seed, 2)),
        Noise::Off => None,
    };
    // the sum martingale has quadratic variation 2X
    let (x, dsum) = volterra_component(grid, &base, coef, std::f64::consts::SQRT_2, rng.as_mut());
    let mut diff_rng = match noise {
        Noise::Seeded(seed) => Some(stream_rng(seed, 3)),
        Noise::Off => None,
    };
    let mut ddiff = vec![0.0; n + 1];
    if let Some(r) = diff_rng.as_mut() {
        for k in 1..=n {
            let z: f64 = r.sample(StandardNormal);
            ddiff[k] = z * (2.0 * (x[k] - x[k - 1])).sqrt();
        }
    }
    debug_assert!(x.windows(2).all(|w| w[1] >= w[0]));
    let sum = cumulate(&dsum);
    let zdiff = cumulate(&ddiff);
    let plus: Vec<f64> = sum.iter().zip(&zdiff).map(|(s, d)| 0.5 * (s + d)).collect();
    let minus: Vec<f64> = sum.iter().zip(&zdiff).map(|(s, d)| 0.5 * (s - d)).collect();
    let u: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    grid.path().with("X", x)?.with("U", u)?.with("Z+", plus)?.with("Z-", minus)?.with("Zdiff", zdiff)
}

/// Coefficients `(c₁, c₂)` of the signed limit `S = c₁ V + c₂ (Z⁺ - Z⁻)`.
pub fn signed_coefficients(lp: &LimitParams, matrix: &KernelMatrixSpec) -> (f64, f64) {
    signed_coefficients_from(lp.lambda1 * lp.mu1(), matrix.imbalance())
}

/// Same as [`signed_coefficients`] from `λ₁μ₁` and `‖φ₁‖₁ - ‖φ₂‖₁`.
pub fn signed_coefficients_from(lambda1_mu1: f64, imbalance: f64) -> (f64, f64) {
    let c2 = 1.0 / (1.0 - imbalance);
    (lambda1_mu1.sqrt() * imbalance * c2, c2)
}

/// Signed limit from the core path (column `V`) and the reaction path
/// (column `Zdiff`). Output column `S`.
pub fn simulate_signed_limit(
    lp: &LimitParams,
    matrix: &KernelMatrixSpec,
    core: &PathGrid,
    reaction: &PathGrid,
) -> Result<PathGrid> {
    if !core.same_grid(reaction) {
        return Err(Error::GridMismatch("core and reaction paths use different grids".into()));
    }
    let v = core.series("V")?;
    let zd = reaction.series("Zdiff")?;
    let (c1, c2) = signed_coefficients(lp, matrix);
    let s = v.iter().zip(zd).map(|(v, z)| c1 * v + c2 * z).collect();
    PathGrid::new(core.t0, core.step).with("S", s)
}

/// Core, reaction and signed limits on one grid of `n_steps` cells over
/// `[0, 1]`. Returns `(core, reaction, signed)`.
pub fn simulate_signed_path(
    lp: &LimitParams,
    matrix: &KernelMatrixSpec,
    core_grid: &VolterraGrid,
    reaction_grid: &VolterraGrid,
    noise: Noise,
) -> Result<(PathGrid, PathGrid, PathGrid)> {
    let core = simulate_core_limit(lp.mu0, core_grid, noise)?;
    let reaction = simulate_reaction_limit(lp.lambda1, lp.mu1(), &core, reaction_grid, noise)?;
    let signed = simulate_signed_limit(lp, matrix, &core, &reaction)?;
    Ok((core, reaction, signed))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(h: f64, k: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * ((k + 1.0).abs().powf(e) + (k - 1.0).abs().powf(e) - 2.0 * k.abs().powf(e))
}

/// Fractional Gaussian noise of length `n` with step `dt`.
///
/// Circulant embedding of size `2n` is exact in law whenever the embedding
/// spectrum is nonnegative (always the case for `H ≥ 1/2`); otherwise small
/// sizes fall back to a Cholesky factorisation.
pub fn fgn(h: f64, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParams(format!("Hurst index must lie in (0, 1), got {h}")));
    }
    if n == 0 || !(dt > 0.0) {
        return Err(Error::InvalidParams("need n ≥ 1 and dt > 0".into()));
    }
    let scale = dt.powf(h);
    let gamma: Vec<f64> = (0..=n).map(|k| fgn_autocovariance(h, k as f64)).collect();
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex::new(gamma[k], 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let top = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let negative = row.iter().any(|c| c.re < -1e-10 * top);
    if negative {
        return fgn_cholesky(&gamma[..n], rng).map(|v| v.into_iter().map(|x| x * scale).collect());
    }
    let mut w: Vec<Complex<f64>> = row
        .iter()
        .map(|lam| {
            let s = (lam.re.max(0.0) / m as f64).sqrt();
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex::new(s * a, s * b)
        })
        .collect();
    fft.process(&mut w);
    Ok(w[..n].iter().map(|c| c.re * scale).collect())
}

fn fgn_cholesky(gamma: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = gamma.len();
    if n > CHOLESKY_MAX {
        return Err(Error::Embedding(format!(
            "circulant spectrum has negative entries and n = {n} exceeds the Cholesky limit {CHOLESKY_MAX}"
        )));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = gamma[i - j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Embedding("covariance matrix is not positive definite".into()));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..n).map(|i| (0..=i).map(|k| l[i * n + k] * z[k]).sum()).collect())
}

/// Fractional Brownian motion path of `n` steps (column `value`, `n + 1` points from 0).
pub fn simulate_fbm(h: f64, n: usize, dt: f64, seed: u64) -> Result<PathGrid> {
    let mut rng = stream_rng(seed, 0);
    let inc = fgn(h, n, dt, &mut rng)?;
    let mut path = vec![0.0];
    path.extend(cumulate(&inc));
    PathGrid::new(0.0, dt).with("value", path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedFbmParams {
    pub hurst: f64,
    pub sigma_w: f64,
    pub sigma_h: f64,
}

impl MixedFbmParams {
    pub fn new(hurst: f64, sigma_w: f64, sigma_h: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidParams(format!("Hurst index must lie in (0, 1), got {hurst}")));
        }
        if !(sigma_w >= 0.0 && sigma_h >= 0.0) || sigma_w + sigma_h == 0.0 {
            return Err(Error::InvalidParams("need nonnegative scales, at least one positive".into()));
        }
        Ok(Self { hurst, sigma_w, sigma_h })
    }

    /// Increment variance at time lag `tau`.
    pub fn increment_variance(&self, tau: f64) -> f64 {
        self.sigma_w.powi(2) * tau + self.sigma_h.powi(2) * tau.powf(2.0 * self.hurst)
    }
}

/// `σ_W W + σ_H B^H` with independent components (column `value`).
pub fn simulate_mixed_fbm(p: &MixedFbmParams, n: usize, dt: f64, seed: u64) -> Result<PathGrid> {
    let mut frac_rng = stream_rng(seed, 0);
    let mut walk_rng = stream_rng(seed, 1);
    let frac = if p.sigma_h > 0.0 { fgn(p.hurst, n, dt, &mut frac_rng)? } else { vec![0.0; n] };
    let sd = dt.sqrt();
    let mut path = Vec::with_capacity(n + 1);
    path.push(0.0);
    let mut x = 0.0;
    for f in frac {
        let w: f64 = if p.sigma_w > 0.0 { walk_rng.sample::<f64, _>(StandardNormal) * sd } else { 0.0 };
        x += p.sigma_w * w + p.sigma_h * f;
        path.push(x);
    }
    PathGrid::new(0.0, dt).with("value", path)
}
