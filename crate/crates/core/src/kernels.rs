//! Excitation kernels, the reaction kernel matrix and renewal resolvents.
//!
//! All kernels are probability densities on `[0, ∞)`; the branching mass of
//! a layer is carried separately by its `a` coefficient. The default family
//! is the shifted Pareto density `α (1 + t)^{-1-α}`, whose tail integral is
//! `(1 + t)^{-α}`. The exponential mixture `Σ w_i r_i e^{-r_i t}` exists
//! for Markovian validation runs.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::grid::{GridKernel, UniformGrid};
use crate::quad;

const NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    ShiftedPareto { alpha: f64 },
    ExpMixture { weights: Vec<f64>, rates: Vec<f64> },
}

impl KernelSpec {
    pub fn shifted_pareto(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParams(format!("tail exponent must lie in (0, 1), got {alpha}")));
        }
        Self::ShiftedPareto { alpha }.validated()
    }

    pub fn exp_mixture(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != rates.len() {
            return Err(Error::InvalidParams("mixture needs equal, nonzero numbers of weights and rates".into()));
        }
        if weights.iter().chain(&rates).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParams("mixture weights and rates must be positive".into()));
        }
        Self::ExpMixture { weights, rates }.validated()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::exp_mixture(vec![1.0], vec![rate])
    }

    fn validated(self) -> Result<Self> {
        let norm = self.l1_norm();
        if !((norm - 1.0).abs() <= NORM_TOL) {
            return Err(Error::InvalidParams(format!("kernel L1 norm is {norm}, expected 1")));
        }
        Ok(self)
    }

    /// Power-law tail exponent, `None` for exponential mixtures.
    pub fn tail_alpha(&self) -> Option<f64> {
        match self {
            Self::ShiftedPareto { alpha } => Some(*alpha),
            Self::ExpMixture { .. } => None,
        }
    }

    /// Density at `t ≥ 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("kernel evaluated at t = {t}")));
        }
        Ok(self.density(t))
    }

    /// Density without the domain check, for inner loops.
    pub fn density(&self, t: f64) -> f64 {
        match self {
            Self::ShiftedPareto { alpha } => alpha * (1.0 + t).powf(-1.0 - alpha),
            Self::ExpMixture { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w * r * (-r * t).exp()).sum()
            }
        }
    }

    /// `∫_t^∞ φ`.
    pub fn tail(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            Self::ShiftedPareto { alpha } => (1.0 + t).powf(-alpha),
            Self::ExpMixture { weights, rates } => weights.iter().zip(rates).map(|(w, r)| w * (-r * t).exp()).sum(),
        }
    }

    /// `∫_0^t φ`.
    pub fn cdf(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            Self::ShiftedPareto { alpha } => -(-alpha * t.ln_1p()).exp_m1(),
            Self::ExpMixture { weights, rates } => weights.iter().zip(rates).map(|(w, r)| -w * (-r * t).exp_m1()).sum(),
        }
    }

    /// `∫_a^b φ` for `0 ≤ a ≤ b`, computed without cancellation.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if a > 1.0 {
            self.tail(a) - self.tail(b)
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }

    /// L¹ norm by quadrature after the substitution `t = e^x - 1`.
    pub fn l1_norm(&self) -> f64 {
        let integrand = |x: f64| {
            let t = x.exp_m1();
            if t.is_finite() {
                self.density(t) * (1.0 + t)
            } else {
                0.0
            }
        };
        quad::integrate_to_inf_tol(integrand, 0.0, 1e-13, 1e-12).value
    }

    /// Constant `K` in `∫_t^∞ φ ~ K / (α t^α)`, i.e. `α` for the shifted Pareto.
    pub fn tail_constant(&self) -> Option<f64> {
        self.tail_alpha()
    }

    /// Inverse distribution function at `u ∈ (0, 1)`.
    pub fn offspring_delay(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("inverse CDF needs u in (0, 1), got {u}")));
        }
        Ok(match self {
            Self::ShiftedPareto { alpha } => ((-u).ln_1p() * (-1.0 / alpha)).exp_m1(),
            Self::ExpMixture { .. } => self.invert_cdf(u),
        })
    }

    /// Safeguarded Newton iteration on the monotone distribution function.
    fn invert_cdf(&self, u: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.cdf(hi) < u {
            hi *= 2.0;
        }
        let mut t = 0.5 * hi;
        for _ in 0..200 {
            let f = self.cdf(t) - u;
            if f.abs() <= 1e-15 * u {
                break;
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let d = self.density(t);
            let newton = t - f / d;
            t = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        t
    }

    /// Draws one delay from the density.
    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::ShiftedPareto { alpha } => {
                // 1 - U is uniform on (0, 1]
                let v: f64 = 1.0 - rng.random::<f64>();
                (-v.ln() / alpha).exp_m1()
            }
            Self::ExpMixture { weights, rates } => {
                let e: f64 = Exp1.sample(rng);
                if weights.len() == 1 {
                    return e / rates[0];
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, r) in weights.iter().zip(rates) {
                    acc += w;
                    if u < acc {
                        return e / r;
                    }
                }
                e / rates[rates.len() - 1]
            }
        }
    }

    pub fn sample_on(&self, grid: UniformGrid) -> GridKernel {
        GridKernel::sample(grid, |t| self.density(t))
    }
}

/// Symmetric reaction matrix: same-side kernel `m₁ φ₁`, cross-side `m₂ φ₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrixSpec {
    pub same: KernelSpec,
    pub same_mass: f64,
    pub cross: KernelSpec,
    pub cross_mass: f64,
}

impl KernelMatrixSpec {
    pub fn new(same: KernelSpec, same_mass: f64, cross: KernelSpec, cross_mass: f64) -> Result<Self> {
        if !(same_mass > 0.0) || !(cross_mass >= 0.0) {
            return Err(Error::InvalidParams("kernel masses must be nonnegative, same-side positive".into()));
        }
        if (same_mass + cross_mass - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParams(format!(
                "kernel masses must sum to one, got {}",
                same_mass + cross_mass
            )));
        }
        if same_mass <= cross_mass {
            return Err(Error::InvalidParams(format!(
                "same-side mass {same_mass} must exceed cross-side mass {cross_mass}"
            )));
        }
        Ok(Self { same, same_mass, cross, cross_mass })
    }

    /// Both entries shifted Pareto with exponent `alpha`.
    pub fn pareto(alpha: f64, same_mass: f64) -> Result<Self> {
        let k = KernelSpec::shifted_pareto(alpha)?;
        Self::new(k.clone(), same_mass, k, 1.0 - same_mass)
    }

    /// `‖k₂‖₁ = ‖φ₁‖₁ - ‖φ₂‖₁`.
    pub fn imbalance(&self) -> f64 {
        self.same_mass - self.cross_mass
    }

    pub fn same_density(&self, t: f64) -> f64 {
        self.same_mass * self.same.density(t)
    }

    pub fn cross_density(&self, t: f64) -> f64 {
        self.cross_mass * self.cross.density(t)
    }
}

/// `k₁ = φ₁ + φ₂` and `k₂ = φ₁ - φ₂` sampled on `grid`.
pub fn eigen_kernels(spec: &KernelMatrixSpec, grid: UniformGrid) -> (GridKernel, GridKernel) {
    let sum = GridKernel::sample(grid, |t| spec.same_density(t) + spec.cross_density(t));
    let diff = GridKernel::sample(grid, |t| spec.same_density(t) - spec.cross_density(t));
    (sum, diff)
}

const RESIDUAL_TOL: f64 = 1e-6;

/// Resolvent `ψ = Σ_{k≥1} (aφ)^{*k}` on the kernel's grid.
///
/// Solves the discrete renewal equation `ψ = aφ + a φ * ψ`, with the
/// convolution taken by the trapezoidal rule, exactly by forward
/// substitution (each node depends on earlier nodes only).
pub fn resolvent(kernel: &GridKernel, a: f64) -> Result<GridKernel> {
    let grid = kernel.grid;
    let h = grid.step;
    let phi = &kernel.values;
    if !(a >= 0.0) {
        return Err(Error::InvalidParams(format!("branching ratio must be nonnegative, got {a}")));
    }
    let pivot = 1.0 - 0.5 * a * h * phi[0];
    if pivot <= 0.0 {
        return Err(Error::NonConvergence(format!("grid step {h} too coarse for the kernel at zero")));
    }
    let mass = a * kernel.integral();
    if mass >= 1.0 {
        return Err(Error::InvalidParams(format!("a·‖φ‖ = {mass} is not below one")));
    }
    let n = phi.len();
    let mut psi = vec![0.0; n];
    psi[0] = a * phi[0];
    for i in 1..n {
        let mut conv = 0.5 * phi[i] * psi[0];
        for j in 1..i {
            conv += phi[i - j] * psi[j];
        }
        psi[i] = (a * phi[i] + a * h * conv) / pivot;
    }
    let out = GridKernel { grid, values: psi };
    let res = renewal_residual(kernel, a, &out);
    if !(res < RESIDUAL_TOL) {
        return Err(Error::NonConvergence(format!("renewal residual {res:e}")));
    }
    Ok(out)
}

/// `max_i |ψ_i - aφ_i - a (φ * ψ)_i|` with the trapezoidal convolution.
pub fn renewal_residual(kernel: &GridKernel, a: f64, psi: &GridKernel) -> f64 {
    let phi = &kernel.values;
    let psi = &psi.values;
    let h = kernel.grid.step;
    let mut worst: f64 = 0.0;
    for i in 0..phi.len() {
        let conv = if i == 0 {
            0.0
        } else {
            let mut c = 0.5 * (phi[i] * psi[0] + phi[0] * psi[i]);
            for j in 1..i {
                c += phi[i - j] * psi[j];
            }
            c * h
        };
        worst = worst.max((psi[i] - a * phi[i] - a * conv).abs());
    }
    worst
}

/// Expected count `ν t + ν ∫_0^t (t - s) ψ(s) ds` of a Hawkes process with
/// constant baseline `ν` and resolvent `ψ`, at every grid node.
pub fn expected_count(nu: f64, psi: &GridKernel) -> Vec<f64> {
    let h = psi.grid.step;
    // E[N_t] = ν t + ν ∫_0^t Ψ(s) ds with Ψ the running integral of ψ
    let mut cum = vec![0.0; psi.values.len()];
    for i in 1..cum.len() {
        cum[i] = cum[i - 1] + 0.5 * h * (psi.values[i - 1] + psi.values[i]);
    }
    let mut out = vec![0.0; cum.len()];
    let mut integral = 0.0;
    for i in 1..cum.len() {
        integral += 0.5 * h * (cum[i - 1] + cum[i]);
        out[i] = nu * psi.grid.time(i) + nu * integral;
    }
    out
}
