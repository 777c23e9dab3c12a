//! Nearly-unstable parameter schemes and the rescalings that turn finite
//! horizon counting paths into their macroscopic versions.
//!
//! The asymptotic relations between the horizon `T` and the Hawkes
//! parameters are used as exact equalities:
//!
//! ```text
//! 1 - a₀ = λ₀ K₀ Γ(1-α₀) / α₀ · T^{-α₀}
//! ν      = μ₀ α₀ / (K₀ Γ(1-α₀)) · T^{α₀-1}
//! 1 - a₁ = λ₁ T^{-α₁},  α₁ = 2 α₀
//! ```
//!
//! Under this scheme `T^{1-α₁} ν / (1 - a₀)` is the same for every `T`, which
//! pins the reaction constant `μ₁`.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::PathGrid;

const MU1_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitParams {
    pub alpha0: f64,
    pub lambda0: f64,
    pub mu0: f64,
    pub lambda1: f64,
    /// Tail constant of the core kernel; equals `alpha0` for the shifted Pareto.
    pub k0: f64,
}

impl LimitParams {
    pub fn new(alpha0: f64, lambda0: f64, mu0: f64, lambda1: f64, k0: f64) -> Result<Self> {
        if !(alpha0 > 0.25 && alpha0 < 0.5) {
            return Err(Error::InvalidParams(format!("alpha0 must lie in (1/4, 1/2), got {alpha0}")));
        }
        for (name, v) in [("lambda0", lambda0), ("mu0", mu0), ("lambda1", lambda1), ("K0", k0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        let lp = Self { alpha0, lambda0, mu0, lambda1, k0 };
        if !(lp.mu1() > 0.0 && lp.mu1().is_finite()) {
            return Err(Error::InvalidParams("derived mu1 is not a positive number".into()));
        }
        Ok(lp)
    }

    /// Shifted Pareto core kernel (`K₀ = α₀`) and unit constants.
    pub fn pareto(alpha0: f64) -> Result<Self> {
        Self::new(alpha0, 1.0, 1.0, 1.0, alpha0)
    }

    /// Rejects a user-supplied `μ₁` inconsistent with the derived value.
    pub fn check_mu1(&self, mu1: f64) -> Result<()> {
        let derived = self.mu1();
        if (mu1 - derived).abs() > MU1_TOL * derived {
            return Err(Error::InvalidParams(format!(
                "mu1 = {mu1} contradicts the derived value {derived}"
            )));
        }
        Ok(())
    }

    pub fn alpha1(&self) -> f64 {
        2.0 * self.alpha0
    }

    pub fn mu1(&self) -> f64 {
        let g = gamma(1.0 - self.alpha0);
        self.mu0 * self.alpha0 * self.alpha0 / (self.lambda0 * self.k0 * self.k0 * g * g)
    }

    /// Persistence exponent of the core flow.
    pub fn h0(&self) -> f64 {
        2.0 * self.alpha0
    }

    /// Roughness exponent of the unsigned volume rate.
    pub fn h1(&self) -> f64 {
        self.alpha1() - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteHorizonParams {
    pub horizon: f64,
    pub nu: f64,
    pub a0: f64,
    pub a1: f64,
}

impl FiniteHorizonParams {
    /// `(1 - a₀) / (T ν)`.
    pub fn core_factor(&self) -> f64 {
        (1.0 - self.a0) / (self.horizon * self.nu)
    }

    /// `(1 - a₀)(1 - a₁) / (T ν)`.
    pub fn unsigned_factor(&self) -> f64 {
        self.core_factor() * (1.0 - self.a1)
    }

    pub fn signed_factor(&self) -> f64 {
        self.unsigned_factor().sqrt()
    }
}

pub fn finite_horizon_params(lp: &LimitParams, horizon: f64) -> Result<FiniteHorizonParams> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::HorizonTooSmall(format!("horizon must be positive, got {horizon}")));
    }
    let g = gamma(1.0 - lp.alpha0);
    let gap0 = lp.lambda0 * lp.k0 * g / lp.alpha0 * horizon.powf(-lp.alpha0);
    let nu = lp.mu0 * lp.alpha0 / (lp.k0 * g) * horizon.powf(lp.alpha0 - 1.0);
    let gap1 = lp.lambda1 * horizon.powf(-lp.alpha1());
    if !(gap0 > 0.0 && gap0 < 1.0) || !(gap1 > 0.0 && gap1 < 1.0) || !(nu > 0.0) {
        return Err(Error::HorizonTooSmall(format!(
            "T = {horizon} gives 1-a0 = {gap0}, 1-a1 = {gap1}, nu = {nu}"
        )));
    }
    Ok(FiniteHorizonParams { horizon, nu, a0: 1.0 - gap0, a1: 1.0 - gap1 })
}

fn rescale(path: &PathGrid, fh: &FiniteHorizonParams, factor: f64) -> PathGrid {
    path.scaled(factor, 1.0 / fh.horizon)
}

/// Core counts on `[0, T]` mapped to `[0, 1]` and scaled by `(1 - a₀)/(T ν)`.
pub fn rescale_core(path: &PathGrid, fh: &FiniteHorizonParams) -> PathGrid {
    rescale(path, fh, fh.core_factor())
}

pub fn rescale_unsigned(path: &PathGrid, fh: &FiniteHorizonParams) -> PathGrid {
    rescale(path, fh, fh.unsigned_factor())
}

pub fn rescale_signed(path: &PathGrid, fh: &FiniteHorizonParams) -> PathGrid {
    rescale(path, fh, fh.signed_factor())
}
