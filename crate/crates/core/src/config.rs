//! Flat `key=value` run configuration.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Unknown keys, repeated keys and unparsable values are errors
//! naming the key. [`RunConfig::resolved`] renders every key, defaults
//! included, in the same format, so the echo of a run is itself a valid
//! configuration that reproduces it.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hawkes::TwoLayerParams;
use crate::kernels::{KernelMatrixSpec, KernelSpec};
use crate::scaling::{finite_horizon_params, FiniteHorizonParams, LimitParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Pareto,
    Exp,
}

impl FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pareto" => Ok(Self::Pareto),
            "exp" => Ok(Self::Exp),
            other => Err(format!("expected `pareto` or `exp`, got `{other}`")),
        }
    }
}

impl Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pareto => "pareto",
            Self::Exp => "exp",
        })
    }
}

/// Comma-separated list of reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealList(pub Vec<f64>);

impl FromStr for RealList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Self(Vec::new()));
        }
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
            .collect::<std::result::Result<_, _>>()
            .map(Self)
    }
}

impl Display for RealList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:?}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Optional value; the empty string means unset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Maybe<T>(pub Option<T>);

impl<T: FromStr> FromStr for Maybe<T> {
    type Err = T::Err;

    fn from_str(s: &str) -> std::result::Result<Self, T::Err> {
        if s.trim().is_empty() {
            Ok(Self(None))
        } else {
            s.parse().map(|v| Self(Some(v)))
        }
    }
}

impl<T: Display> Display for Maybe<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.0 {
            Some(v) => v.fmt(f),
            None => Ok(()),
        }
    }
}

macro_rules! run_config {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty = $default:expr ),+ $(,)?) => {
        /// Keys keep the names used in configuration files, hence `T`.
        #[allow(non_snake_case)]
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( $(#[$doc])* pub $field: $ty, )+
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $field: $default, )+ }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($field), )+];

            /// Assigns one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $( stringify!($field) => {
                        self.$field = parse_value::<$ty>(key, value)?;
                    } )+
                    other => return Err(Error::Config(format!("unknown key `{other}`"))),
                }
                Ok(())
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$( (stringify!($field), show(&self.$field)), )+]
            }
        }
    };
}

trait Show {
    fn show(&self) -> String;
}

impl Show for f64 {
    fn show(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! show_display {
    ($($t:ty),*) => { $( impl Show for $t { fn show(&self) -> String { self.to_string() } } )* };
}
show_display!(u64, usize, String, KernelFamily, RealList, Maybe<f64>);

fn show<T: Show>(v: &T) -> String {
    v.show()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{value}`: {e}")))
}

run_config! {
    alpha0: f64 = 0.375,
    lambda0: f64 = 1.0,
    mu0: f64 = 1.0,
    lambda1: f64 = 1.0,
    /// Checked against the derived value when set.
    mu1: Maybe<f64> = Maybe(None),
    /// Horizon of finite-T simulations.
    T: f64 = 1024.0,
    seed: u64 = 0,
    paths: usize = 1,
    core_kernel: KernelFamily = KernelFamily::Pareto,
    core_weights: RealList = RealList::default(),
    core_rates: RealList = RealList::default(),
    reaction_kernel: KernelFamily = KernelFamily::Pareto,
    /// Tail exponent of both reaction kernels; defaults to `2·alpha0`.
    reaction_alpha: Maybe<f64> = Maybe(None),
    reaction_weights: RealList = RealList::default(),
    reaction_rates: RealList = RealList::default(),
    /// `‖φ₁‖₁`; the cross-side mass is `1 - same_mass`.
    same_mass: f64 = 0.75,
    /// Explicit Hawkes parameters; when unset they follow the scheme at `T`.
    nu: Maybe<f64> = Maybe(None),
    a0: Maybe<f64> = Maybe(None),
    a1: Maybe<f64> = Maybe(None),
    /// Volterra steps for limit processes.
    steps: usize = 1024,
    /// Grid intervals for counting and price paths.
    grid_points: usize = 1024,
    hurst: f64 = 0.75,
    sigma_w: f64 = 1.0,
    sigma_h: f64 = 1.0,
    kappa: f64 = 1.0,
    out_dir: String = String::new(),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", no + 1)))?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), no + 1) {
                return Err(Error::Config(format!("key `{key}` repeated on lines {prev} and {}", no + 1)));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", no + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key with its value, one `key=value` per line in key order.
    pub fn resolved(&self) -> String {
        let mut entries = self.entries();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        entries.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda0", self.lambda0),
            ("mu0", self.mu0),
            ("lambda1", self.lambda1),
            ("T", self.T),
            ("sigma_w", self.sigma_w),
            ("sigma_h", self.sigma_h),
            ("kappa", self.kappa),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("key `{key}`: must be positive, got {v}")));
            }
        }
        if self.paths == 0 {
            return Err(Error::Config("key `paths`: must be at least 1".into()));
        }
        if !(self.same_mass > 0.5 && self.same_mass <= 1.0) {
            return Err(Error::Config(format!("key `same_mass`: must lie in (1/2, 1], got {}", self.same_mass)));
        }
        Ok(())
    }

    pub fn limit_params(&self) -> Result<LimitParams> {
        let k0 = match self.core_kernel {
            KernelFamily::Pareto => self.alpha0,
            KernelFamily::Exp => {
                return Err(Error::Config(
                    "key `core_kernel`: the scaling scheme needs a power-law core kernel".into(),
                ))
            }
        };
        let lp = LimitParams::new(self.alpha0, self.lambda0, self.mu0, self.lambda1, k0)
            .map_err(|e| Error::Config(format!("key `alpha0`/`lambda0`/`mu0`/`lambda1`: {e}")))?;
        if let Some(mu1) = self.mu1.0 {
            lp.check_mu1(mu1).map_err(|e| Error::Config(format!("key `mu1`: {e}")))?;
        }
        Ok(lp)
    }

    pub fn finite_horizon(&self) -> Result<FiniteHorizonParams> {
        finite_horizon_params(&self.limit_params()?, self.T).map_err(|e| Error::Config(format!("key `T`: {e}")))
    }

    pub fn core_kernel_spec(&self) -> Result<KernelSpec> {
        let spec = match self.core_kernel {
            KernelFamily::Pareto => KernelSpec::shifted_pareto(self.alpha0),
            KernelFamily::Exp => KernelSpec::exp_mixture(self.core_weights.0.clone(), self.core_rates.0.clone()),
        };
        spec.map_err(|e| Error::Config(format!("key `core_kernel`: {e}")))
    }

    pub fn reaction_alpha(&self) -> f64 {
        self.reaction_alpha.0.unwrap_or(2.0 * self.alpha0)
    }

    pub fn reaction_matrix(&self) -> Result<KernelMatrixSpec> {
        let kernel = match self.reaction_kernel {
            KernelFamily::Pareto => KernelSpec::shifted_pareto(self.reaction_alpha()),
            KernelFamily::Exp => {
                KernelSpec::exp_mixture(self.reaction_weights.0.clone(), self.reaction_rates.0.clone())
            }
        }
        .map_err(|e| Error::Config(format!("key `reaction_kernel`: {e}")))?;
        KernelMatrixSpec::new(kernel.clone(), self.same_mass, kernel, 1.0 - self.same_mass)
            .map_err(|e| Error::Config(format!("key `same_mass`: {e}")))
    }

    /// Hawkes parameters at horizon `T`: explicit `nu`, `a0`, `a1` where
    /// given, the scaling scheme otherwise.
    pub fn two_layer(&self) -> Result<TwoLayerParams> {
        let scheme = if self.nu.0.is_none() || self.a0.0.is_none() || self.a1.0.is_none() {
            Some(self.finite_horizon()?)
        } else {
            None
        };
        let pick = |explicit: Maybe<f64>, derived: fn(&FiniteHorizonParams) -> f64| {
            explicit.0.unwrap_or_else(|| derived(scheme.as_ref().expect("scheme computed when a value is unset")))
        };
        let nu = pick(self.nu, |f| f.nu);
        let a0 = pick(self.a0, |f| f.a0);
        let a1 = pick(self.a1, |f| f.a1);
        TwoLayerParams::new(nu, a0, self.core_kernel_spec()?, a1, self.reaction_matrix()?)
            .map_err(|e| Error::Config(format!("keys `nu`/`a0`/`a1`: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_echo_round_trip() {
        let cfg = RunConfig::parse("# comment\nalpha0 = 0.4\n\nT=2048\nseed=7\n").unwrap();
        assert_eq!((cfg.alpha0, cfg.T, cfg.seed), (0.4, 2048.0, 7));
        let echo = cfg.resolved();
        assert_eq!(echo.lines().count(), RunConfig::KEYS.len());
        assert!(echo.contains("alpha0=0.4\n") && echo.contains("mu1=\n"));
        assert_eq!(RunConfig::parse(&echo).unwrap(), cfg);
    }

    #[test]
    fn key_level_errors() {
        let msg = |text: &str| RunConfig::parse(text).unwrap_err().to_string();
        assert!(msg("alpah0=0.3").contains("unknown key `alpah0`"));
        assert!(msg("seed=-1").contains("key `seed`"));
        assert!(msg("T=1\nT=2").contains("repeated"));
        assert!(msg("kappa=0").contains("key `kappa`"));
        assert!(msg("core_kernel=gamma").contains("key `core_kernel`"));
        assert!(msg("just text").contains("line 1"));
        let cfg = RunConfig::parse("mu1=0.9").unwrap();
        assert!(cfg.limit_params().unwrap_err().to_string().contains("key `mu1`"));
    }

    #[test]
    fn model_parameters() {
        let cfg = RunConfig::parse("T=1024").unwrap();
        let p = cfg.two_layer().unwrap();
        let fh = cfg.finite_horizon().unwrap();
        assert_eq!((p.nu, p.a0, p.a1), (fh.nu, fh.a0, fh.a1));
        assert_eq!(p.reaction.same.tail_alpha(), Some(0.75));
        assert_eq!(p.reaction.imbalance(), 0.5);
        let cfg = RunConfig::parse(
            "core_kernel=exp\ncore_weights=1\ncore_rates=2\nreaction_kernel=exp\nreaction_weights=0.5,0.5\nreaction_rates=1,3\nnu=0.5\na0=0.3\na1=0.2",
        )
        .unwrap();
        let p = cfg.two_layer().unwrap();
        assert_eq!((p.nu, p.a0, p.a1), (0.5, 0.3, 0.2));
        assert!(cfg.limit_params().is_err());
        let partial = RunConfig::parse("core_kernel=exp\ncore_weights=1\ncore_rates=2\nnu=0.5").unwrap();
        assert!(partial.two_layer().is_err());
    }
}
