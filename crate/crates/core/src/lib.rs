//! Simulation and estimation toolkit for a two-layer Hawkes model of market
//! order flow.
//!
//! The crate covers the whole chain from microstructure to macroscopic
//! statistics:
//!
//! * [`specialfn`]: Mittag-Leffler function, density and distribution function.
//! * [`kernels`]: excitation kernels, eigen-kernels and renewal resolvents.
//! * [`scaling`]: nearly-unstable parameter schemes and path rescalings.
//! * [`hawkes`]: exact branching simulation of core and reaction flows.
//! * [`limits`]: Volterra simulation of the scaling limits and (mixed) fBm.
//! * [`estimators`]: quadratic-variation and autocovariance Hurst estimators.
//! * [`impact`]: no-arbitrage propagator prices and metaorder impact.
//! * [`ingest`]: trade files, session filtering and binning.
//! * [`config`]: flat `key=value` run configuration.

pub mod config;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod hawkes;
pub mod impact;
pub mod ingest;
pub mod kernels;
pub mod limits;
pub mod quad;
pub mod rng;
pub mod scaling;
pub mod specialfn;

pub use error::{Error, Result};
pub use grid::{GridKernel, PathGrid, UniformGrid};
