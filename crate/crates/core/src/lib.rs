//! Decoy-state QKD with sub-Poissonian light from a waveguide-coupled emitter.
//!
//! Pipeline: [`scattering`] computes reflected-field photon statistics, [`sources`]
//! turns every source family into a photon-number distribution, [`channel`]
//! synthesizes the observed gains and error rates, [`estimator`] bounds the
//! single-photon yield and error rate by linear programming, and [`keyrate`]
//! evaluates secure key rates, distance sweeps and maximal distances.

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod figures;
pub mod keyrate;
pub mod ode;
pub mod output;
pub mod quadrature;
pub mod scattering;
pub mod simplex;
pub mod sources;

pub use error::{Error, Result};
