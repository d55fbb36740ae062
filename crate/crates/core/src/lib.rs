//! Adaptive Wang–Landau sampling for posteriors whose likelihood carries an
//! intractable normalizing constant.
//!
//! The sampler learns `log Z(θ)` at a fixed cloud of particles with a
//! Rao-Blackwellized Wang–Landau chain, smooths those estimates into a
//! surface over the whole parameter box, and runs an adaptive Metropolis
//! chain on θ against that surface while the learning continues.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod models;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod surface;
pub mod theta;
pub mod validate;
pub mod wl;

pub use error::{Error, Result};
pub use model::{energy_dot, log_prior, EnergyModel, ParamBox, ParameterPoint, SampleSpace, SufficientStats};
