//! Spectral simulation and verification harness for a stochastic
//! activator–inhibitor (generalized Gray–Scott) system with fractional
//! inhibitor diffusion and linear multiplicative noise.

pub mod error;
pub mod spectral;

pub use error::{Error, Result};
pub mod integrator;
pub mod noise;
pub mod fixed_point;
pub mod param_gate;
pub mod estimators;
pub mod convergence;
pub mod config;
pub mod output;
pub mod cli;
