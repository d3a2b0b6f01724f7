//! Bayesian inference for gradients and curvature of spatial surfaces, and
//! wombling measures along curves.

pub mod config;
pub mod curves;
pub mod data;
pub mod differential;
pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod mcmc;
pub mod pipeline;
pub mod quadrature;
pub mod simulate;
pub mod summary;
pub mod wombling;

pub use error::{Error, Result};
