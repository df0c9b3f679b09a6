//! Marginally interpretable generalized linear mixed models.
//!
//! The crate computes the link-specific adjustment that keeps fixed effects
//! population-averaged, evaluates the logistic-normal integral, and samples
//! the joint posterior of fixed effects, variance parameters and random
//! effects by block Metropolis-Hastings.

pub mod adjust;
pub mod cli;
pub mod error;
pub mod inference;
pub mod law;
pub mod linalg;
pub mod links;
pub mod lni;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod sampler;

pub use error::{Error, Result};
pub use links::LinkFunction;
