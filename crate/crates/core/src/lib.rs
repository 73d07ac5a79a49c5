//! Covariate-assisted spatial interpolation of a scalar response when the
//! candidate design is much wider than the number of observations.
//!
//! The pipeline realigns misaligned covariates onto blocks around each
//! observation, expands them into polynomial and interaction terms, filters
//! highly correlated terms, and selects sparse linear models with the LASSO
//! variant of least angle regression inside a repeated train/validation
//! scheme. Selected models are averaged with inverse validation-error
//! weights, residual spatial structure is modelled with polynomial trend
//! surfaces, and full-cover prediction and uncertainty rasters are produced.

pub mod cli;
pub mod data;
pub mod design;
pub mod ensemble;
pub mod error;
pub mod lar;
pub mod realign;
pub mod spatial;
pub mod stats;
pub mod subset;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
