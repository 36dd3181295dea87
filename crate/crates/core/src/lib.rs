//! Recursive and batch deconvolution estimators of a distribution function
//! under Laplace measurement error, with plug-in bandwidth selection and a
//! Monte Carlo harness.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod numeric;
pub mod plugin;
pub mod schedules;
pub mod simlab;

pub use error::{DeconvError, Result};
