pub mod cauchy;
pub mod cli;
pub mod coeff;
pub mod config;
pub mod error;
pub mod expr;
pub mod kernels;
pub mod montecarlo;
pub mod parametrix;
pub mod quad;
pub mod specfun;
pub mod verify;

pub use error::{Error, Result};
