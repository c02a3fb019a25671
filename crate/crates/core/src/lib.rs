//! Periodic homogenization toolkit.

pub mod cell;
pub mod coeff;
pub mod domain;
pub mod error;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod smoothing;
pub mod twoscale;

pub use error::{Error, Result};
