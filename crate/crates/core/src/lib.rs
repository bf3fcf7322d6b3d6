//! Planar extremum seeking with a geometric extended Kalman filter for
//! gradient estimation and gradient-driven dither amplitude adaptation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod cli;
pub mod config;
pub mod error;
pub mod esc;
pub mod field;
pub mod gekf;
pub mod io;
pub mod metrics;
pub mod sim;

pub use error::{Error, Result};

/// A point or vector in the plane.
pub type Point = [f64; 2];
