//! Newtonian dynamical systems on the plane (optionally with a conformal
//! metric) that admit the normal shift of curves.
//!
//! The crate integrates trajectories and their deviation along shifted
//! curves, evaluates the normality equations in several equivalent forms and
//! provides closed-form reference solutions.

pub mod closedform;
pub mod dynamics;
pub mod error;
pub mod forces;
pub mod geometry;
pub mod normality;
pub mod ode;
pub mod shift;

pub use error::{Error, Result};

/// CSV float format: 17 significant digits, round-trip exact.
pub fn fmt_float(x: f64) -> String {
    format!("{:.16e}", x)
}
