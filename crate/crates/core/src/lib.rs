//! Numerics for the weighted fractional critical Sobolev problem.
//!
//! Radial Gagliardo seminorms with a tabulated angular kernel, bubble test
//! functions and their asymptotics, a Galerkin discretization of the
//! constrained minimization and of the mountain-pass level.

pub mod asymptotics;
pub mod bubble;
pub mod constants;
pub mod error;
pub mod gauss;
pub mod kernel;
pub mod mountainpass;
pub mod par;
pub mod problem;
pub mod quad;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
