//! Gamma-family helpers and sphere measures.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface measure of the unit sphere S^{d-1} in ℝ^d, i.e. 2π^{d/2}/Γ(d/2).
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Euler beta function B(a, b) through log-gamma.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}
