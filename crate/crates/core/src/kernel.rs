//! The angular kernel K(τ) = ∫_{S^{n-1}} |e - τ y|^{-(n+2s)} dσ(y).
//!
//! Direct evaluation integrates over the polar angle with panels that double
//! away from θ = 0, which stays accurate arbitrarily close to τ = 1. For the
//! pair quadrature the regularized kernel K̃(δ) = K(1 - δ) δ^{1+2s} on (0, 1]
//! is tabulated with Chebyshev expansions on dyadic panels.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::gauss;
use crate::special::{beta, sphere_area};

/// Default distance from τ = 1 below which [`angular_kernel`] refuses to evaluate.
pub const SINGULAR_FLOOR: f64 = 1e-6;

const THETA_ORDER: usize = 20;

/// K(τ) by polar-angle quadrature, for any τ ≥ 0 with τ ≠ 1.
///
/// No floor is applied; see [`angular_kernel`] for the checked version.
pub fn kernel_direct(n: usize, s: f64, tau: f64) -> f64 {
    kernel_direct_gap(n, s, tau, (1.0 - tau).abs())
}

/// Same as [`kernel_direct`] with the gap |1 - τ| supplied exactly.
fn kernel_direct_gap(n: usize, s: f64, tau: f64, delta: f64) -> f64 {
    let g = gauss::rule(THETA_ORDER);
    let expo = -(n as f64 + 2.0 * s) / 2.0;
    let d2 = delta * delta;
    let f = |theta: f64| {
        let h = (0.5 * theta).sin();
        let d = d2 + 4.0 * tau * h * h;
        theta.sin().powi(n as i32 - 2) * d.powf(expo)
    };
    let mut a = 0.0;
    let mut b = delta.clamp(1e-300, PI / 4.0);
    let mut sum = 0.0;
    loop {
        let hi = b.min(PI);
        sum += g.integrate(a, hi, f);
        if hi >= PI {
            break;
        }
        a = hi;
        b = 2.0 * hi;
        if PI - b < 0.5 * (b - a) {
            b = PI;
        }
    }
    sphere_area(n - 1) * sum
}

/// K(τ), refusing arguments with |τ - 1| below `floor`.
pub fn angular_kernel_with_floor(n: usize, s: f64, tau: f64, floor: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("n", format!("dimension {n} < 2")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid("s", format!("order {s} outside (0, 1)")));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("tau = {tau} must be finite and >= 0")));
    }
    let gap = (tau - 1.0).abs();
    if gap < floor {
        return Err(Error::Singular { gap, floor });
    }
    Ok(kernel_direct(n, s, tau))
}

/// K(τ) with the default singularity floor.
pub fn angular_kernel(n: usize, s: f64, tau: f64) -> Result<f64> {
    angular_kernel_with_floor(n, s, tau, SINGULAR_FLOOR)
}

/// `H(τ) = K(τ) τ^{n-2} (τ² - 1)^{1+2s}` for τ > 1.
pub fn h_function(n: usize, s: f64, tau: f64) -> Result<f64> {
    if !(tau > 1.0) {
        return Err(Error::invalid("tau", "H is defined for tau > 1"));
    }
    let k = angular_kernel(n, s, tau)?;
    Ok(k * tau.powi(n as i32 - 2) * (tau * tau - 1.0).powf(1.0 + 2.0 * s))
}

/// Taylor coefficients of K(τ)/σ_{n-1} in powers of τ²:
/// the ₂F₁((n+2s)/2, 1+s; n/2; ·) series.
pub fn series_coefficients(n: usize, s: f64, count: usize) -> Vec<f64> {
    let a = (n as f64 + 2.0 * s) / 2.0;
    let b = 1.0 + s;
    let c = n as f64 / 2.0;
    let mut out = Vec::with_capacity(count);
    let mut ck = 1.0;
    for k in 0..count {
        out.push(ck);
        let kf = k as f64;
        ck *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0));
    }
    out
}

/// K(τ) from the hypergeometric series, τ < 1. Converges slowly near 1.
pub fn kernel_series(n: usize, s: f64, tau: f64) -> f64 {
    let x = tau * tau;
    let a = (n as f64 + 2.0 * s) / 2.0;
    let b = 1.0 + s;
    let c = n as f64 / 2.0;
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut k = 0.0;
    while term.abs() > 1e-17 * sum.abs() && k < 100_000.0 {
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * x;
        sum += term;
        k += 1.0;
    }
    sphere_area(n) * sum
}

/// lim_{τ→1} K(τ) |1 - τ|^{1+2s}.
pub fn diagonal_constant(n: usize, s: f64) -> f64 {
    sphere_area(n - 1) * 0.5 * beta((n as f64 - 1.0) / 2.0, (1.0 + 2.0 * s) / 2.0)
}

const PANELS: usize = 61;
const DEGREE: usize = 24;

/// Chebyshev table of K̃(δ) = K(1 - δ) δ^{1+2s}, δ ∈ (0, 1].
///
/// Panel 0 covers [1/2, 1], panel j covers [2^{-j-1}, 2^{-j}]. Arguments
/// below the last panel are clamped to it.
#[derive(Debug)]
pub struct AngularKernel {
    pub n: usize,
    pub s: f64,
    coeffs: Vec<[f64; DEGREE + 1]>,
    sphere: f64,
}

impl AngularKernel {
    pub fn new(n: usize, s: f64) -> Self {
        let e = 1.0 + 2.0 * s;
        let nodes: Vec<f64> = (0..=DEGREE)
            .map(|i| (PI * (i as f64 + 0.5) / (DEGREE as f64 + 1.0)).cos())
            .collect();
        let coeffs = (0..PANELS)
            .map(|j| {
                let (lo, hi) = panel_bounds(j);
                let vals: Vec<f64> = nodes
                    .iter()
                    .map(|&x| {
                        let d = lo + 0.5 * (x + 1.0) * (hi - lo);
                        kernel_direct_gap(n, s, 1.0 - d, d) * d.powf(e)
                    })
                    .collect();
                let mut c = [0.0; DEGREE + 1];
                let m = (DEGREE + 1) as f64;
                for (k, ck) in c.iter_mut().enumerate() {
                    let sum: f64 = vals
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / m).cos())
                        .sum();
                    *ck = 2.0 * sum / m;
                }
                c[0] *= 0.5;
                c
            })
            .collect();
        Self {
            n,
            s,
            coeffs,
            sphere: sphere_area(n),
        }
    }

    /// Shared table for `(n, s)`, built on first use.
    pub fn shared(n: usize, s: f64) -> Arc<AngularKernel> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<AngularKernel>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (n, s.to_bits());
        if let Some(k) = cache.lock().expect("kernel cache poisoned").get(&key) {
            return k.clone();
        }
        let built = Arc::new(AngularKernel::new(n, s));
        cache
            .lock()
            .expect("kernel cache poisoned")
            .entry(key)
            .or_insert(built)
            .clone()
    }

    /// K̃(δ) for δ ∈ (0, 1].
    #[inline]
    pub fn regularized(&self, delta: f64) -> f64 {
        let (j, lo, hi) = if delta >= 0.5 {
            (0, 0.5, 1.0)
        } else {
            let j = ((-delta.log2()).floor() as usize).clamp(1, PANELS - 1);
            let (lo, hi) = panel_bounds(j);
            (j, lo, hi)
        };
        let d = delta.clamp(lo, hi);
        let x = (2.0 * d - lo - hi) / (hi - lo);
        clenshaw(&self.coeffs[j], x)
    }

    /// K(τ) for 0 ≤ τ < 1 through the table.
    pub fn eval_below(&self, tau: f64) -> f64 {
        let d = 1.0 - tau;
        self.regularized(d) * d.powf(-1.0 - 2.0 * self.s)
    }

    /// Pair density for radii ρ < r with gap d = r - ρ:
    /// σ_{n-1} ρ^{n-1} K̃(d/r) d^{-1-2s}, so that the double integral over
    /// ℝⁿ × ℝⁿ of a radial integrand becomes ∫∫ G(r, ρ) dρ dr.
    #[inline]
    pub fn pair_density(&self, r: f64, rho: f64, d: f64) -> f64 {
        self.sphere
            * rho.powi(self.n as i32 - 1)
            * self.regularized(d / r)
            * d.powf(-1.0 - 2.0 * self.s)
    }

    pub fn sphere(&self) -> f64 {
        self.sphere
    }
}

fn panel_bounds(j: usize) -> (f64, f64) {
    if j == 0 {
        (0.5, 1.0)
    } else {
        let hi = 0.5f64.powi(j as i32);
        (0.5 * hi, hi)
    }
}

#[inline]
fn clenshaw(c: &[f64; DEGREE + 1], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    let x2 = 2.0 * x;
    for &ck in c.iter().skip(1).rev() {
        let b0 = ck + x2 * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + x * b1 - b2
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn value_at_zero_is_sphere_measure() {
        for n in [3, 4, 6, 9] {
            let k = angular_kernel(n, 0.3, 0.0).unwrap();
            assert!(rel(k, sphere_area(n)) < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn inversion_identity() {
        let (n, s) = (6, 0.5);
        for xi in [2.0f64, 1.5, 1.01, 7.0] {
            let lhs = angular_kernel(n, s, 1.0 / xi).unwrap();
            let rhs = xi.powf(n as f64 + 2.0 * s) * angular_kernel(n, s, xi).unwrap();
            assert!(rel(lhs, rhs) < 1e-10, "xi = {xi}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn large_tau_limit() {
        let (n, s) = (6, 0.5);
        let t: f64 = 1e4;
        let k = angular_kernel(n, s, t).unwrap() * t.powf(n as f64 + 2.0 * s);
        assert!(rel(k, sphere_area(n)) < 1e-3);
    }

    #[test]
    fn matches_hypergeometric_series() {
        for (n, s) in [(3, 0.2), (6, 0.5), (5, 0.7), (10, 0.05)] {
            for tau in [0.05, 0.3, 0.6, 0.9] {
                let a = kernel_direct(n, s, tau);
                let b = kernel_series(n, s, tau);
                assert!(rel(a, b) < 1e-12, "n={n} s={s} tau={tau}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn singular_band_is_refused() {
        let e = angular_kernel(6, 0.5, 1.0 + 1e-7).unwrap_err();
        assert_eq!(e.code(), "E_SINGULAR");
        assert!(angular_kernel(6, 0.5, 1.0 + 2e-6).is_ok());
    }

    #[test]
    fn diagonal_limit() {
        for (n, s) in [(6, 0.5), (3, 0.2), (8, 0.9)] {
            let d: f64 = 1e-7;
            let k = kernel_direct(n, s, 1.0 - d) * d.powf(1.0 + 2.0 * s);
            assert!(rel(k, diagonal_constant(n, s)) < 1e-5, "n={n} s={s}");
        }
    }

    #[test]
    fn table_reproduces_direct_values() {
        for (n, s) in [(6, 0.5), (3, 0.2), (7, 0.85)] {
            let t = AngularKernel::new(n, s);
            for &d in &[1.0f64, 0.77, 0.5, 0.3, 1e-2, 3.3e-5, 1e-9, 1e-14] {
                let want = kernel_direct_gap(n, s, 1.0 - d, d) * d.powf(1.0 + 2.0 * s);
                let got = t.regularized(d);
                assert!(rel(got, want) < 1e-12, "n={n} s={s} d={d}: {got} vs {want}");
            }
            assert!(rel(t.regularized(1e-30), diagonal_constant(n, s)) < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn h_positive_and_bounded_growth(tau in 1.001f64..50.0) {
            let h = h_function(6, 0.5, tau).unwrap();
            prop_assert!(h > 0.0 && h.is_finite());
        }

        #[test]
        fn inversion_random(xi in 1.05f64..20.0, s in 0.05f64..0.95, n in 3usize..9) {
            let lhs = kernel_direct(n, s, 1.0 / xi);
            let rhs = xi.powf(n as f64 + 2.0 * s) * kernel_direct(n, s, xi);
            prop_assert!(rel(lhs, rhs) < 1e-10);
        }
    }

    #[test]
    fn h_is_continuous_on_samples() {
        let mut prev = h_function(6, 0.5, 1.01).unwrap();
        let mut tau = 1.01;
        while tau < 50.0 {
            let next_tau = tau * 1.01;
            let next = h_function(6, 0.5, next_tau).unwrap();
            assert!(rel(next, prev) < 0.05, "jump at {tau}");
            prev = next;
            tau = next_tau;
        }
    }
}
