//! Gauss–Legendre and Gauss–Jacobi rules.
//!
//! Legendre nodes are found by Newton iteration on the three-term recurrence.
//! Jacobi rules for the weight x^α on [0, 1] come from the Golub–Welsch
//! eigenproblem. Both are cached for the lifetime of the process.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::special::ln_gamma;

/// Largest supported order.
pub const MAX_ORDER: usize = 128;

/// A Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let m = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (m + h * x, h * w))
    }

    /// ∫_a^b f.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

static CACHE: [OnceLock<Rule>; MAX_ORDER + 1] = [const { OnceLock::new() }; MAX_ORDER + 1];

/// The cached rule with `order` points (1 ≤ order ≤ [`MAX_ORDER`]).
pub fn rule(order: usize) -> &'static Rule {
    assert!(
        (1..=MAX_ORDER).contains(&order),
        "Gauss-Legendre order {order} outside 1..={MAX_ORDER}"
    );
    CACHE[order].get_or_init(|| build(order))
}

/// Legendre P_n(x) and P_n'(x).
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn build(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Composite rule on consecutive breakpoints, `order` points per panel.
pub fn composite<F: FnMut(f64) -> f64>(breaks: &[f64], order: usize, mut f: F) -> f64 {
    let g = rule(order);
    breaks
        .windows(2)
        .map(|w| g.integrate(w[0], w[1], &mut f))
        .sum()
}

/// Gauss rule for ∫_0^1 x^α f(x) dx, α > -1.
///
/// Weights exclude the factor x^α.
pub fn jacobi01(order: usize, alpha: f64) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Rule>>>> = OnceLock::new();
    assert!(alpha > -1.0, "Jacobi exponent {alpha} must exceed -1");
    assert!((1..=MAX_ORDER).contains(&order));
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (order, alpha.to_bits());
    if let Some(r) = cache.lock().expect("rule cache poisoned").get(&key) {
        return r.clone();
    }
    let built = Arc::new(build_jacobi01(order, alpha));
    cache
        .lock()
        .expect("rule cache poisoned")
        .entry(key)
        .or_insert(built)
        .clone()
}

/// Golub–Welsch for (1 + t)^b on [-1, 1], mapped to x = (1 + t)/2.
fn build_jacobi01(n: usize, b: f64) -> Rule {
    let a = 0.0;
    let ab = a + b;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (k, d) in diag.iter_mut().enumerate() {
        let kf = k as f64;
        let den = (2.0 * kf + ab) * (2.0 * kf + ab + 2.0);
        *d = if den.abs() < 1e-300 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / den
        };
    }
    for (k, o) in off.iter_mut().enumerate() {
        let kf = k as f64 + 1.0;
        let t = 2.0 * kf + ab;
        let num = 4.0 * kf * (kf + a) * (kf + b) * (kf + ab);
        let den = t * t * (t + 1.0) * (t - 1.0);
        *o = (num / den).sqrt();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = diag[k];
        if k + 1 < n {
            m[(k, k + 1)] = off[k];
            m[(k + 1, k)] = off[k];
        }
    }
    let eig = SymmetricEigen::new(m);
    // ∫_{-1}^{1} (1+t)^b dt
    let mu0 = ((ab + 1.0) * 2f64.ln() + ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(ab + 2.0)).exp();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let scale = 2f64.powf(-b - 1.0);
    Rule {
        nodes: pairs.iter().map(|p| 0.5 * (1.0 + p.0)).collect(),
        weights: pairs.iter().map(|p| scale * p.1).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_exact_on_monomials() {
        for &alpha in &[-0.6, 0.0, 0.4, 1.0, 1.6] {
            for n in [1usize, 4, 10, 16] {
                let g = jacobi01(n, alpha);
                for deg in 0..2 * n {
                    let got: f64 = g
                        .nodes
                        .iter()
                        .zip(&g.weights)
                        .map(|(x, w)| w * x.powi(deg as i32))
                        .sum();
                    let want = 1.0 / (deg as f64 + alpha + 1.0);
                    assert!(((got - want) / want).abs() < 1e-12, "alpha={alpha} n={n} deg={deg}");
                }
            }
        }
    }

    #[test]
    fn jacobi_with_zero_alpha_is_legendre() {
        let j = jacobi01(12, 0.0);
        let l = rule(12);
        for (a, b) in j.nodes.iter().zip(&l.nodes) {
            assert!((a - 0.5 * (1.0 + b)).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 20, 64, 128] {
            let s: f64 = rule(n).weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "order {n}: {s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_2n_minus_1() {
        for n in 1..=30 {
            let g = rule(n);
            for deg in 0..2 * n {
                let got = g.integrate(0.0, 1.0, |x| x.powi(deg as i32));
                let want = 1.0 / (deg as f64 + 1.0);
                assert!((got - want).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let g = rule(17);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        for i in 0..17 {
            assert!((g.nodes[i] + g.nodes[16 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn smooth_integrand() {
        let v = rule(20).integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
