//! The bubble U_ε(x) = (ε/(ε² + |x-a|²))^{(n-2s)/2}, the cutoff Ψ and the
//! truncated bubble u_ε = UΨ.

use crate::error::{Error, Result};
use crate::gauss;
use crate::quad::RadialProfile;
use crate::special::sphere_area;

const RADIAL_ORDER: usize = 20;

/// Smooth step: 1 for t ≤ 0, 0 for t ≥ 1.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 / (1.0 + (1.0 / (1.0 - t) - 1.0 / t).exp())
    }
}

/// `1 - smooth_step(t)` without cancellation.
pub fn smooth_step_complement(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
    }
}

fn distance(a: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .zip(a.iter().chain(std::iter::repeat(&0.0)))
        .map(|(xi, ai)| (xi - ai) * (xi - ai))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    pub eps: f64,
    pub s: f64,
    pub n: usize,
    /// Center; empty means the origin.
    pub a: Vec<f64>,
}

impl Bubble {
    pub fn new(n: usize, s: f64, eps: f64) -> Self {
        Self {
            eps,
            s,
            n,
            a: Vec::new(),
        }
    }

    pub fn exponent(&self) -> f64 {
        (self.n as f64 - 2.0 * self.s) / 2.0
    }

    pub fn radial(&self, r: f64) -> f64 {
        (self.eps / (self.eps * self.eps + r * r)).powf(self.exponent())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.radial(distance(&self.a, x))
    }

    /// Panels resolving the ε-scale: 0, ε/4, ε/2, ε, then doubling up to `upto`.
    pub fn scale_breaks(&self, upto: f64) -> Vec<f64> {
        let mut b = vec![0.0];
        let mut x = 0.25 * self.eps;
        while x < upto {
            b.push(x);
            x *= 2.0;
        }
        b.push(upto);
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub a: Vec<f64>,
    pub eta: f64,
}

impl Cutoff {
    pub fn new(eta: f64) -> Self {
        Self { a: Vec::new(), eta }
    }

    pub fn radial(&self, r: f64) -> f64 {
        smooth_step((r - self.eta) / self.eta)
    }

    pub fn radial_complement(&self, r: f64) -> f64 {
        smooth_step_complement((r - self.eta) / self.eta)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.radial(distance(&self.a, x))
    }

    /// Breaks across [η, 2η], graded towards both ends.
    pub fn transition_breaks(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        for j in (2..=6).rev() {
            t.push(0.5f64.powi(j));
        }
        t.push(0.5);
        for j in 2..=6 {
            t.push(1.0 - 0.5f64.powi(j));
        }
        t.push(1.0);
        t.into_iter().map(|x| self.eta * (1.0 + x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedBubble {
    pub bubble: Bubble,
    pub cutoff: Cutoff,
}

impl TruncatedBubble {
    pub fn new(n: usize, s: f64, eps: f64, eta: f64) -> Self {
        Self {
            bubble: Bubble::new(n, s, eps),
            cutoff: Cutoff::new(eta),
        }
    }

    pub fn radial(&self, r: f64) -> f64 {
        if r >= 2.0 * self.cutoff.eta {
            return 0.0;
        }
        self.bubble.radial(r) * self.cutoff.radial(r)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.radial(distance(&self.bubble.a, x))
    }

    /// U(1 - Ψ), the part removed by the cutoff.
    pub fn removed(&self, r: f64) -> f64 {
        if r <= self.cutoff.eta {
            return 0.0;
        }
        self.bubble.radial(r) * self.cutoff.radial_complement(r)
    }

    /// ∫ |u|^q over ℝⁿ by radial quadrature.
    pub fn lq_norm(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::invalid("q", format!("q = {q} must be >= 1")));
        }
        let n = self.bubble.n;
        Ok(radial_integral(&self.breakpoints(), n, |r| self.radial(r).powf(q)))
    }

    /// ∫ U^q (1 - Ψ^q) over ℝⁿ, the mass the cutoff removes from the full
    /// bubble. Finite when q(n - 2s) > n.
    pub fn lq_defect(&self, q: f64) -> Result<f64> {
        let n = self.bubble.n;
        let nf = n as f64;
        if !(q * (nf - 2.0 * self.bubble.s) > nf) {
            return Err(Error::Divergent(format!(
                "U^q is not integrable for q = {q}, n = {n}, s = {}",
                self.bubble.s
            )));
        }
        let eta = self.cutoff.eta;
        let inner = radial_integral(&self.cutoff.transition_breaks(), n, |r| {
            let psi = self.cutoff.radial(r);
            // 1 - Ψ^q = -expm1(q ln Ψ).
            let one_minus = if psi > 0.0 { -(q * psi.ln()).exp_m1() } else { 1.0 };
            self.bubble.radial(r).powf(q) * one_minus
        });
        // r ≥ 2η through r = 2η/t.
        let r2 = 2.0 * eta;
        let breaks: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
        let outer = sphere_area(n)
            * gauss::composite(&breaks, RADIAL_ORDER, |t| {
                if t == 0.0 {
                    return 0.0;
                }
                let r = r2 / t;
                r.powi(n as i32 - 1) * self.bubble.radial(r).powf(q) * r2 / (t * t)
            });
        Ok(inner + outer)
    }
}

/// `u_{ε,s,a}(x)`.
pub fn eval_u(tb: &TruncatedBubble, x: &[f64]) -> f64 {
    tb.eval(x)
}

/// `U_{ε,s,a}(x)`.
pub fn eval_bubble(b: &Bubble, x: &[f64]) -> f64 {
    b.eval(x)
}

/// σ_{n-1} ∫ r^{n-1} f(r) dr over consecutive breaks.
pub fn radial_integral<F: Fn(f64) -> f64>(breaks: &[f64], n: usize, f: F) -> f64 {
    sphere_area(n) * gauss::composite(breaks, RADIAL_ORDER, |r| r.powi(n as i32 - 1) * f(r))
}

impl RadialProfile for TruncatedBubble {
    fn value(&self, r: f64) -> f64 {
        self.radial(r)
    }
    fn support(&self) -> f64 {
        2.0 * self.cutoff.eta
    }
    fn breakpoints(&self) -> Vec<f64> {
        let eta = self.cutoff.eta;
        let mut b = self.bubble.scale_breaks(eta);
        b.extend(self.cutoff.transition_breaks());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

impl RadialProfile for Bubble {
    fn value(&self, r: f64) -> f64 {
        self.radial(r)
    }
    fn support(&self) -> f64 {
        f64::INFINITY
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.scale_breaks(4.0 * self.eps)
    }
}

/// The removed part U(1 - Ψ) as a profile (supported on [η, ∞)).
#[derive(Debug, Clone)]
pub struct Removed<'a>(pub &'a TruncatedBubble);

impl RadialProfile for Removed<'_> {
    fn value(&self, r: f64) -> f64 {
        self.0.removed(r)
    }
    fn support(&self) -> f64 {
        f64::INFINITY
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::lebesgue_power_integral;
    use proptest::prelude::*;

    #[test]
    fn center_values() {
        let b = Bubble::new(6, 0.5, 1.0);
        assert_eq!(b.radial(0.0), 1.0);
        let b = Bubble::new(6, 0.5, 0.1);
        assert!((b.radial(0.0) - 0.1f64.powf(-2.5)).abs() < 1e-10);
    }

    #[test]
    fn cutoff_regions() {
        let tb = TruncatedBubble::new(6, 0.5, 0.3, 1.0);
        assert_eq!(tb.radial(3.0), 0.0);
        assert_eq!(tb.radial(2.0), 0.0);
        for r in [0.0, 0.2, 0.99, 1.0] {
            assert_eq!(tb.radial(r), tb.bubble.radial(r));
        }
        let c = Cutoff::new(1.0);
        for t in [0.1, 0.5, 0.9] {
            let r = 1.0 + t;
            assert!((c.radial(r) + c.radial_complement(r) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_bound() {
        // u ≤ C ε^{(n-2s)/2} away from the center.
        let eta = 1.0;
        let mut ratios = Vec::new();
        for eps in [0.4, 0.1, 0.01, 0.001] {
            let tb = TruncatedBubble::new(6, 0.5, eps, eta);
            let m = (0..200)
                .map(|i| tb.radial(eta + i as f64 * 0.01))
                .fold(0.0, f64::max);
            ratios.push(m / eps.powf(2.5));
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(max.is_finite() && max <= 1.0 + 1e-12, "{ratios:?}");
    }

    #[test]
    fn l2_norm_leading_term() {
        let (n, s) = (6, 0.5);
        let k2s = lebesgue_power_integral(n, n as f64 - 2.0 * s).unwrap();
        for eps in [0.01, 0.003] {
            let tb = TruncatedBubble::new(n, s, eps, 1.0);
            let v = tb.lq_norm(2.0).unwrap() / eps.powf(2.0 * s);
            assert!(((v - k2s) / k2s).abs() < 5.0 * eps.powf(n as f64 - 4.0 * s), "{v} vs {k2s}");
        }
    }

    #[test]
    fn critical_norm_defect_is_consistent() {
        let (n, s) = (6, 0.5);
        let qs = 2.0 * n as f64 / (n as f64 - 2.0 * s);
        let kqs = lebesgue_power_integral(n, n as f64).unwrap();
        for eps in [0.4, 0.1] {
            let tb = TruncatedBubble::new(n, s, eps, 1.0);
            let direct = tb.lq_norm(qs).unwrap();
            let via_defect = kqs - tb.lq_defect(qs).unwrap();
            assert!(((direct - via_defect) / kqs).abs() < 1e-12, "{direct} vs {via_defect}");
        }
    }

    #[test]
    fn critical_norm_is_scale_free() {
        let (n, s) = (6, 0.5);
        let qs = 2.0 * n as f64 / (n as f64 - 2.0 * s);
        let vals: Vec<f64> = [0.05, 0.1, 0.3, 0.7, 1.0]
            .iter()
            .map(|&eps| {
                let b = Bubble::new(n, s, eps);
                radial_integral(&b.scale_breaks(1e3), n, |r| b.radial(r).powf(qs))
            })
            .collect();
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - min) / max < 1e-6, "{vals:?}");
    }

    proptest! {
        #[test]
        fn scaling_identity(eps in 0.01f64..3.0, x in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let b = Bubble::new(6, 0.5, eps);
            let b1 = Bubble::new(6, 0.5, 1.0);
            let xs: Vec<f64> = x.iter().map(|v| v / eps).collect();
            let lhs = b.eval(&x);
            let rhs = eps.powf(-2.5) * b1.eval(&xs);
            prop_assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        }

        #[test]
        fn radially_decreasing(eps in 0.01f64..2.0, r in 0.0f64..5.0, dr in 1e-6f64..1.0) {
            let b = Bubble::new(5, 0.3, eps);
            prop_assert!(b.radial(r + dr) < b.radial(r));
            prop_assert!(b.radial(r) > 0.0);
        }

        #[test]
        fn lipschitz_off_center(eps in 0.01f64..0.5, r in 1.0f64..2.5, dr in -0.5f64..0.5) {
            // |u(x) - u(y)| ≤ C ε^{(n-2s)/2} |x - y| with y outside B(0, η).
            let tb = TruncatedBubble::new(6, 0.5, eps, 1.0);
            let y = r;
            let x = (r + dr).max(0.75);
            let diff = (tb.radial(x) - tb.radial(y)).abs();
            let c = diff / (eps.powf(2.5) * (x - y).abs().max(1e-300));
            prop_assert!(c < 100.0);
        }

        #[test]
        fn shrinking_support_shrinks_norm(eps in 0.05f64..0.5, eta in 0.5f64..2.0, f in 0.3f64..0.95) {
            let big = TruncatedBubble::new(6, 0.5, eps, eta);
            let small = TruncatedBubble::new(6, 0.5, eps, eta * f);
            prop_assert!(small.lq_norm(2.2).unwrap() <= big.lq_norm(2.2).unwrap());
        }
    }
}
