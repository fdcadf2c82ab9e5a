//! Bubble constants: K_{q_s}, K_{q,s}, K_{2,s}, the seminorm constant K_s
//! of U_1 and the Sobolev constant S_s = K_s / K_{q_s}^{2/q_s}.

use std::f64::consts::PI;

use crate::bubble::Bubble;
use crate::error::{Error, Result};
use crate::problem::{critical_exponent, WeightModel};
use crate::quad::{bilinear_value, PairEngine, PairOptions};
use crate::special::ln_gamma;

/// ∫_{ℝⁿ} (1 + |y|²)^{-α} dy = π^{n/2} Γ(α - n/2) / Γ(α), for α > n/2.
pub fn lebesgue_power_integral(n: usize, alpha: f64) -> Result<f64> {
    let h = n as f64 / 2.0;
    if !(alpha > h) {
        return Err(Error::Divergent(format!(
            "(1 + |y|^2)^(-{alpha}) is not integrable on R^{n} (needs alpha > {h})"
        )));
    }
    Ok((h * PI.ln() + ln_gamma(alpha - h) - ln_gamma(alpha)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSet {
    pub n: usize,
    pub s: f64,
    pub q_s: f64,
    /// ∫ (1 + |y|²)^{-n}.
    pub kqs: f64,
    /// ∫ (1 + |y|²)^{-(n-2s)}.
    pub k2s: f64,
    /// Seminorm of U_1.
    pub ks: f64,
    pub ss: f64,
}

impl ConstantSet {
    /// K_{q,s} = ∫ (1 + |y|²)^{-q(n-2s)/2}, finite for q(n - 2s) > n.
    pub fn kq(&self, q: f64) -> Result<f64> {
        lebesgue_power_integral(self.n, q * (self.n as f64 - 2.0 * self.s) / 2.0)
    }

    /// K_{q_s}^{2/q_s}.
    pub fn kqs_pow(&self) -> f64 {
        self.kqs.powf(2.0 / self.q_s)
    }

    /// (s/n)(p0 S_s)^{n/2s}.
    pub fn mountain_pass_bound(&self, p0: f64) -> f64 {
        self.s / self.n as f64 * (p0 * self.ss).powf(self.n as f64 / (2.0 * self.s))
    }

    /// (p0 S_s)^{1/(q_s - 2)}.
    pub fn fiber_limit(&self, p0: f64) -> f64 {
        (p0 * self.ss).powf(1.0 / (self.q_s - 2.0))
    }
}

/// K_s by radial quadrature with the given engine.
pub fn seminorm_constant(engine: &PairEngine) -> f64 {
    let u = Bubble::new(engine.n, engine.s, 1.0);
    bilinear_value(engine, &u, &u, &WeightModel::constant(1.0))
}

/// All constants for `(n, s)` with the default quadrature.
pub fn bubble_constants(n: usize, s: f64) -> Result<ConstantSet> {
    bubble_constants_with(n, s, PairOptions::default())
}

pub fn bubble_constants_with(n: usize, s: f64, opts: PairOptions) -> Result<ConstantSet> {
    let q_s = critical_exponent(n, s)?;
    let kqs = lebesgue_power_integral(n, n as f64)?;
    let k2s = lebesgue_power_integral(n, n as f64 - 2.0 * s)?;
    let engine = PairEngine::with_options(n, s, opts);
    let ks = seminorm_constant(&engine);
    Ok(ConstantSet {
        n,
        s,
        q_s,
        kqs,
        k2s,
        ks,
        ss: ks / kqs.powf(2.0 / q_s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss;
    use crate::special::{gamma, sphere_area};
    use proptest::prelude::*;

    /// σ_{n-1} ∫_0^∞ r^{n-1} (1 + r²)^{-α} dr with r = t/(1 - t).
    fn radial_oracle(n: usize, alpha: f64) -> f64 {
        let breaks: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        sphere_area(n)
            * gauss::composite(&breaks, 30, |t| {
                if t >= 1.0 {
                    return 0.0;
                }
                let r = t / (1.0 - t);
                r.powi(n as i32 - 1) * (1.0 + r * r).powf(-alpha) / ((1.0 - t) * (1.0 - t))
            })
    }

    #[test]
    fn closed_form_examples() {
        let v = lebesgue_power_integral(6, 6.0).unwrap();
        assert!((v - PI.powi(3) / 60.0).abs() < 1e-14);
        assert!((v - radial_oracle(6, 6.0)).abs() < 1e-10 * v);
        assert!((lebesgue_power_integral(1, 1.0).unwrap() - PI).abs() < 1e-14);
        assert_eq!(lebesgue_power_integral(4, 2.0).unwrap_err().code(), "E_DIVERGENT");
        let k2s = lebesgue_power_integral(6, 5.0).unwrap();
        assert!((k2s - PI.powi(3) / 24.0).abs() < 1e-14);
        assert!((k2s - radial_oracle(6, 5.0)).abs() < 1e-10 * k2s);
    }

    #[test]
    fn defining_identity() {
        let c = bubble_constants(6, 0.5).unwrap();
        assert!((c.ss * c.kqs.powf(2.0 / c.q_s) - c.ks).abs() < 1e-8 * c.ks);
        assert_eq!(c.q_s, 2.4);
    }

    /// Sharp fractional Sobolev constant from the literature, rescaled to
    /// the kernel without the normalizing factor of (-Δ)^s.
    fn literature_ss(n: usize, s: f64) -> f64 {
        let nf = n as f64;
        let cns = s * 2f64.powf(2.0 * s) * gamma((nf + 2.0 * s) / 2.0)
            / (PI.powf(nf / 2.0) * gamma(1.0 - s));
        let sharp = 2f64.powf(2.0 * s) * PI.powf(s) * gamma((nf + 2.0 * s) / 2.0)
            / gamma((nf - 2.0 * s) / 2.0)
            * (gamma(nf / 2.0) / gamma(nf)).powf(2.0 * s / nf);
        2.0 / cns * sharp
    }

    #[test]
    fn seminorm_constant_matches_sharp_constant() {
        for (n, s) in [(6, 0.5), (3, 0.2), (5, 0.7), (8, 0.9)] {
            let c = bubble_constants(n, s).unwrap();
            let lit = literature_ss(n, s);
            assert!(((c.ss - lit) / lit).abs() < 1e-8, "n={n} s={s}: {} vs {lit}", c.ss);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn closed_form_vs_quadrature(n in 1usize..10, extra in 1.0f64..6.0) {
            let alpha = n as f64 / 2.0 + extra;
            let a = lebesgue_power_integral(n, alpha).unwrap();
            let b = radial_oracle(n, alpha);
            prop_assert!(((a - b) / a).abs() < 1e-10, "n={} alpha={}: {} vs {}", n, alpha, a, b);
        }

        #[test]
        fn decreasing_in_alpha(n in 1usize..10, extra in 0.1f64..6.0, step in 0.01f64..2.0) {
            let alpha = n as f64 / 2.0 + extra;
            prop_assert!(lebesgue_power_integral(n, alpha + step).unwrap() < lebesgue_power_integral(n, alpha).unwrap());
        }
    }
}
