//! Monte Carlo estimate of ∬ p(x) |u(x) - u(y)|² |x - y|^{-n-2s} dx dy.
//!
//! With u supported in the ball B_S the symmetrized integrand only lives on
//! pairs with x ∈ B_S, counting pairs with y outside the ball twice:
//!
//!   I = ∫_{B_S} ∫_{ℝⁿ} ½(p(x) + p(y)) (u(x) - u(y))² |z|^{-n-2s}
//!       (1 + 1[y ∉ B_S]) dy dx,   y = x + z.
//!
//! x is drawn from a mixture of the uniform law on B_S, the uniform law on
//! a small ball B_ℓ and a log-uniform radius on [ℓ, S]. z is drawn from an
//! equal mixture of two laws, at scales ℓ and S, each with density
//! ∝ |z|^{2-n-2s} inside its scale and a |z|^{-n-2s} Pareto tail beyond, so
//! the kernel singularity cancels against the quadratic difference.
//!
//! Samples are processed in batches with counter-derived ChaCha streams and
//! reduced in batch order, so a seed fixes the result whatever the thread
//! count.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Method, SeminormEstimate};
use crate::error::{Error, Result};
use crate::par;
use crate::special::sphere_area;

/// Where the integrand lives.
#[derive(Debug, Clone, PartialEq)]
pub struct McRegion {
    pub center: Vec<f64>,
    /// u vanishes outside B(center, radius).
    pub radius: f64,
    /// Length scale where u concentrates.
    pub focus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
    pub batch: u64,
    /// Mixture weights for x: uniform in B_S, uniform in B_ℓ, log-radius.
    pub mix: [f64; 3],
}

impl McOptions {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            batch: 4096,
            mix: [0.2, 0.4, 0.4],
        }
    }
}

/// Law of z: density c|z|^{2-n-2s} on |z| ≤ Z, c Z² |z|^{-n-2s} beyond.
struct ZLaw {
    scale: f64,
    c: f64,
    p_inner: f64,
    s: f64,
}

impl ZLaw {
    fn new(n: usize, s: f64, scale: f64) -> Self {
        let sig = sphere_area(n);
        let t = 2.0 - 2.0 * s;
        let mass = sig * scale.powf(t) * (1.0 / t + 1.0 / (2.0 * s));
        Self {
            scale,
            c: 1.0 / mass,
            p_inner: s,
            s,
        }
    }

    fn density(&self, n: usize, rz: f64) -> f64 {
        let e = -(n as f64) - 2.0 * self.s;
        if rz <= self.scale {
            self.c * rz.powf(e + 2.0)
        } else {
            self.c * self.scale * self.scale * rz.powf(e)
        }
    }

    fn radius(&self, u1: f64, u2: f64) -> f64 {
        if u1 < self.p_inner {
            self.scale * u2.powf(1.0 / (2.0 - 2.0 * self.s))
        } else {
            self.scale * (1.0 - u2).powf(-1.0 / (2.0 * self.s))
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize, out: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for v in out.iter_mut().take(n) {
            let g: f64 = rng.sample(StandardNormal);
            *v = g;
            norm += g * g;
        }
        if norm > 1e-20 {
            let inv = 1.0 / norm.sqrt();
            for v in out.iter_mut().take(n) {
                *v *= inv;
            }
            return;
        }
    }
}

/// Unbiased estimate of the weighted seminorm of `u`.
///
/// `u` and `p` are evaluated at points of ℝⁿ; nothing here assumes radial
/// symmetry.
pub fn seminorm_mc(
    u: &(dyn Fn(&[f64]) -> f64 + Sync),
    p: &(dyn Fn(&[f64]) -> f64 + Sync),
    n: usize,
    s: f64,
    region: &McRegion,
    opts: &McOptions,
) -> Result<SeminormEstimate> {
    if opts.samples < 2 {
        return Err(Error::invalid("samples", "need at least two samples"));
    }
    if !(region.radius > 0.0 && region.focus > 0.0 && region.focus <= region.radius) {
        return Err(Error::invalid("region", "need 0 < focus <= radius"));
    }
    if region.center.len() != n {
        return Err(Error::invalid("region", "center has the wrong dimension"));
    }
    let big = region.radius;
    let ell = region.focus;
    let nf = n as f64;
    let sig = sphere_area(n);
    let vol_big = sig * big.powf(nf) / nf;
    let vol_small = sig * ell.powf(nf) / nf;
    let log_span = (big / ell).ln();
    let msum: f64 = opts.mix.iter().sum();
    let mix = opts.mix.map(|m| m / msum);
    let use_log = log_span > 1e-12 && mix[2] > 0.0;
    let mix = if use_log { mix } else { [mix[0] + mix[2], mix[1], 0.0] };
    let zl = [ZLaw::new(n, s, ell), ZLaw::new(n, s, big)];

    let x_density = |rx: f64| {
        let mut d = mix[0] / vol_big;
        if rx < ell {
            d += mix[1] / vol_small;
        }
        if use_log && rx >= ell && rx <= big {
            d += mix[2] / (sig * rx.powf(nf) * log_span);
        }
        d
    };

    let batches = opts.samples.div_ceil(opts.batch);
    let parts = par::map_indices(batches as usize, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(b as u64);
        let count = opts.batch.min(opts.samples - b as u64 * opts.batch);
        let mut dir = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..count {
            // x
            let pick: f64 = rng.random();
            let v: f64 = rng.random();
            let rx = if pick < mix[0] {
                big * v.powf(1.0 / nf)
            } else if pick < mix[0] + mix[1] {
                ell * v.powf(1.0 / nf)
            } else {
                ell * (v * log_span).exp()
            };
            unit_vector(&mut rng, n, &mut dir);
            for i in 0..n {
                x[i] = region.center[i] + rx * dir[i];
            }
            // z
            let which: f64 = rng.random();
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let law = if which < 0.5 { &zl[0] } else { &zl[1] };
            let rz = law.radius(u1, u2);
            unit_vector(&mut rng, n, &mut dir);
            let mut ry2 = 0.0;
            for i in 0..n {
                y[i] = x[i] + rz * dir[i];
                let d = y[i] - region.center[i];
                ry2 += d * d;
            }
            let du = u(&x) - u(&y);
            let val = if du == 0.0 || rz == 0.0 {
                0.0
            } else {
                let qz = 0.5 * (zl[0].density(n, rz) + zl[1].density(n, rz));
                let kern = rz.powf(-nf - 2.0 * s);
                let outside = if ry2 > big * big { 2.0 } else { 1.0 };
                0.5 * (p(&x) + p(&y)) * du * du * kern * outside / (qz * x_density(rx))
            };
            sum += val;
            sum2 += val * val;
        }
        (sum, sum2, count)
    });
    let (mut sum, mut sum2, mut count) = (0.0, 0.0, 0u64);
    for (a, b, c) in parts {
        sum += a;
        sum2 += b;
        count += c;
    }
    let nn = count as f64;
    let mean = sum / nn;
    let var = ((sum2 / nn - mean * mean) * nn / (nn - 1.0)).max(0.0);
    let se = (var / nn).sqrt();
    let warning = if mean != 0.0 && se > 0.2 * mean.abs() {
        Some(format!(
            "relative standard error {:.1}% exceeds 20%",
            100.0 * se / mean.abs()
        ))
    } else {
        None
    };
    Ok(SeminormEstimate {
        value: mean.max(0.0),
        abs_error: se,
        method: Method::MonteCarlo,
        samples_or_panels: count,
        seed: Some(opts.seed),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::sphere_area;

    #[test]
    fn zero_function() {
        let region = McRegion {
            center: vec![0.0; 4],
            radius: 1.0,
            focus: 0.5,
        };
        let e = seminorm_mc(&|_: &[f64]| 0.0, &|_: &[f64]| 1.0, 4, 0.3, &region, &McOptions::new(1000, 1)).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.abs_error, 0.0);
    }

    #[test]
    fn z_law_is_normalized() {
        // ∫ density = σ ∫ t^{n-1} q(t) dt.
        let (n, s) = (5, 0.35);
        let law = ZLaw::new(n, s, 0.7);
        // t^{n-1} q(t) = c t^{1-2s} inside, integrated with the matching Jacobi rule.
        let jac = crate::gauss::jacobi01(8, 1.0 - 2.0 * s);
        let inner: f64 = sphere_area(n)
            * jac
                .nodes
                .iter()
                .zip(&jac.weights)
                .map(|(&y, &w)| {
                    let t = 0.7 * y;
                    0.7 * w * t.powi(n as i32 - 1) * law.density(n, t) / y.powf(1.0 - 2.0 * s)
                })
                .sum::<f64>();
        // Tail integral in closed form.
        let tail = sphere_area(n) * law.c * 0.49 * 0.7f64.powf(-2.0 * s) / (2.0 * s);
        assert!((inner + tail - 1.0).abs() < 1e-10);
    }

    #[test]
    fn seed_reproducible_and_thread_independent() {
        let region = McRegion {
            center: vec![0.0; 3],
            radius: 1.0,
            focus: 0.2,
        };
        let u = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (1.0 - r2).max(0.0).powi(2)
        };
        let p = |_: &[f64]| 1.0;
        let o = McOptions::new(20_000, 9);
        let a = seminorm_mc(&u, &p, 3, 0.4, &region, &o).unwrap();
        let b = crate::par::with_threads(1, || seminorm_mc(&u, &p, 3, 0.4, &region, &o).unwrap());
        assert_eq!(a, b);
    }
}
