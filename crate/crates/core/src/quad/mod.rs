//! Weighted Gagliardo double integrals.
//!
//! For radial functions the 2n-dimensional integral collapses to the two
//! radii and is evaluated deterministically by [`pair::PairEngine`]. A Monte
//! Carlo estimator over ℝⁿ × ℝⁿ ([`mc`]) serves as an independent check.

pub mod mc;
pub mod pair;

use crate::bubble::radial_integral;
use crate::error::{Error, Result};
use crate::problem::WeightModel;

pub use mc::{seminorm_mc, McOptions, McRegion};
pub use pair::{PairEngine, PairGrid, PairOptions, PairSink, PowerWeight, RadialWeight, ScalarSink};

/// A radial function about the center.
pub trait RadialProfile: Sync {
    fn value(&self, r: f64) -> f64;
    /// Radius beyond which the function vanishes, or infinity.
    fn support(&self) -> f64;
    /// Radii where the function has kinks or changes scale.
    fn breakpoints(&self) -> Vec<f64>;
}

/// A closure with its support and breakpoints.
pub struct FnProfile<F> {
    pub f: F,
    pub support: f64,
    pub breaks: Vec<f64>,
}

impl<F: Fn(f64) -> f64 + Sync> RadialProfile for FnProfile<F> {
    fn value(&self, r: f64) -> f64 {
        if r >= self.support {
            0.0
        } else {
            (self.f)(r)
        }
    }
    fn support(&self) -> f64 {
        self.support
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// The zero function.
pub struct Zero;

impl RadialProfile for Zero {
    fn value(&self, _r: f64) -> f64 {
        0.0
    }
    fn support(&self) -> f64 {
        0.0
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![1.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    RadialDeterministic,
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::RadialDeterministic => "radial",
            Method::MonteCarlo => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeminormEstimate {
    pub value: f64,
    pub abs_error: f64,
    pub method: Method,
    /// Panels for the radial path, samples for Monte Carlo.
    pub samples_or_panels: u64,
    pub seed: Option<u64>,
    /// Set when the Monte Carlo relative standard error exceeds 20%.
    pub warning: Option<String>,
}

/// Accuracy controls for the deterministic path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOptions {
    pub pair: PairOptions,
    /// Relative tolerance on the panel-halving difference.
    pub rel_tol: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            pair: PairOptions::default(),
            rel_tol: 1e-8,
        }
    }
}

/// Ratio between the exterior cut and the largest finite feature when a
/// profile has unbounded support.
const UNBOUNDED_REACH: f64 = 1e6;

/// The grid used for a pair of profiles and a weight.
pub fn grid_for<W: RadialWeight + ?Sized>(
    profiles: &[&dyn RadialProfile],
    weight: &W,
) -> PairGrid {
    let mut pts: Vec<f64> = Vec::new();
    let mut support: f64 = 0.0;
    for p in profiles {
        pts.extend(p.breakpoints());
        support = support.max(p.support());
    }
    pts.extend(weight.breakpoints());
    let tail = weight.tail().start;
    let mut top = pts.iter().cloned().fold(0.0, f64::max);
    if tail.is_finite() {
        top = top.max(tail);
    }
    let extent = if support.is_finite() {
        pts.push(support);
        (8.0 * support).max(2.0 * top)
    } else {
        UNBOUNDED_REACH * top
    };
    PairGrid::build(pts, support, extent, true)
}

/// ⟨f, g⟩_p = ∬ p(x) (f(x) - f(y)) (g(x) - g(y)) |x - y|^{-n-2s} dx dy on
/// an explicit grid.
pub fn bilinear_on_grid<W: RadialWeight + ?Sized>(
    engine: &PairEngine,
    grid: &PairGrid,
    f: &dyn RadialProfile,
    g: &dyn RadialProfile,
    weight: &W,
) -> f64 {
    let ff = |r: f64| f.value(r);
    let gg = |r: f64| g.value(r);
    engine
        .run(grid, weight, || ScalarSink::new(&ff, &gg))
        .value()
}

/// ⟨f, g⟩_p on the default grid, without an error estimate.
pub fn bilinear_value<W: RadialWeight + ?Sized>(
    engine: &PairEngine,
    f: &dyn RadialProfile,
    g: &dyn RadialProfile,
    weight: &W,
) -> f64 {
    let grid = grid_for(&[f, g], weight);
    bilinear_on_grid(engine, &grid, f, g, weight)
}

/// ⟨f, g⟩_p with a panel-halving error estimate.
pub fn bilinear_radial(
    f: &dyn RadialProfile,
    g: &dyn RadialProfile,
    w: &WeightModel,
    n: usize,
    s: f64,
    opts: &RadialOptions,
) -> Result<SeminormEstimate> {
    let engine = PairEngine::with_options(n, s, opts.pair);
    let grid = grid_for(&[f, g], w);
    let coarse = bilinear_on_grid(&engine, &grid, f, g, w);
    let fine_grid = grid.refined();
    let fine = bilinear_on_grid(&engine, &fine_grid, f, g, w);
    let abs_error = (fine - coarse).abs();
    if abs_error > opts.rel_tol * fine.abs() + 1e-300 && abs_error > 1e-13 * coarse.abs().max(fine.abs()) {
        return Err(Error::NonConvergence {
            what: "radial seminorm",
            detail: format!(
                "panel halving moved the value from {coarse:e} to {fine:e} (tolerance {:e})",
                opts.rel_tol
            ),
        });
    }
    Ok(SeminormEstimate {
        value: fine,
        abs_error,
        method: Method::RadialDeterministic,
        samples_or_panels: fine_grid.panels() as u64,
        seed: None,
        warning: None,
    })
}

/// ∬ p(x) |u(x) - u(y)|² |x - y|^{-n-2s} dx dy for radial `u` and `p`.
pub fn seminorm_radial(
    u: &dyn RadialProfile,
    w: &WeightModel,
    n: usize,
    s: f64,
    opts: &RadialOptions,
) -> Result<SeminormEstimate> {
    let mut est = bilinear_radial(u, u, w, n, s, opts)?;
    est.value = est.value.max(0.0);
    Ok(est)
}

/// ∫ |u|^q over ℝⁿ for a radial profile.
pub fn lq_integral(u: &dyn RadialProfile, n: usize, q: f64) -> f64 {
    let mut b = u.breakpoints();
    b.push(0.0);
    let sup = u.support();
    if sup.is_finite() {
        b.push(sup);
        b.retain(|&x| x <= sup);
    } else {
        let mut top = b.iter().cloned().fold(0.0, f64::max);
        let end = UNBOUNDED_REACH * top;
        while top < end {
            top *= 2.0;
            b.push(top);
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup();
    radial_integral(&b, n, |r| u.value(r).abs().powf(q))
}

/// Which energy [`weighted_energy`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyForm {
    /// N_p(u) - λ ∫|u|^q.
    Rayleigh,
    /// ½ N_p(u) - (λ/q) ∫|u|^q - (1/q_s) ∫|u|^{q_s}.
    Functional,
}

/// The energy of a radial profile, with N_p the weighted seminorm.
pub fn weighted_energy(
    u: &dyn RadialProfile,
    w: &WeightModel,
    n: usize,
    s: f64,
    lambda: f64,
    q: f64,
    form: EnergyForm,
) -> Result<f64> {
    let engine = PairEngine::new(n, s);
    let np = bilinear_value(&engine, u, u, w);
    let lq = if lambda != 0.0 { lq_integral(u, n, q) } else { 0.0 };
    Ok(match form {
        EnergyForm::Rayleigh => np - lambda * lq,
        EnergyForm::Functional => {
            let qs = 2.0 * n as f64 / (n as f64 - 2.0 * s);
            0.5 * np - lambda / q * lq - lq_integral(u, n, qs) / qs
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::{Bubble, TruncatedBubble};
    use crate::problem::ProblemParams;

    #[test]
    fn zero_profile_has_zero_seminorm() {
        let w = WeightModel::constant(1.0);
        let e = seminorm_radial(&Zero, &w, 6, 0.5, &RadialOptions::default()).unwrap();
        assert_eq!(e.value, 0.0);
        let e = weighted_energy(&Zero, &w, 6, 0.5, 1.0, 2.2, EnergyForm::Functional).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn weight_linearity() {
        let p = ProblemParams::new(6, 0.5);
        let w = WeightModel::truncated_power(&p);
        let u = TruncatedBubble::new(6, 0.5, 0.5, 1.0);
        let eng = PairEngine::new(6, 0.5);
        let a = bilinear_value(&eng, &u, &u, &w);
        let b = bilinear_value(&eng, &u, &u, &w.scaled(2.0));
        assert!((b - 2.0 * a).abs() < 1e-10 * a);
    }

    #[test]
    fn homogeneity() {
        let w = WeightModel::constant(1.3);
        let u = TruncatedBubble::new(5, 0.4, 0.3, 1.0);
        let c = 2.7;
        let cu = FnProfile {
            f: |r: f64| c * u.radial(r),
            support: 2.0,
            breaks: u.breakpoints(),
        };
        let eng = PairEngine::new(5, 0.4);
        let a = bilinear_value(&eng, &u, &u, &w);
        let b = bilinear_value(&eng, &cu, &cu, &w);
        assert!((b - c * c * a).abs() < 1e-10 * b);
    }

    #[test]
    fn scale_invariance_of_full_bubble_seminorm() {
        let w = WeightModel::constant(1.0);
        let eng = PairEngine::new(6, 0.5);
        let vals: Vec<f64> = [1.0, 0.1, 3.0]
            .iter()
            .map(|&e| bilinear_value(&eng, &Bubble::new(6, 0.5, e), &Bubble::new(6, 0.5, e), &w))
            .collect();
        for v in &vals {
            assert!(((v - vals[0]) / vals[0]).abs() < 1e-9, "{vals:?}");
        }
    }

    #[test]
    fn panel_halving_is_stable() {
        let w = WeightModel::truncated_power(&ProblemParams::new(6, 0.5));
        let u = TruncatedBubble::new(6, 0.5, 0.2, 1.0);
        let e = seminorm_radial(&u, &w, 6, 0.5, &RadialOptions::default()).unwrap();
        assert!(e.abs_error < 1e-9 * e.value, "{e:?}");
    }

    #[test]
    fn lq_matches_bubble_module() {
        let u = TruncatedBubble::new(6, 0.5, 0.1, 1.0);
        let a = lq_integral(&u, 6, 2.2);
        let b = u.lq_norm(2.2).unwrap();
        assert!((a - b).abs() < 1e-13 * b);
    }
}
