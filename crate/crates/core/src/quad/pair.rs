//! Quadrature over the ordered pair region {0 ≤ ρ < r} of two radii.
//!
//! The engine walks cells of a 1D breakpoint grid and hands every quadrature
//! point to a [`PairSink`] together with its weight, which already contains
//! the symmetrized weight p(r) + p(ρ) and the pair density of the angular
//! kernel. The sink decides what to integrate (a scalar, a matrix, ...).
//!
//! Cell treatment:
//! * separated cells get a tensor Gauss–Legendre rule once their gap exceeds
//!   their width, otherwise the larger side is bisected;
//! * touching cells are balanced to a width ratio of at most 2, then split
//!   into two triangles at the shared corner, Duffy-mapped, and integrated
//!   with a Jacobi weight in the radial direction;
//! * diagonal cells use the map r = a + hx, r - ρ = hxy with Jacobi weights
//!   in both x and y;
//! * r beyond the grid end L is integrated analytically against the
//!   hypergeometric series of the kernel, with the profile taken at its far
//!   value.

use std::sync::Arc;

use crate::gauss::{self, Rule};
use crate::kernel::{series_coefficients, AngularKernel};
use crate::par;
use crate::problem::{Tail, WeightModel};

/// Radial weight used by the engine.
pub trait RadialWeight: Sync {
    fn value(&self, r: f64) -> f64;
    /// Far-field form. Only consulted when the exterior is integrated.
    fn tail(&self) -> Tail;
    /// Radii where the weight is not smooth.
    fn breakpoints(&self) -> Vec<f64>;
}

impl RadialWeight for WeightModel {
    fn value(&self, r: f64) -> f64 {
        self.radial(r)
    }
    fn tail(&self) -> Tail {
        WeightModel::tail(self)
    }
    fn breakpoints(&self) -> Vec<f64> {
        WeightModel::breakpoints(self)
    }
}

/// `r^k`, without a usable far field.
#[derive(Debug, Clone, Copy)]
pub struct PowerWeight {
    pub k: f64,
}

impl RadialWeight for PowerWeight {
    fn value(&self, r: f64) -> f64 {
        r.powf(self.k)
    }
    fn tail(&self) -> Tail {
        Tail {
            start: f64::INFINITY,
            p_inf: f64::NAN,
            coeff: 0.0,
            power: 1.0,
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Receives quadrature points of the pair integral.
pub trait PairSink: Send + Sized {
    /// A point with ρ < r, gap `d = r - ρ` (computed without cancellation)
    /// and weight `w`. The sink adds `w · Q(r, ρ)`.
    fn point(&mut self, r: f64, rho: f64, d: f64, w: f64);
    /// The exterior r ∈ [L, ∞) at fixed ρ. The sink adds `w · Q_far(ρ)`,
    /// the limit of Q(r, ρ) as r → ∞.
    fn far(&mut self, rho: f64, w: f64);
    fn absorb(&mut self, other: Self);
}

/// Rule orders and cell admissibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    /// Gauss–Legendre order per direction on separated cells.
    pub n_far: usize,
    /// Jacobi/Legendre order per direction on touching and diagonal cells.
    pub n_near: usize,
    /// Separated cells need gap ≥ `adm` · max width.
    pub adm: f64,
    /// Geometric sub-panels towards the singular corner, ratio 1/4.
    pub near_levels: usize,
    /// Number of work chunks (fixed, so the reduction order is too).
    pub chunks: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            n_far: 10,
            n_near: 10,
            adm: 1.0,
            near_levels: 2,
            chunks: 32,
        }
    }
}

/// Breakpoints covering [0, L] plus what lies beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrid {
    pub breaks: Vec<f64>,
    /// Cells whose ρ side starts at or beyond this radius are skipped.
    pub support: f64,
    /// Integrate r ∈ [L, ∞) analytically.
    pub exterior: bool,
}

impl PairGrid {
    /// Merges and sorts breakpoints, drops near-duplicates, and extends the
    /// grid geometrically (ratio 2) from the last break to `extent`.
    pub fn build(mut points: Vec<f64>, support: f64, extent: f64, exterior: bool) -> Self {
        points.push(0.0);
        points.retain(|x| x.is_finite() && *x >= 0.0 && *x <= extent);
        points.sort_by(f64::total_cmp);
        let mut breaks: Vec<f64> = Vec::with_capacity(points.len() + 32);
        for x in points {
            match breaks.last() {
                Some(&last) if x - last <= 1e-12 * x.max(1e-300) => {}
                _ => breaks.push(x),
            }
        }
        let mut last = *breaks.last().unwrap_or(&0.0);
        if last <= 0.0 {
            last = extent;
            breaks.push(last);
        }
        while last < extent {
            let next = (2.0 * last).min(extent);
            let next = if extent - next < 0.5 * (next - last) { extent } else { next };
            breaks.push(next);
            last = next;
        }
        Self {
            breaks,
            support,
            exterior,
        }
    }

    pub fn extent(&self) -> f64 {
        *self.breaks.last().expect("empty grid")
    }

    /// Every panel bisected.
    pub fn refined(&self) -> Self {
        let mut b = Vec::with_capacity(2 * self.breaks.len());
        for w in self.breaks.windows(2) {
            b.push(w[0]);
            b.push(0.5 * (w[0] + w[1]));
        }
        b.push(self.extent());
        Self {
            breaks: b,
            support: self.support,
            exterior: self.exterior,
        }
    }

    pub fn panels(&self) -> usize {
        self.breaks.len() - 1
    }
}

/// The pair quadrature for one `(n, s)`.
#[derive(Debug, Clone)]
pub struct PairEngine {
    pub n: usize,
    pub s: f64,
    pub opts: PairOptions,
    kernel: Arc<AngularKernel>,
    jac_x: Arc<Rule>,
    jac_y: Arc<Rule>,
}

impl PairEngine {
    pub fn new(n: usize, s: f64) -> Self {
        Self::with_options(n, s, PairOptions::default())
    }

    pub fn with_options(n: usize, s: f64, opts: PairOptions) -> Self {
        Self {
            n,
            s,
            opts,
            kernel: AngularKernel::shared(n, s),
            jac_x: gauss::jacobi01(opts.n_near, 2.0 - 2.0 * s),
            jac_y: gauss::jacobi01(opts.n_near, 1.0 - 2.0 * s),
        }
    }

    pub fn kernel(&self) -> &AngularKernel {
        &self.kernel
    }

    /// Runs the quadrature. `make` creates an empty sink per work chunk;
    /// chunks are merged in a fixed order.
    pub fn run<W, S, F>(&self, grid: &PairGrid, weight: &W, make: F) -> S
    where
        W: RadialWeight + ?Sized,
        S: PairSink,
        F: Fn() -> S + Sync,
    {
        let np = grid.panels();
        let chunks = self.opts.chunks.clamp(1, np.max(1));
        let bounds: Vec<(usize, usize)> = (0..chunks)
            .map(|c| (c * np / chunks, (c + 1) * np / chunks))
            .collect();
        let parts = par::map_indices(chunks + 1, |c| {
            let mut sink = make();
            if c < chunks {
                let (lo, hi) = bounds[c];
                let mut ctx = Ctx {
                    eng: self,
                    weight,
                    sink: &mut sink,
                    support: grid.support,
                };
                for i in lo..hi {
                    let r = (grid.breaks[i], grid.breaks[i + 1]);
                    for j in 0..=i {
                        let rho = (grid.breaks[j], grid.breaks[j + 1]);
                        if rho.0 >= grid.support {
                            break;
                        }
                        if i == j {
                            ctx.diagonal(r);
                        } else {
                            ctx.cell(r, rho);
                        }
                    }
                }
            } else if grid.exterior {
                self.exterior(grid, weight, &mut sink);
            }
            sink
        });
        let mut it = parts.into_iter();
        let mut total = it.next().expect("at least one chunk");
        for p in it {
            total.absorb(p);
        }
        total
    }

    fn exterior<W: RadialWeight + ?Sized, S: PairSink>(&self, grid: &PairGrid, weight: &W, sink: &mut S) {
        let l = grid.extent();
        let tail = weight.tail();
        assert!(
            tail.start <= l,
            "weight tail starts at {} beyond the grid end {l}",
            tail.start
        );
        let s2 = 2.0 * self.s;
        let sig = self.kernel.sphere();
        let coeffs = series_coefficients(self.n, self.s, 48);
        // Per series term: the r-integrals of r^{-1-2s-2k} p(r) split in
        // the constant and power parts of the tail.
        let base: Vec<(f64, f64)> = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let e = s2 + 2.0 * k as f64;
                let a = c * l.powf(-s2) / e;
                let b = if tail.coeff != 0.0 {
                    c * tail.coeff * l.powf(-s2 - tail.power) / (e + tail.power)
                } else {
                    0.0
                };
                (a, b)
            })
            .collect();
        let rho_max = grid.support.min(0.25 * l);
        let g = gauss::rule(self.opts.n_far);
        for w in grid.breaks.windows(2) {
            if w[0] >= rho_max {
                break;
            }
            let hi = w[1].min(rho_max);
            for (rho, gw) in g.mapped(w[0], hi) {
                let pr = weight.value(rho);
                let x = (rho / l) * (rho / l);
                let mut xp = 1.0;
                let mut sum = 0.0;
                for &(a, b) in &base {
                    let term = xp * ((tail.p_inf + pr) * a + b);
                    sum += term;
                    if term.abs() < 1e-18 * sum.abs() {
                        break;
                    }
                    xp *= x;
                }
                let t = sig * sig * rho.powi(self.n as i32 - 1) * sum;
                sink.far(rho, gw * t);
            }
        }
    }
}

struct Ctx<'a, W: ?Sized, S> {
    eng: &'a PairEngine,
    weight: &'a W,
    sink: &'a mut S,
    support: f64,
}

impl<W: RadialWeight + ?Sized, S: PairSink> Ctx<'_, W, S> {
    #[inline]
    fn emit(&mut self, r: f64, rho: f64, d: f64, w: f64) {
        let pw = self.weight.value(r) + self.weight.value(rho);
        let g = self.eng.kernel.pair_density(r, rho, d);
        self.sink.point(r, rho, d, w * pw * g);
    }

    /// r-interval strictly above the ρ-interval or touching it.
    fn cell(&mut self, r: (f64, f64), rho: (f64, f64)) {
        if rho.0 >= self.support {
            return;
        }
        let wr = r.1 - r.0;
        let wp = rho.1 - rho.0;
        let gap = r.0 - rho.1;
        if gap <= 0.0 {
            self.touching(r, rho);
        } else if gap >= self.eng.opts.adm * wr.max(wp) {
            self.tensor(r, rho);
        } else if wr >= wp {
            let m = 0.5 * (r.0 + r.1);
            self.cell((r.0, m), rho);
            self.cell((m, r.1), rho);
        } else {
            let m = 0.5 * (rho.0 + rho.1);
            self.cell(r, (rho.0, m));
            self.cell(r, (m, rho.1));
        }
    }

    fn tensor(&mut self, r: (f64, f64), rho: (f64, f64)) {
        let g = gauss::rule(self.eng.opts.n_far);
        for (x, wx) in g.mapped(r.0, r.1) {
            for (y, wy) in g.mapped(rho.0, rho.1) {
                self.emit(x, y, x - y, wx * wy);
            }
        }
    }

    fn touching(&mut self, r: (f64, f64), rho: (f64, f64)) {
        let wr = r.1 - r.0;
        let wp = rho.1 - rho.0;
        if wr > 2.0 * wp {
            let m = r.0 + 0.5 * wr;
            self.touching((r.0, m), rho);
            self.cell((m, r.1), rho);
            return;
        }
        if wp > 2.0 * wr {
            let m = rho.1 - 0.5 * wp;
            self.touching(r, (m, rho.1));
            self.cell(r, (rho.0, m));
            return;
        }
        let c = r.0;
        let alpha = 2.0 - 2.0 * self.eng.s;
        let gl = gauss::rule(self.eng.opts.n_near);
        let panels = radial_panels(self.eng.opts.near_levels);
        // Two triangles: u/wr ≥ v/wp (first) and the rest.
        for first in [true, false] {
            for (k, &(t0, t1)) in panels.iter().enumerate() {
                let pts: Vec<(f64, f64)> = if k == 0 {
                    jacobi_on(&self.eng.jac_x, t1, alpha)
                } else {
                    gl.mapped(t0, t1).collect()
                };
                for &(t, wt) in &pts {
                    for (z, wz) in gl.mapped(0.0, 1.0) {
                        let (u, v, d) = if first {
                            (wr * t, wp * t * z, t * (wr + wp * z))
                        } else {
                            (wr * t * z, wp * t, t * (wr * z + wp))
                        };
                        // Jacobian wr·wp·t, Jacobi weight t^α divided out.
                        let w = wt * wz * wr * wp * t;
                        self.emit(c + u, c - v, d, w);
                    }
                }
            }
        }
    }

    fn diagonal(&mut self, r: (f64, f64)) {
        let (a, b) = r;
        let h = b - a;
        let ax = 2.0 - 2.0 * self.eng.s;
        let ay = 1.0 - 2.0 * self.eng.s;
        let gl = gauss::rule(self.eng.opts.n_near);
        let panels = radial_panels(self.eng.opts.near_levels);
        let mut xs: Vec<(f64, f64)> = Vec::new();
        let mut ys: Vec<(f64, f64)> = Vec::new();
        for (k, &(t0, t1)) in panels.iter().enumerate() {
            if k == 0 {
                xs.extend(jacobi_on(&self.eng.jac_x, t1, ax));
                ys.extend(jacobi_on(&self.eng.jac_y, t1, ay));
            } else {
                xs.extend(gl.mapped(t0, t1));
                ys.extend(gl.mapped(t0, t1));
            }
        }
        for &(x, wx) in &xs {
            let rr = a + h * x;
            for &(y, wy) in &ys {
                let d = h * x * y;
                // ρ = r - d, written to keep ρ accurate when x is small.
                let rho = a + h * x * (1.0 - y);
                self.emit(rr, rho, d, wx * wy * h * h * x);
            }
        }
    }
}

/// Geometric sub-panels of [0, 1] towards 0 with ratio 1/4.
fn radial_panels(levels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(levels + 1);
    let mut hi = 1.0;
    let mut edges = vec![1.0];
    for _ in 0..levels {
        hi *= 0.25;
        edges.push(hi);
    }
    edges.reverse();
    out.push((0.0, edges[0]));
    for w in edges.windows(2) {
        out.push((w[0], w[1]));
    }
    out
}

/// Jacobi rule for x^α on [0, t1], weights with x^α divided out.
fn jacobi_on(rule: &Rule, t1: f64, alpha: f64) -> Vec<(f64, f64)> {
    // ∫_0^{t1} x^α f(x) dx = t1^{α+1} ∫_0^1 y^α f(t1 y) dy.
    let scale = t1.powf(alpha + 1.0);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&y, &w)| {
            let x = t1 * y;
            (x, scale * w * x.powf(-alpha))
        })
        .collect()
}

/// Scalar accumulator for ∫∫ (p(r)+p(ρ)) G(r, ρ) Q(r, ρ) with
/// Q = (f(r) - f(ρ))(g(r) - g(ρ)).
pub struct ScalarSink<'a, F: ?Sized, G: ?Sized> {
    pub f: &'a F,
    pub g: &'a G,
    pub sum: f64,
    comp: f64,
}

impl<'a, F: Fn(f64) -> f64 + Sync + ?Sized, G: Fn(f64) -> f64 + Sync + ?Sized> ScalarSink<'a, F, G> {
    pub fn new(f: &'a F, g: &'a G) -> Self {
        Self {
            f,
            g,
            sum: 0.0,
            comp: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl<F: Fn(f64) -> f64 + Sync + ?Sized, G: Fn(f64) -> f64 + Sync + ?Sized> PairSink for ScalarSink<'_, F, G> {
    #[inline]
    fn point(&mut self, r: f64, rho: f64, _d: f64, w: f64) {
        let df = (self.f)(r) - (self.f)(rho);
        let dg = (self.g)(r) - (self.g)(rho);
        self.add(w * df * dg);
    }
    fn far(&mut self, rho: f64, w: f64) {
        self.add(w * (self.f)(rho) * (self.g)(rho));
    }
    fn absorb(&mut self, other: Self) {
        self.add(other.sum);
        self.add(other.comp);
    }
}
