//! Galerkin discretization on radial hat functions: stiffness and mass
//! matrices, the constrained minimization for S_{s,λ}(p), and the first
//! eigenvalue λ_{1,p,s}.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::bubble::TruncatedBubble;
use crate::constants::bubble_constants_with;
use crate::error::{Error, Result};
use crate::gauss;
use crate::problem::{ProblemParams, WeightModel};
use crate::quad::{grid_for, PairEngine, PairOptions, PairSink, RadialProfile};
use crate::special::sphere_area;

/// Continuous piecewise-linear radial function on `nodes`, zero at and
/// beyond the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

/// `m` cells on [0, radius] whose widths grow by `ratio`.
pub fn geometric_nodes(radius: f64, m: usize, ratio: f64) -> Vec<f64> {
    let h0 = if ratio == 1.0 {
        radius / m as f64
    } else {
        radius * (ratio - 1.0) / (ratio.powi(m as i32) - 1.0)
    };
    let mut nodes = Vec::with_capacity(m + 1);
    let mut x = 0.0;
    let mut h = h0;
    nodes.push(0.0);
    for _ in 0..m {
        x += h;
        h *= ratio;
        nodes.push(x);
    }
    nodes[m] = radius;
    nodes
}

impl RadialField {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_nodes(&nodes)?;
        if values.len() != nodes.len() {
            return Err(Error::invalid("field", "one value per node is required"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field", "values must be finite"));
        }
        let mut values = values;
        *values.last_mut().unwrap() = 0.0;
        Ok(Self { nodes, values })
    }

    /// Samples `f` at the nodes, with zero at the outer radius.
    pub fn from_fn(nodes: &[f64], f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = nodes.iter().map(|&r| f(r)).collect();
        *values.last_mut().unwrap() = 0.0;
        Self {
            nodes: nodes.to_vec(),
            values,
        }
    }

    pub fn radius(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn value(&self, r: f64) -> f64 {
        if r >= self.radius() {
            return 0.0;
        }
        let e = self.nodes.partition_point(|&x| x <= r).saturating_sub(1);
        let (a, b) = (self.nodes[e], self.nodes[e + 1]);
        let t = (r - a) / (b - a);
        self.values[e] * (1.0 - t) + self.values[e + 1] * t
    }

    /// Values at the free nodes (all but the outer radius).
    pub fn unknowns(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.values[..self.values.len() - 1])
    }

    pub fn with_unknowns(&self, u: &DVector<f64>) -> Self {
        let mut values: Vec<f64> = u.iter().cloned().collect();
        values.push(0.0);
        Self {
            nodes: self.nodes.clone(),
            values,
        }
    }
}

impl RadialProfile for RadialField {
    fn value(&self, r: f64) -> f64 {
        RadialField::value(self, r)
    }
    fn support(&self) -> f64 {
        self.radius()
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.nodes.clone()
    }
}

fn check_nodes(nodes: &[f64]) -> Result<()> {
    if nodes.len() < 3 {
        return Err(Error::invalid("grid", "need at least two cells"));
    }
    if nodes[0] != 0.0 {
        return Err(Error::invalid("grid", "the first node must be 0"));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("grid", "nodes must be finite and increasing"));
    }
    Ok(())
}

/// Gauss points for ∫_{ℝⁿ} F(u(x)) dx of a field on the node grid.
#[derive(Debug, Clone)]
struct PowerQuad {
    /// (element, local coordinate t, weight σ r^{n-1} w).
    points: Vec<(usize, f64, f64)>,
}

const POWER_ORDER: usize = 8;

impl PowerQuad {
    fn new(nodes: &[f64], n: usize) -> Self {
        let g = gauss::rule(POWER_ORDER);
        let sig = sphere_area(n);
        let mut points = Vec::with_capacity((nodes.len() - 1) * POWER_ORDER);
        for e in 0..nodes.len() - 1 {
            let (a, b) = (nodes[e], nodes[e + 1]);
            for (r, w) in g.mapped(a, b) {
                points.push((e, (r - a) / (b - a), sig * r.powi(n as i32 - 1) * w));
            }
        }
        Self { points }
    }

    #[inline]
    fn at(u: &DVector<f64>, e: usize, t: f64) -> f64 {
        let m = u.len();
        let left = u[e];
        let right = if e + 1 < m { u[e + 1] } else { 0.0 };
        left * (1.0 - t) + right * t
    }

    fn integral(&self, u: &DVector<f64>, q: f64) -> f64 {
        self.points
            .iter()
            .map(|&(e, t, w)| w * Self::at(u, e, t).abs().powf(q))
            .sum()
    }

    /// ∂/∂u_i of (1/q) ∫ |u|^q.
    fn gradient(&self, u: &DVector<f64>, q: f64) -> DVector<f64> {
        let m = u.len();
        let mut g = DVector::zeros(m);
        for &(e, t, w) in &self.points {
            let v = Self::at(u, e, t);
            if v == 0.0 {
                continue;
            }
            let f = w * v.abs().powf(q - 2.0) * v;
            g[e] += f * (1.0 - t);
            if e + 1 < m {
                g[e + 1] += f * t;
            }
        }
        g
    }
}

/// Accumulates ⟨φ_i, φ_j⟩_p for the hat basis.
struct MatrixSink<'a> {
    nodes: &'a [f64],
    m: usize,
    a: DMatrix<f64>,
}

impl MatrixSink<'_> {
    #[inline]
    fn element(&self, r: f64) -> Option<usize> {
        if r >= self.nodes[self.m] {
            return None;
        }
        Some(self.nodes.partition_point(|&x| x <= r).saturating_sub(1))
    }

    #[inline]
    fn hats(&self, r: f64, out: &mut [(usize, f64); 4], len: &mut usize, sign: f64) {
        if let Some(e) = self.element(r) {
            let (a, b) = (self.nodes[e], self.nodes[e + 1]);
            let h = b - a;
            push(out, len, e, sign * (b - r) / h, self.m);
            push(out, len, e + 1, sign * (r - a) / h, self.m);
        }
    }

    #[inline]
    fn update(&mut self, c: &[(usize, f64)], w: f64) {
        for &(i, ci) in c {
            let wi = w * ci;
            for &(j, cj) in c {
                self.a[(i, j)] += wi * cj;
            }
        }
    }
}

#[inline]
fn push(out: &mut [(usize, f64); 4], len: &mut usize, i: usize, v: f64, m: usize) {
    if i >= m {
        return;
    }
    for k in 0..*len {
        if out[k].0 == i {
            out[k].1 += v;
            return;
        }
    }
    out[*len] = (i, v);
    *len += 1;
}

impl PairSink for MatrixSink<'_> {
    fn point(&mut self, r: f64, rho: f64, d: f64, w: f64) {
        let mut c = [(0usize, 0.0f64); 4];
        let mut len = 0;
        match (self.element(r), self.element(rho)) {
            (Some(er), Some(ep)) if er == ep => {
                // Same cell: the difference is linear in d.
                let h = self.nodes[er + 1] - self.nodes[er];
                push(&mut c, &mut len, er, -d / h, self.m);
                push(&mut c, &mut len, er + 1, d / h, self.m);
            }
            _ => {
                self.hats(r, &mut c, &mut len, 1.0);
                self.hats(rho, &mut c, &mut len, -1.0);
            }
        }
        self.update(&c[..len], w);
    }

    fn far(&mut self, rho: f64, w: f64) {
        let mut c = [(0usize, 0.0f64); 4];
        let mut len = 0;
        self.hats(rho, &mut c, &mut len, 1.0);
        self.update(&c[..len], w);
    }

    fn absorb(&mut self, other: Self) {
        self.a += other.a;
    }
}

/// Assembly bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyInfo {
    pub unknowns: usize,
    pub panels: usize,
    /// max |A - Aᵀ| before symmetrization.
    pub asymmetry: f64,
}

/// Stiffness A_ij = ⟨φ_i, φ_j⟩_p and mass M_ij = ∫ φ_i φ_j on a node grid.
#[derive(Debug, Clone)]
pub struct StiffnessOperator {
    pub n: usize,
    pub s: f64,
    pub p0: f64,
    pub nodes: Vec<f64>,
    pub a: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub info: AssemblyInfo,
    chol_a: Cholesky<f64, Dyn>,
    chol_mass: Cholesky<f64, Dyn>,
    quad: PowerQuad,
}

/// Assembles the operator on `nodes` (0 = r_0 < … < r_M = R).
pub fn assemble(
    p: &ProblemParams,
    w: &WeightModel,
    nodes: &[f64],
    opts: PairOptions,
) -> Result<StiffnessOperator> {
    p.check()?;
    check_nodes(nodes)?;
    let m = nodes.len() - 1;
    let proto = RadialField::from_fn(nodes, |_| 0.0);
    let engine = PairEngine::with_options(p.n, p.s, opts);
    let grid = grid_for(&[&proto], w);
    let sink = engine.run(&grid, w, || MatrixSink {
        nodes,
        m,
        a: DMatrix::zeros(m, m),
    });
    let mut a = sink.a;
    let asymmetry = (&a - a.transpose()).abs().max();
    a = 0.5 * (&a + a.transpose());

    let quad = PowerQuad::new(nodes, p.n);
    let mut mass = DMatrix::zeros(m, m);
    for &(e, t, wq) in &quad.points {
        let c = [(e, 1.0 - t), (e + 1, t)];
        for &(i, ci) in &c {
            for &(j, cj) in &c {
                if i < m && j < m {
                    mass[(i, j)] += wq * ci * cj;
                }
            }
        }
    }
    let chol_a = Cholesky::new(a.clone()).ok_or_else(|| {
        Error::Factorization("stiffness matrix is not positive definite (quadrature under-resolved?)".into())
    })?;
    let chol_mass = Cholesky::new(mass.clone())
        .ok_or_else(|| Error::Factorization("mass matrix is not positive definite".into()))?;
    Ok(StiffnessOperator {
        n: p.n,
        s: p.s,
        p0: w.p0(),
        nodes: nodes.to_vec(),
        a,
        mass,
        info: AssemblyInfo {
            unknowns: m,
            panels: grid.panels(),
            asymmetry,
        },
        chol_a,
        chol_mass,
        quad,
    })
}

impl StiffnessOperator {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// uᵀ A u, the weighted seminorm of the interpolant.
    pub fn energy(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.a * u))
    }

    /// uᵀ M u = ∫ u².
    pub fn mass_norm_sq(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.mass * u))
    }

    /// ∫ |u|^q of the interpolant, by the fixed Gauss rule.
    pub fn power_integral(&self, u: &DVector<f64>, q: f64) -> f64 {
        if q == 2.0 {
            return self.mass_norm_sq(u);
        }
        self.quad.integral(u, q)
    }

    /// Gradient of (1/q) ∫ |u|^q.
    pub fn power_gradient(&self, u: &DVector<f64>, q: f64) -> DVector<f64> {
        if q == 2.0 {
            return &self.mass * u;
        }
        self.quad.gradient(u, q)
    }

    pub fn solve(&self, g: &DVector<f64>) -> DVector<f64> {
        self.chol_a.solve(g)
    }

    /// sqrt(gᵀ A⁻¹ g), the norm of a gradient dual to the energy norm.
    pub fn dual_norm(&self, g: &DVector<f64>) -> f64 {
        g.dot(&self.solve(g)).max(0.0).sqrt()
    }

    pub fn field(&self, u: &DVector<f64>) -> RadialField {
        let mut values: Vec<f64> = u.iter().cloned().collect();
        values.push(0.0);
        RadialField {
            nodes: self.nodes.clone(),
            values,
        }
    }

    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        RadialField::from_fn(&self.nodes, f).unknowns()
    }

    /// The truncated bubble at ε sampled on the grid.
    pub fn bubble(&self, eps: f64, eta: f64) -> DVector<f64> {
        let tb = TruncatedBubble::new(self.n, self.s, eps, eta);
        self.interpolate(|r| tb.radial(r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the dual norm of the projected gradient falls below
    /// `tol · sqrt(uᵀAu)`.
    pub tol: f64,
    /// Energy margin below p0 S_s for `below_threshold`.
    pub margin: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-8,
            margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub field: RadialField,
    /// uᵀ(A - λM)u at ‖u‖_{q_s} = 1.
    pub energy: f64,
    pub constraint_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub below_threshold: bool,
    /// Energy fell below -10 p0 S_s: λ is at or above the first eigenvalue.
    pub indefinite_regime: bool,
    pub p0_ss: f64,
    /// Relative dual norm of the last projected gradient.
    pub gradient: f64,
    /// Energy after each accepted step.
    pub trace: Vec<f64>,
}

/// (uᵀ(A - λM)u, ‖u‖_r) of a field.
fn rayleigh(op: &StiffnessOperator, u: &DVector<f64>, lambda: f64, r: f64) -> (f64, f64) {
    let num = op.energy(u) - lambda * op.mass_norm_sq(u);
    (num, op.power_integral(u, r).powf(1.0 / r))
}

struct Descent {
    u: DVector<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    below_floor: bool,
    gradient: f64,
    trace: Vec<f64>,
}

/// Minimizes uᵀ(A - λM)u over ‖u‖_r = 1 by gradient steps in the A-metric,
/// each followed by renormalization, with Armijo backtracking. Stops early
/// once the value drops below `floor`.
fn descend(
    op: &StiffnessOperator,
    lambda: f64,
    r: f64,
    init: &DVector<f64>,
    opts: &MinimizeOptions,
    floor: f64,
) -> Result<Descent> {
    let (_, norm) = rayleigh(op, init, lambda, r);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::invalid("field", "initial field is zero"));
    }
    let mut u = init / norm;
    let (mut e, _) = rayleigh(op, &u, lambda, r);
    let mut trace = vec![e];
    let mut step = 1.0;
    let mut converged = false;
    let mut below_floor = false;
    let mut gnorm = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iter {
        // Half the gradient of the quotient at ‖u‖_r = 1.
        let g = &op.a * &u - lambda * (&op.mass * &u) - e * op.power_gradient(&u, r);
        let d = op.solve(&g);
        let slope = g.dot(&d);
        gnorm = slope.max(0.0).sqrt() / op.energy(&u).sqrt();
        if gnorm < opts.tol {
            converged = true;
            break;
        }
        let mut t = step;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &u - t * &d;
            let (num, nrm) = rayleigh(op, &trial, lambda, r);
            if nrm > 0.0 {
                let en = num / (nrm * nrm);
                if en <= e - 1e-4 * 2.0 * t * slope {
                    u = trial / nrm;
                    e = en;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        it += 1;
        if !accepted {
            break;
        }
        trace.push(e);
        step = (2.0 * t).min(4.0);
        if e < floor {
            below_floor = true;
            break;
        }
    }
    Ok(Descent {
        u,
        value: e,
        iterations: it,
        converged,
        below_floor,
        gradient: gnorm,
        trace,
    })
}

/// Minimizes uᵀ(A - λM)u over ‖u‖_{q_s} = 1, starting from `init`.
pub fn minimize_s(
    p: &ProblemParams,
    op: &StiffnessOperator,
    init: &RadialField,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    if init.nodes != op.nodes {
        return Err(Error::invalid("field", "initial field lives on another grid"));
    }
    let qs = p.q_s();
    let c = bubble_constants_with(p.n, p.s, PairOptions::default())?;
    let p0_ss = op.p0 * c.ss;
    let d = descend(op, p.lambda, qs, &init.unknowns(), opts, -10.0 * p0_ss.abs())?;
    let norm = op.power_integral(&d.u, qs).powf(1.0 / qs);
    Ok(MinimizeResult {
        field: op.field(&d.u),
        energy: d.value,
        constraint_residual: (norm - 1.0).abs(),
        iterations: d.iterations,
        converged: d.converged,
        below_threshold: d.value < p0_ss - opts.margin,
        indefinite_regime: d.below_floor,
        p0_ss,
        gradient: d.gradient,
        trace: d.trace,
    })
}

/// min uᵀAu / ‖u‖_q² over the grid space, with its minimizer.
pub fn embedding_constant(
    op: &StiffnessOperator,
    q: f64,
    init: &RadialField,
    opts: &MinimizeOptions,
) -> Result<(f64, RadialField)> {
    if !(q >= 2.0) {
        return Err(Error::invalid("q", "embedding exponent must be at least 2"));
    }
    let d = descend(op, 0.0, q, &init.unknowns(), opts, f64::NEG_INFINITY)?;
    if !d.converged {
        return Err(Error::NonConvergence {
            what: "embedding constant",
            detail: format!("relative gradient {:e} after {} steps", d.gradient, d.iterations),
        });
    }
    Ok((d.value, op.field(&d.u)))
}

/// ‖(A - λM)u - S G(u)‖ / ‖Au‖ with G the gradient of (1/q_s)∫|u|^{q_s},
/// the discrete Euler equation of a minimizer with ‖u‖_{q_s} = 1.
pub fn euler_residual(p: &ProblemParams, op: &StiffnessOperator, field: &RadialField, s_value: f64) -> f64 {
    let u = field.unknowns();
    let au = &op.a * &u;
    let r = &au - p.lambda * (&op.mass * &u) - s_value * op.power_gradient(&u, p.q_s());
    r.norm() / au.norm()
}

/// The same residual for v = S^{1/(q_s - 2)} u, which solves
/// (A - λM)v = G(v) without the factor S.
pub fn scaled_euler_residual(p: &ProblemParams, op: &StiffnessOperator, field: &RadialField, s_value: f64) -> f64 {
    let qs = p.q_s();
    let v = field.unknowns() * s_value.powf(1.0 / (qs - 2.0));
    let av = &op.a * &v;
    let r = &av - p.lambda * (&op.mass * &v) - op.power_gradient(&v, qs);
    r.norm() / av.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub lambda1: f64,
    /// Normalized to ∫u² = 1 and positive at the center.
    pub field: RadialField,
    /// ‖Au - λMu‖ / ‖Au‖.
    pub residual: f64,
    pub iterations: usize,
}

/// Smallest λ with Au = λMu, by inverse iteration on the Cholesky factor of A.
pub fn first_eigenvalue(op: &StiffnessOperator) -> Result<Eigenpair> {
    let m = op.dim();
    let mut u = DVector::from_element(m, 1.0);
    u /= op.mass_norm_sq(&u).sqrt();
    let mut lambda = op.energy(&u);
    let mut residual = f64::INFINITY;
    for it in 1..=20_000 {
        let mut x = op.solve(&(&op.mass * &u));
        let nx = op.mass_norm_sq(&x).sqrt();
        if !(nx > 0.0 && nx.is_finite()) {
            return Err(Error::Factorization("inverse iteration broke down".into()));
        }
        x /= nx;
        u = x;
        lambda = op.energy(&u);
        let au = &op.a * &u;
        residual = (&au - lambda * (&op.mass * &u)).norm() / au.norm();
        if residual <= 1e-10 {
            if u[0] < 0.0 {
                u = -u;
            }
            return Ok(Eigenpair {
                lambda1: lambda,
                field: op.field(&u),
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "first eigenvalue",
        detail: format!("residual {residual:e} at lambda = {lambda}"),
    })
}

impl StiffnessOperator {
    /// Solves with the mass matrix.
    pub fn solve_mass(&self, g: &DVector<f64>) -> DVector<f64> {
        self.chol_mass.solve(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::WeightVariant;
    use crate::quad::{seminorm_radial, FnProfile, RadialOptions};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(m: usize) -> (ProblemParams, WeightModel, StiffnessOperator) {
        let p = ProblemParams::new(6, 0.5);
        let w = WeightModel::from_params(&p, WeightVariant::TruncatedPower);
        let nodes = geometric_nodes(p.radius, m, 1.05);
        let op = assemble(&p, &w, &nodes, PairOptions::default()).unwrap();
        (p, w, op)
    }

    #[test]
    fn geometric_grid() {
        let g = geometric_nodes(5.0, 128, 1.05);
        assert_eq!(g.len(), 129);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[128], 5.0);
        let r = (g[101] - g[100]) / (g[100] - g[99]);
        assert!((r - 1.05).abs() < 1e-9);
    }

    #[test]
    fn field_interpolates() {
        let nodes = vec![0.0, 1.0, 3.0];
        let f = RadialField::new(nodes, vec![2.0, 4.0, 9.0]).unwrap();
        assert_eq!(f.values[2], 0.0);
        assert_eq!(f.value(0.5), 3.0);
        assert_eq!(f.value(2.0), 2.0);
        assert_eq!(f.value(3.5), 0.0);
        assert!(RadialField::new(vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn operator_is_symmetric_and_linear_in_weight() {
        let (p, w, op) = setup(24);
        assert_eq!((&op.a - op.a.transpose()).abs().max(), 0.0);
        let op2 = assemble(&p, &w.scaled(2.0), &op.nodes, PairOptions::default()).unwrap();
        let d = (&op2.a - 2.0 * &op.a).abs().max();
        assert!(d <= 1e-10 * op.a.abs().max(), "{d}");
    }

    #[test]
    fn quadratic_form_matches_seminorm_of_interpolant() {
        let (p, w, op) = setup(32);
        let u = op.interpolate(|r| (1.0 - r * r / 25.0).powi(2));
        let f = op.field(&u);
        let direct = seminorm_radial(&f, &w, p.n, p.s, &RadialOptions::default()).unwrap().value;
        let form = op.energy(&u);
        assert!(((form - direct) / direct).abs() < 1e-8, "{form} vs {direct}");
        // Against the smooth profile itself.
        let smooth = FnProfile {
            f: |r: f64| (1.0 - r * r / 25.0).powi(2),
            support: 5.0,
            breaks: vec![1.0, 2.0, 4.0],
        };
        let exact = seminorm_radial(&smooth, &w, p.n, p.s, &RadialOptions::default()).unwrap().value;
        assert!(((form - exact) / exact).abs() < 0.02, "{form} vs {exact}");
    }

    #[test]
    fn mass_and_power_integrals_agree_at_two() {
        let (_, _, op) = setup(20);
        let u = op.interpolate(|r| 1.0 + r.sin());
        let a = op.mass_norm_sq(&u);
        let b = op.quad.integral(&u, 2.0);
        assert!(((a - b) / a).abs() < 1e-12);
    }

    #[test]
    fn power_gradient_matches_finite_differences() {
        let (_, _, op) = setup(16);
        let u = op.interpolate(|r| (2.0 - r).abs() + 0.1);
        let q = 2.4;
        let g = op.power_gradient(&u, q);
        for i in [0, 5, 12] {
            let h = 1e-3;
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (op.power_integral(&up, q) - op.power_integral(&dn, q)) / (2.0 * h * q);
            assert!(((fd - g[i]) / g[i]).abs() < 1e-4, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn eigenvalue_properties() {
        let (p, w, op) = setup(32);
        let e = first_eigenvalue(&op).unwrap();
        assert!(e.lambda1 > 0.0 && e.residual <= 1e-8);
        let u = e.field.unknowns();
        let rq = op.energy(&u) / op.mass_norm_sq(&u);
        assert!(((rq - e.lambda1) / e.lambda1).abs() < 1e-8);
        let op2 = assemble(&p, &w.scaled(2.0), &op.nodes, PairOptions::default()).unwrap();
        let e2 = first_eigenvalue(&op2).unwrap();
        assert!(((e2.lambda1 - 2.0 * e.lambda1) / e.lambda1).abs() < 1e-8);
        let op1 = assemble(&p, &WeightModel::constant(1.0), &op.nodes, PairOptions::default()).unwrap();
        assert!(e.lambda1 >= first_eigenvalue(&op1).unwrap().lambda1);
    }

    #[test]
    fn coercive_below_first_eigenvalue() {
        let (_, _, op) = setup(24);
        let l1 = first_eigenvalue(&op).unwrap().lambda1;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = DVector::from_fn(op.dim(), |_, _| rng.random_range(-1.0..1.0));
            assert!(op.energy(&u) - 0.9 * l1 * op.mass_norm_sq(&u) > 0.0);
        }
    }

    #[test]
    fn euler_residual_is_order_one_at_random_field() {
        let (p, _, op) = setup(24);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = DVector::from_fn(op.dim(), |_, _| rng.random_range(0.0..1.0));
        let f = op.field(&u);
        assert!(euler_residual(&p, &op, &f, 80.0) > 0.1);
    }

    fn existence_setup() -> (ProblemParams, StiffnessOperator, f64) {
        let mut p = ProblemParams::new(6, 0.5);
        p.kappa = 0.05;
        let w = WeightModel::from_params(&p, WeightVariant::TruncatedPower);
        let op = assemble(&p, &w, &geometric_nodes(p.radius, 48, 1.12), PairOptions::default()).unwrap();
        let l1 = first_eigenvalue(&op).unwrap().lambda1;
        p.lambda = 0.5 * l1;
        (p, op, l1)
    }

    #[test]
    fn minimizer_in_existence_regime() {
        let (p, op, _) = existence_setup();
        let init = op.field(&op.bubble(0.2, p.eta));
        let r = minimize_s(&p, &op, &init, &MinimizeOptions::default()).unwrap();
        assert!(r.converged && r.below_threshold && !r.indefinite_regime);
        assert!(r.constraint_residual <= 1e-8);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.field.values.iter().all(|&v| v >= -1e-8));
        let e1 = euler_residual(&p, &op, &r.field, r.energy);
        let e2 = scaled_euler_residual(&p, &op, &r.field, r.energy);
        assert!(e1 <= 1e-4, "{e1}");
        assert!((e1 - e2).abs() <= 1e-10, "{e1} vs {e2}");
    }

    #[test]
    fn indefinite_above_first_eigenvalue() {
        let (mut p, op, l1) = existence_setup();
        let init = op.field(&op.bubble(0.2, p.eta));
        p.lambda = 1.5 * l1;
        let r = minimize_s(&p, &op, &init, &MinimizeOptions::default()).unwrap();
        assert!(r.energy < 0.0 && !r.indefinite_regime);
        p.lambda = 10.0 * l1;
        let r = minimize_s(&p, &op, &init, &MinimizeOptions::default()).unwrap();
        assert!(r.indefinite_regime && !r.converged, "{} {}", r.energy, r.p0_ss);
    }

    #[test]
    fn embedding_constant_at_two_is_first_eigenvalue() {
        let (p, op, l1) = existence_setup();
        let init = op.field(&op.bubble(0.5, p.eta));
        let (a2, _) = embedding_constant(&op, 2.0, &init, &MinimizeOptions::default()).unwrap();
        assert!(((a2 - l1) / l1).abs() < 1e-8, "{a2} vs {l1}");
    }
}
