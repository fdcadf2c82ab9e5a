//! The functional Φ(u) = ½ N_p(u) - (λ/q)∫|u|^q - (1/q_s)∫|u|^{q_s} on the
//! Galerkin space: fiber maps t ↦ Φ(tv), the mountain-pass geometry and a
//! path min-max estimate of the level c.

use nalgebra::DVector;

use crate::constants::ConstantSet;
use crate::error::{Error, Result};
use crate::par;
use crate::problem::ProblemParams;
use crate::solver::{embedding_constant, first_eigenvalue, MinimizeOptions, RadialField, StiffnessOperator};

/// Φ and its gradient on an assembled operator.
#[derive(Debug, Clone, Copy)]
pub struct Functional<'a> {
    pub op: &'a StiffnessOperator,
    pub lambda: f64,
    pub q: f64,
    pub q_s: f64,
}

impl<'a> Functional<'a> {
    pub fn new(p: &ProblemParams, op: &'a StiffnessOperator) -> Self {
        Self {
            op,
            lambda: p.lambda,
            q: p.q,
            q_s: p.q_s(),
        }
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        let lq = if self.lambda != 0.0 { self.op.power_integral(u, self.q) } else { 0.0 };
        0.5 * self.op.energy(u) - self.lambda / self.q * lq - self.op.power_integral(u, self.q_s) / self.q_s
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.op.a * u - self.op.power_gradient(u, self.q_s);
        if self.lambda != 0.0 {
            g -= self.lambda * self.op.power_gradient(u, self.q);
        }
        g
    }

    /// ‖∇Φ(u)‖ in the norm dual to sqrt(uᵀAu).
    pub fn gradient_norm(&self, u: &DVector<f64>) -> f64 {
        self.op.dual_norm(&self.gradient(u))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberResult {
    pub eps: f64,
    /// N_p(v) of the q_s-normalized field.
    pub x_tilde: f64,
    /// ∫|v|^q.
    pub lq: f64,
    pub t_eps: f64,
    /// Φ(t_ε v).
    pub y_eps: f64,
    /// (s/n) X̃^{n/2s} - (λ/q) t_ε^q ∫|v|^q, an upper bound for Y.
    pub y_bound: f64,
    pub limit_gap: f64,
    pub rel_gap: f64,
}

/// Positive root of X - t^{q_s-2} - L t^{q-2} = 0 on (0, X^{1/(q_s-2)}] by
/// bisection.
pub fn fiber_root_bisection(x_tilde: f64, linear: f64, q_s: f64, q: f64) -> Result<f64> {
    let f = |t: f64| x_tilde - t.powf(q_s - 2.0) - linear * t.powf(q - 2.0);
    let mut hi = x_tilde.max(0.0).powf(1.0 / (q_s - 2.0));
    let mut lo = 0.0;
    let f0 = if q == 2.0 { x_tilde - linear } else { x_tilde };
    if !(f0 > 0.0) {
        return Err(Error::NoPositiveRoot { x_tilde, linear });
    }
    if f(hi) > 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Maximizer t_ε of t ↦ Φ(tv) for ‖v‖_{q_s} = 1.
pub fn fiber_t(
    p: &ProblemParams,
    op: &StiffnessOperator,
    v: &RadialField,
    consts: &ConstantSet,
    eps: f64,
) -> Result<FiberResult> {
    let u = v.unknowns();
    let qs = p.q_s();
    let norm = op.power_integral(&u, qs).powf(1.0 / qs);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("field", format!("fiber needs |v|_q_s = 1, got {norm}")));
    }
    let x = op.energy(&u);
    let lq = op.power_integral(&u, p.q);
    let linear = p.lambda * lq;
    let t = if p.q == 2.0 {
        if !(x > linear) {
            return Err(Error::NoPositiveRoot { x_tilde: x, linear });
        }
        (x - linear).powf(1.0 / (qs - 2.0))
    } else {
        fiber_root_bisection(x, linear, qs, p.q)?
    };
    let phi = Functional::new(p, op);
    let y = phi.value(&(&u * t));
    let nf = p.n as f64;
    let y_bound = p.s / nf * x.powf(nf / (2.0 * p.s)) - p.lambda / p.q * t.powf(p.q) * lq;
    let limit = consts.fiber_limit(op.p0);
    Ok(FiberResult {
        eps,
        x_tilde: x,
        lq,
        t_eps: t,
        y_eps: y,
        y_bound,
        limit_gap: (t - limit).abs(),
        rel_gap: (t - limit).abs() / limit,
    })
}

/// The truncated bubble at ε on the grid, normalized in L^{q_s}.
pub fn normalized_bubble(p: &ProblemParams, op: &StiffnessOperator, eps: f64) -> RadialField {
    let u = op.bubble(eps, p.eta);
    let nrm = op.power_integral(&u, p.q_s()).powf(1.0 / p.q_s());
    op.field(&(u / nrm))
}

pub fn fiber_sweep(
    p: &ProblemParams,
    op: &StiffnessOperator,
    consts: &ConstantSet,
    eps_grid: &[f64],
) -> Result<Vec<FiberResult>> {
    eps_grid
        .iter()
        .map(|&eps| fiber_t(p, op, &normalized_bubble(p, op, eps), consts, eps))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub rho: f64,
    pub beta: f64,
    pub e: RadialField,
    /// ‖e‖ = sqrt(N_p(e)).
    pub e_norm: f64,
    pub phi_e: f64,
    pub zeta: f64,
    /// Discrete min of N_p(u)/‖u‖_q², λ₁ when q = 2.
    pub alpha_q: f64,
    pub p0_ss: f64,
}

/// Lower bound for Φ on the sphere N_p(u) = ρ².
pub fn beta_bound(rho: f64, lambda: f64, q: f64, q_s: f64, alpha_q: f64, p0_ss: f64) -> f64 {
    let crit = rho.powf(q_s - 2.0) * p0_ss.powf(-q_s / 2.0) / q_s;
    let sub = if q == 2.0 {
        0.5 * lambda / alpha_q
    } else {
        lambda / q * alpha_q.powf(-q / 2.0) * rho.powf(q - 2.0)
    };
    rho * rho * (0.5 - sub - crit)
}

/// Maximizes [`beta_bound`] over ρ > 0.
fn best_rho(lambda: f64, q: f64, q_s: f64, alpha_q: f64, p0_ss: f64) -> (f64, f64) {
    let f = |lr: f64| beta_bound(lr.exp(), lambda, q, q_s, alpha_q, p0_ss);
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    let mut lr = -30.0;
    while lr <= 30.0 {
        let v = f(lr);
        if v > best {
            best = v;
            arg = lr;
        }
        lr += 0.05;
    }
    // Golden section on the bracketing cell.
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (arg - 0.05, arg + 0.05);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let lr = 0.5 * (a + b);
    (lr.exp(), f(lr))
}

/// ρ, β and e with Φ(e) < 0 < β and ‖e‖ > ρ.
pub fn mp_geometry(p: &ProblemParams, op: &StiffnessOperator, consts: &ConstantSet) -> Result<Geometry> {
    let qs = p.q_s();
    let p0_ss = op.p0 * consts.ss;
    let base = op.field(&op.bubble(0.2, p.eta));
    let alpha_q = if p.q == 2.0 {
        let l1 = first_eigenvalue(op)?.lambda1;
        if p.lambda >= l1 {
            return Err(Error::invalid(
                "lambda",
                format!("q = 2 needs lambda < lambda_1 = {l1}"),
            ));
        }
        l1
    } else {
        embedding_constant(op, p.q, &base, &MinimizeOptions::default())?.0
    };
    let (rho, beta) = best_rho(p.lambda, p.q, qs, alpha_q, p0_ss);
    if !(beta > 0.0) {
        return Err(Error::Degenerate(format!("no positive ridge: beta = {beta:e}")));
    }
    let phi = Functional::new(p, op);
    let u0 = base.unknowns();
    let u0 = &u0 / op.energy(&u0).sqrt();
    let mut zeta = 1.0;
    for _ in 0..=60 {
        let e = &u0 * zeta;
        let v = phi.value(&e);
        if v < 0.0 && zeta > rho {
            return Ok(Geometry {
                rho,
                beta,
                e: op.field(&e),
                e_norm: zeta,
                phi_e: v,
                zeta,
                alpha_q,
                p0_ss,
            });
        }
        zeta *= 2.0;
    }
    Err(Error::NonConvergence {
        what: "mountain-pass endpoint",
        detail: "Phi(zeta u0) stayed nonnegative over 60 doublings".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub max_iter: usize,
    /// Stop when the level drops by less than `tol · |level|` over `window`
    /// iterations.
    pub tol: f64,
    pub window: usize,
    /// Stop when the relative gradient at the max-point falls below this.
    pub grad_tol: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            max_iter: 30_000,
            tol: 1e-12,
            window: 50,
            grad_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    /// z₀ = 0, …, z_m = e.
    pub points: Vec<RadialField>,
    pub level: f64,
    pub max_index: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Level after each iteration.
    pub trace: Vec<f64>,
    /// Relative ‖∇Φ‖ at the max-point of the initial and final paths.
    pub initial_gradient: f64,
    pub final_gradient: f64,
}

fn argmax_interior(vals: &[f64]) -> usize {
    let mut j = 1;
    for i in 1..vals.len() - 1 {
        if vals[i] > vals[j] {
            j = i;
        }
    }
    j
}

/// Maximizer of t ↦ Φ(tw) for t > 0.
fn ray_max(phi: &Functional, w: &DVector<f64>) -> Result<f64> {
    let a = phi.op.energy(w);
    let l = if phi.lambda != 0.0 { phi.lambda * phi.op.power_integral(w, phi.q) } else { 0.0 };
    let c = phi.op.power_integral(w, phi.q_s);
    if !(c > 0.0) {
        return Err(Error::Degenerate("ray does not meet the critical term".into()));
    }
    // Φ'(tw)/t = a - l t^{q-2} - c t^{q_s-2}; rescale t = (a/c)^{1/(q_s-2)} τ.
    let scale = (a / c).powf(1.0 / (phi.q_s - 2.0));
    let lin = l * scale.powf(phi.q - 2.0) / a;
    Ok(scale * fiber_root_bisection(1.0, lin, phi.q_s, phi.q)?)
}

/// The polygon 0 → top → K·top → K·e → e with m segments spread by
/// A-arc-length. K is large enough that Φ < 0 on the chord K·top → K·e for
/// nonnegative fields, since |su + (1-s)v|^{q_s} ≥ s^{q_s}|u|^{q_s} + (1-s)^{q_s}|v|^{q_s}.
fn build_path(phi: &Functional, top: &DVector<f64>, e: &DVector<f64>, m: usize) -> Vec<DVector<f64>> {
    let op = phi.op;
    let (at, ae) = (op.energy(top), op.energy(e));
    let (ct, ce) = (op.power_integral(top, phi.q_s), op.power_integral(e, phi.q_s));
    let ratio = phi.q_s * at.max(ae) / (2f64.powf(2.0 - phi.q_s) * ct.min(ce));
    let k = ratio.powf(1.0 / (phi.q_s - 2.0)).max(1.0) * 2.0;
    let corners = [DVector::zeros(top.len()), top.clone(), top * k, e * k, e.clone()];
    let legs = corners.len() - 1;
    let lens: Vec<f64> = corners
        .windows(2)
        .map(|c| op.energy(&(&c[1] - &c[0])).max(0.0).sqrt())
        .collect();
    let total: f64 = lens.iter().sum();
    let mut counts: Vec<usize> = lens
        .iter()
        .map(|l| ((m as f64 * l / total).floor() as usize).max(1))
        .collect();
    while counts.iter().sum::<usize>() > m {
        let i = (0..legs).filter(|&i| counts[i] > 1).max_by_key(|&i| counts[i]).unwrap();
        counts[i] -= 1;
    }
    while counts.iter().sum::<usize>() < m {
        let i = (0..legs)
            .max_by(|&a, &b| (lens[a] / counts[a] as f64).total_cmp(&(lens[b] / counts[b] as f64)))
            .unwrap();
        counts[i] += 1;
    }
    let mut z = vec![corners[0].clone()];
    for leg in 0..legs {
        for i in 1..=counts[leg] {
            let t = i as f64 / counts[leg] as f64;
            z.push(&corners[leg] * (1.0 - t) + &corners[leg + 1] * t);
        }
    }
    z
}

fn path_level(phi: &Functional, z: &[DVector<f64>]) -> (Vec<f64>, usize) {
    let vals = par::map_slice(z, |u| phi.value(u));
    let j = argmax_interior(&vals);
    (vals, j)
}

/// Min-max over paths from 0 to `geom.e` with `m` segments.
///
/// The path runs through t*w, where t* maximizes Φ along the ray of w, and
/// closes on e through the far polygon of `build_path`. The max-point takes Armijo steps along -A⁻¹∇Φ, is pulled back to the top of
/// its ray, and the path is rebuilt around it; a step is kept only when the
/// path level does not rise.
pub fn mp_level(
    p: &ProblemParams,
    op: &StiffnessOperator,
    geom: &Geometry,
    m: usize,
    opts: &PathOptions,
) -> Result<PathState> {
    if m < 2 {
        return Err(Error::invalid("path_points", "need at least two segments"));
    }
    let phi = Functional::new(p, op);
    let e = geom.e.unknowns();
    let rel_grad = |u: &DVector<f64>| phi.gradient_norm(u) / op.energy(u).max(1e-300).sqrt();
    let w = &e / op.energy(&e).sqrt();
    let mut top = &w * ray_max(&phi, &w)?;
    let mut z = build_path(&phi, &top, &e, m);
    let (mut vals, mut j) = path_level(&phi, &z);
    let initial_gradient = rel_grad(&z[j]);
    let mut level = vals[j];
    let mut trace = vec![level];
    let mut step = 1.0;
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let g = phi.gradient(&top);
        let d = op.solve(&g);
        let slope = g.dot(&d);
        let rel = slope.max(0.0).sqrt() / op.energy(&top).max(1e-300).sqrt();
        if rel < opts.grad_tol {
            converged = true;
            break;
        }
        let mut t = step;
        let mut accepted = false;
        for _ in 0..50 {
            let trial = &top - t * &d;
            let wn = &trial / op.energy(&trial).sqrt();
            if let Ok(tn) = ray_max(&phi, &wn) {
                let topn = &wn * tn;
                if phi.value(&topn) <= phi.value(&top) - 1e-4 * t * slope {
                    let zn = build_path(&phi, &topn, &e, m);
                    let (valn, jn) = path_level(&phi, &zn);
                    if valn[jn] <= level {
                        top = topn;
                        z = zn;
                        vals = valn;
                        j = jn;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            converged = rel < 1e3 * opts.grad_tol;
            break;
        }
        step = (2.0 * t).min(1.0);
        level = vals[j];
        trace.push(level);
        if trace.len() > opts.window {
            let old = trace[trace.len() - 1 - opts.window];
            if old - level <= opts.tol * level.abs() {
                converged = true;
                break;
            }
        }
    }
    Ok(PathState {
        points: z.iter().map(|u| op.field(u)).collect(),
        level,
        max_index: j,
        iterations: it,
        converged,
        trace,
        initial_gradient,
        final_gradient: rel_grad(&z[j]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsReport {
    /// ‖∇Φ(u)‖ in the dual norm, absolute and relative to sqrt(uᵀAu).
    pub gradient_norm: f64,
    pub relative_gradient: f64,
    pub level: f64,
    /// uᵀAu.
    pub seminorm: f64,
    pub lqs_integral: f64,
    pub lq_integral: f64,
    /// l = uᵀAu - λ∫|u|^q, equal to ∫|u|^{q_s} at a critical point.
    pub l_observed: f64,
    /// (s/n) l + (½ - 1/q) λ∫|u|^q, which equals Φ at a critical point.
    pub identity_level: f64,
    pub identity_residual: f64,
}

pub fn ps_diagnostics(p: &ProblemParams, op: &StiffnessOperator, field: &RadialField) -> PsReport {
    let phi = Functional::new(p, op);
    let u = field.unknowns();
    let a = op.energy(&u);
    let lq = op.power_integral(&u, p.q);
    let lqs = op.power_integral(&u, p.q_s());
    let level = phi.value(&u);
    let gn = phi.gradient_norm(&u);
    let l = a - p.lambda * lq;
    let identity = p.s / p.n as f64 * l + (0.5 - 1.0 / p.q) * p.lambda * lq;
    PsReport {
        gradient_norm: gn,
        relative_gradient: gn / a.max(1e-300).sqrt(),
        level,
        seminorm: a,
        lqs_integral: lqs,
        lq_integral: lq,
        l_observed: l,
        identity_level: identity,
        identity_residual: (level - identity).abs() / level.abs().max(1e-300),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::bubble_constants;
    use crate::problem::{WeightModel, WeightVariant};
    use crate::quad::PairOptions;
    use crate::solver::{assemble, geometric_nodes};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(kappa: f64, lambda: f64, q: f64) -> (ProblemParams, StiffnessOperator, ConstantSet) {
        let mut p = ProblemParams::new(6, 0.5);
        p.kappa = kappa;
        p.lambda = lambda;
        p.q = q;
        let w = WeightModel::from_params(&p, WeightVariant::TruncatedPower);
        let op = assemble(&p, &w, &geometric_nodes(p.radius, 40, 1.14), PairOptions::default()).unwrap();
        (p, op, bubble_constants(6, 0.5).unwrap())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, op, _) = setup(1.0, 2.0, 2.2);
        let phi = Functional::new(&p, &op);
        let u = op.bubble(0.3, 1.0) * 3.0;
        let g = phi.gradient(&u);
        for i in [0, 7, 20] {
            let h = 1e-4 * u[i].abs().max(1e-3);
            let mut a = u.clone();
            a[i] += h;
            let mut b = u.clone();
            b[i] -= h;
            let fd = (phi.value(&a) - phi.value(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g.amax(), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn fiber_without_lambda_is_explicit() {
        let (p, op, c) = setup(1.0, 0.0, 2.0);
        let v = normalized_bubble(&p, &op, 0.2);
        let f = fiber_t(&p, &op, &v, &c, 0.2).unwrap();
        let t = f.x_tilde.powf(1.0 / (p.q_s() - 2.0));
        assert!((f.t_eps - t).abs() <= 1e-14 * t);
        assert!(f.y_eps <= f.y_bound * (1.0 + 1e-12));
    }

    #[test]
    fn closed_form_matches_bisection() {
        let (p, op, c) = setup(0.5, 5.0, 2.0);
        let v = normalized_bubble(&p, &op, 0.2);
        let f = fiber_t(&p, &op, &v, &c, 0.2).unwrap();
        let b = fiber_root_bisection(f.x_tilde, p.lambda * f.lq, p.q_s(), 2.0).unwrap();
        assert!(((f.t_eps - b) / b).abs() < 1e-10);
        assert!(f.t_eps <= f.x_tilde.powf(1.0 / (p.q_s() - 2.0)));
    }

    #[test]
    fn no_positive_root() {
        assert_eq!(fiber_root_bisection(1.0, 2.0, 2.4, 2.0).unwrap_err().code(), "E_NO_ROOT");
        let r = fiber_root_bisection(3.0, 0.5, 2.4, 2.2).unwrap();
        assert!((3.0 - r.powf(0.4) - 0.5 * r.powf(0.2)).abs() < 1e-12);
    }

    #[test]
    fn fiber_bounds_hold_along_sweep() {
        for (kappa, lambda, q) in [(1.0, 1.0, 2.2), (0.05, 10.0, 2.0), (0.0, 0.1, 2.2)] {
            let (p, op, c) = setup(kappa, lambda, q);
            for f in fiber_sweep(&p, &op, &c, &[0.4, 0.2, 0.1]).unwrap() {
                assert!(f.t_eps > 0.0 && f.t_eps <= f.x_tilde.powf(1.0 / (p.q_s() - 2.0)) * (1.0 + 1e-14));
                assert!(f.y_eps <= f.y_bound * (1.0 + 1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn beta_positive_on_parameter_grid() {
        let c = bubble_constants(6, 0.5).unwrap();
        for &lambda in &[0.01, 0.5, 1.0, 10.0, 100.0] {
            for &q in &[2.0, 2.1, 2.2, 2.35] {
                // For q = 2 the eigenvalue is taken above λ.
                let alpha = if q == 2.0 { 2.0 * lambda } else { 30.0 };
                let (rho, beta) = best_rho(lambda, q, 2.4, alpha, c.ss);
                assert!(rho > 0.0 && beta > 0.0, "lambda={lambda} q={q}");
            }
        }
        assert!(best_rho(5.0, 2.0, 2.4, 4.0, c.ss).1 <= 0.0);
    }

    #[test]
    fn geometry_and_level() {
        let (p, op, c) = setup(1.0, 1.0, 2.2);
        let g = mp_geometry(&p, &op, &c).unwrap();
        let phi = Functional::new(&p, &op);
        assert_eq!(phi.value(&DVector::zeros(op.dim())), 0.0);
        assert!(g.phi_e < 0.0 && g.e_norm > g.rho && g.beta > 0.0);
        let e = g.e.unknowns();
        assert!(phi.value(&(&e * 2.0)) < g.phi_e);
        assert!(phi.value(&(&e * 1e-3)) > 0.0);
        let path = mp_level(&p, &op, &g, 21, &PathOptions::default()).unwrap();
        assert!(path.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(path.converged && path.level >= g.beta);
        assert!(path.final_gradient * 10.0 <= path.initial_gradient);
        assert_eq!(path.points[0].values.iter().map(|v| v.abs()).sum::<f64>(), 0.0);
        assert_eq!(path.points[21], g.e);
        let d = ps_diagnostics(&p, &op, &path.points[path.max_index]);
        assert!(d.identity_residual < 0.1, "{d:?}");
    }

    #[test]
    fn random_field_has_large_gradient() {
        let (p, op, _) = setup(1.0, 1.0, 2.2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = DVector::from_fn(op.dim(), |_, _| rng.random_range(0.0..3.0));
        let d = ps_diagnostics(&p, &op, &op.field(&u));
        assert!(d.relative_gradient > 0.1);
    }
}
