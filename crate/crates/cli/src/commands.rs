//! One function per subcommand.

use fracvar_core::asymptotics::{
    check_delta_lemma, fit_rate, sweep_a, sweep_energy, sweep_norms, sweep_weighted_seminorm, SweepOptions,
    SweepReport, DEFAULT_EPS_GRID,
};
use fracvar_core::bubble::{Bubble, TruncatedBubble};
use fracvar_core::constants::{bubble_constants, ConstantSet};
use fracvar_core::mountainpass::{fiber_sweep, mp_geometry, mp_level, ps_diagnostics, PathOptions};
use fracvar_core::problem::{validate, ProblemParams, WeightModel};
use fracvar_core::quad::{seminorm_mc, seminorm_radial, McOptions, McRegion, PairOptions, RadialOptions, SeminormEstimate};
use fracvar_core::solver::{
    assemble, euler_residual, first_eigenvalue, geometric_nodes, minimize_s, MinimizeOptions, RadialField,
    StiffnessOperator,
};
use serde_json::Value;

use crate::output::{num, nums, obj, Table};
use crate::{suite, CliError, Command, Ctx, Outcome, Result, SeminormMethod, Suite};

pub fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Result<Outcome> {
    match cmd {
        Command::Validate => cmd_validate(ctx),
        Command::Constants { n, s, q } => cmd_constants(ctx, *n, *s, *q),
        Command::Bubble { eps, x } => cmd_bubble(ctx, *eps, *x),
        Command::BubbleNorms { q, eps_grid } => cmd_bubble_norms(ctx, *q, eps_grid),
        Command::Seminorm { method, eps, samples } => cmd_seminorm(ctx, *method, *eps, *samples),
        Command::VerifyEstimates { suite, eps_grid } => cmd_verify_estimates(ctx, *suite, eps_grid),
        Command::Minimize { grid, ratio } => cmd_minimize(ctx, *grid, *ratio),
        Command::Eigen { grid, ratio } => cmd_eigen(ctx, *grid, *ratio),
        Command::Fiber { eps_grid, grid, ratio } => cmd_fiber(ctx, eps_grid, *grid, *ratio),
        Command::MountainPass { path_points, grid, ratio } => cmd_mountain_pass(ctx, *path_points, *grid, *ratio),
        Command::Verify => suite::run(ctx),
    }
}

fn eps_grid_or_default(g: &[f64]) -> Vec<f64> {
    if g.is_empty() {
        DEFAULT_EPS_GRID.to_vec()
    } else {
        g.to_vec()
    }
}

/// Assembles the stiffness operator on `m` geometric cells with the given ratio.
pub fn build_operator(p: &ProblemParams, w: &WeightModel, m: usize, ratio: f64) -> Result<StiffnessOperator> {
    if m < 4 {
        return Err(CliError::Usage(format!("--grid {m} is too coarse")));
    }
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(CliError::Usage(format!("--ratio {ratio} must be at least 1")));
    }
    let nodes = geometric_nodes(p.radius, m, ratio);
    Ok(assemble(p, w, &nodes, PairOptions::default())?)
}

fn profile_table(f: &RadialField, column: &str) -> Table {
    let mut t = Table::new(&["r", column]);
    for (r, v) in f.nodes.iter().zip(&f.values) {
        t.push(vec![*r, *v]);
    }
    t
}

pub fn report_json(r: &SweepReport) -> Value {
    let mut pairs = vec![
        ("quantity", Value::from(r.quantity.clone())),
        ("eps", nums(&r.eps_grid)),
        ("fit_slope", num(r.fit_slope)),
        ("fit_intercept", num(r.fit_intercept)),
        ("fit_r2", num(r.fit_r2)),
        ("claimed_rate", num(r.claimed_rate)),
        ("tolerance", num(r.tolerance)),
        ("pass", Value::Bool(r.pass)),
    ];
    let extra = obj(r.extra.iter().map(|(k, v)| (k.clone(), num(*v))));
    pairs.push(("extra", extra));
    obj(pairs)
}

fn report_table(r: &SweepReport) -> Table {
    let mut t = Table::new(&["eps", "value", "residual"]);
    for i in 0..r.eps_grid.len() {
        t.push(vec![r.eps_grid[i], r.values[i], r.residuals[i]]);
    }
    t
}

fn cmd_validate(ctx: &mut Ctx) -> Result<Outcome> {
    let cfg = ctx.config()?;
    let rep = validate(&cfg.params)?;
    for r in &rep.reasons {
        eprintln!("validate: {r}");
    }
    for w in &rep.warnings {
        eprintln!("validate: warning: {w}");
    }
    let strings = |v: &[String]| Value::Array(v.iter().cloned().map(Value::from).collect());
    let summary = obj([
        ("q_s", num(rep.q_s)),
        ("ns_admissible", Value::Bool(rep.ns_admissible)),
        ("k_admissible", Value::Bool(rep.k_admissible)),
        ("lambda_positive", Value::Bool(rep.lambda_positive)),
        ("existence_regime", Value::Bool(rep.existence_regime)),
        ("reasons", strings(&rep.reasons)),
        ("warnings", strings(&rep.warnings)),
    ]);
    ctx.art.json("validate.json", &summary)?;
    Ok(Outcome::new(summary)
        .check("ns_admissible", rep.ns_admissible)
        .check("k_admissible", rep.k_admissible)
        .check("lambda_positive", rep.lambda_positive))
}

fn constants_json(c: &ConstantSet, q: Option<f64>) -> Result<Value> {
    let mut pairs = vec![
        ("n", Value::from(c.n)),
        ("s", num(c.s)),
        ("q_s", num(c.q_s)),
        ("Kqs", num(c.kqs)),
        ("K2s", num(c.k2s)),
        ("Ks", num(c.ks)),
        ("Ss", num(c.ss)),
    ];
    if let Some(q) = q {
        pairs.push(("q", num(q)));
        pairs.push(("Kq_s", num(c.kq(q)?)));
    }
    Ok(obj(pairs))
}

fn cmd_constants(ctx: &mut Ctx, n: Option<usize>, s: Option<f64>, q: Option<f64>) -> Result<Outcome> {
    let (n, s, q) = match (n, s) {
        (Some(n), Some(s)) => (n, s, q),
        (None, None) => {
            let p = &ctx.config()?.params;
            (p.n, p.s, q.or(Some(p.q)))
        }
        _ => return Err(CliError::Usage("give both --n and --s, or a config".into())),
    };
    let c = bubble_constants(n, s)?;
    let summary = constants_json(&c, q)?;
    ctx.art.json("constants.json", &summary)?;
    Ok(Outcome::new(summary))
}

fn cmd_bubble(ctx: &mut Ctx, eps: f64, x: f64) -> Result<Outcome> {
    let p = ctx.config()?.params.clone();
    if !(eps > 0.0) || !(x >= 0.0) {
        return Err(CliError::Usage("need --eps > 0 and --x >= 0".into()));
    }
    let b = Bubble::new(p.n, p.s, eps);
    let tb = TruncatedBubble::new(p.n, p.s, eps, p.eta);
    let summary = obj([
        ("eps", num(eps)),
        ("x", num(x)),
        ("U", num(b.radial(x))),
        ("u", num(tb.radial(x))),
        ("cutoff", num(tb.cutoff.radial(x))),
    ]);
    ctx.art.json("bubble.json", &summary)?;
    Ok(Outcome::new(summary))
}

fn cmd_bubble_norms(ctx: &mut Ctx, q: Option<f64>, eps_grid: &[f64]) -> Result<Outcome> {
    let p = ctx.config()?.params.clone();
    let q = q.unwrap_or(p.q);
    let eps = eps_grid_or_default(eps_grid);
    let mut t = Table::new(&["eps", "lq_norm"]);
    let mut vals = Vec::new();
    for &e in &eps {
        let v = TruncatedBubble::new(p.n, p.s, e, p.eta).lq_norm(q)?;
        vals.push(v);
        t.push(vec![e, v]);
    }
    ctx.art.csv("bubble_norms.csv", &t)?;
    let nf = p.n as f64;
    let rate = nf - q * (nf - 2.0 * p.s) / 2.0;
    let mut pairs = vec![("q", num(q)), ("eps", nums(&eps)), ("lq_norm", nums(&vals))];
    let mut outcome_checks = Vec::new();
    if q < p.q_s() && eps.len() >= 2 {
        let fit = fit_rate(&eps, &vals)?;
        let tol = ctx.tol.unwrap_or(0.3);
        let pass = (fit.slope - rate).abs() <= tol && fit.r2 >= 0.98;
        pairs.push(("fit_slope", num(fit.slope)));
        pairs.push(("fit_r2", num(fit.r2)));
        pairs.push(("claimed_rate", num(rate)));
        pairs.push(("pass", Value::Bool(pass)));
        outcome_checks.push(("rate", pass));
    }
    let summary = obj(pairs);
    ctx.art.json("bubble_norms.json", &summary)?;
    let mut o = Outcome::new(summary);
    for (k, v) in outcome_checks {
        o = o.check(k, v);
    }
    Ok(o)
}

fn estimate_json(e: &SeminormEstimate) -> Value {
    obj([
        ("value", num(e.value)),
        ("abs_error", num(e.abs_error)),
        ("method", Value::from(e.method.name())),
        ("samples_or_panels", Value::from(e.samples_or_panels)),
        ("seed", e.seed.map(Value::from).unwrap_or(Value::Null)),
        ("warning", e.warning.clone().map(Value::from).unwrap_or(Value::Null)),
    ])
}

/// Monte Carlo seminorm of the truncated bubble centered at `a`.
pub fn mc_seminorm(
    p: &ProblemParams,
    w: &WeightModel,
    u: &TruncatedBubble,
    samples: u64,
    seed: u64,
) -> Result<SeminormEstimate> {
    let center = p.center();
    let region = McRegion {
        center: center.clone(),
        radius: 2.0 * p.eta,
        focus: u.bubble.eps.min(2.0 * p.eta),
    };
    let c2 = center.clone();
    let eval_u = move |x: &[f64]| {
        let r = x.iter().zip(&c2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        u.radial(r)
    };
    let eval_p = |x: &[f64]| w.eval(&center, x);
    Ok(seminorm_mc(&eval_u, &eval_p, p.n, p.s, &region, &McOptions::new(samples, seed))?)
}

fn cmd_seminorm(ctx: &mut Ctx, method: SeminormMethod, eps: f64, samples: u64) -> Result<Outcome> {
    let cfg = ctx.config()?.clone();
    let p = &cfg.params;
    p.check()?;
    if !(eps > 0.0) {
        return Err(CliError::Usage("--eps must be positive".into()));
    }
    let w = cfg.weight()?;
    let u = TruncatedBubble::new(p.n, p.s, eps, p.eta);
    let mut ropts = RadialOptions::default();
    if let Some(t) = ctx.tol {
        ropts.rel_tol = t;
    }
    let radial = || seminorm_radial(&u, &w, p.n, p.s, &ropts);
    let (summary, ok) = match method {
        SeminormMethod::Radial => (estimate_json(&radial()?), true),
        SeminormMethod::Mc => (estimate_json(&mc_seminorm(p, &w, &u, samples, ctx.seed)?), true),
        SeminormMethod::Both => {
            let r = radial()?;
            let m = mc_seminorm(p, &w, &u, samples, ctx.seed)?;
            let sigma = (m.abs_error.powi(2) + r.abs_error.powi(2)).sqrt();
            let z = (m.value - r.value) / sigma;
            (
                obj([
                    ("radial", estimate_json(&r)),
                    ("mc", estimate_json(&m)),
                    ("z", num(z)),
                ]),
                z.abs() <= 3.0,
            )
        }
    };
    ctx.art.json("seminorm.json", &summary)?;
    let o = Outcome::new(summary);
    Ok(if method == SeminormMethod::Both { o.check("within_3_sigma", ok) } else { o })
}

fn cmd_verify_estimates(ctx: &mut Ctx, which: Suite, eps_grid: &[f64]) -> Result<Outcome> {
    let cfg = ctx.config()?.clone();
    let p = cfg.params.clone();
    let w = cfg.weight()?;
    let eps = eps_grid_or_default(eps_grid);
    let mut opts = SweepOptions::default();
    if let Some(t) = ctx.tol {
        opts.tolerance = t;
    }
    let want = |s: Suite| which == Suite::All || which == s;
    let mut summary = Vec::new();
    let mut checks = Vec::new();
    let mut record = |ctx: &mut Ctx, name: &str, r: &SweepReport| -> Result<()> {
        ctx.art.csv(&format!("sweep_{name}.csv"), &report_table(r))?;
        summary.push((name.to_string(), report_json(r)));
        checks.push((name.to_string(), r.pass));
        Ok(())
    };
    if want(Suite::Norms) {
        for r in sweep_norms(&p, &eps, &opts)? {
            record(ctx, &r.quantity.clone(), &r)?;
        }
    }
    if want(Suite::A) {
        record(ctx, "A", &sweep_a(&p, &eps, &opts)?)?;
    }
    if want(Suite::Thm22) {
        record(ctx, "thm22", &sweep_weighted_seminorm(&p, &w, &eps, &opts)?.report)?;
    }
    if want(Suite::Energy) {
        let mut pe = p.clone();
        pe.q = 2.0;
        record(ctx, "energy", &sweep_energy(&pe, &w, &eps, &opts)?.report)?;
    }
    if want(Suite::Delta) {
        let mut t = Table::new(&["k", "R", "delta", "worst_ratio"]);
        let mut all = true;
        let mut i = 0;
        for k in [2.0, 3.0, 4.0] {
            for r in [1.0, 2.0] {
                let d = check_delta_lemma(k, r, 100_000, ctx.seed.wrapping_add(i))?;
                t.push(vec![k, r, d.delta, d.worst_ratio]);
                all &= d.pass;
                i += 1;
            }
        }
        ctx.art.csv("delta_lemma.csv", &t)?;
        summary.push(("delta".to_string(), obj([("pass", Value::Bool(all))])));
        checks.push(("delta".to_string(), all));
    }
    let summary = obj(summary);
    ctx.art.json("verify_estimates.json", &summary)?;
    let mut o = Outcome::new(summary);
    for (k, v) in checks {
        o = o.check(&k, v);
    }
    Ok(o)
}

fn cmd_minimize(ctx: &mut Ctx, grid: usize, ratio: f64) -> Result<Outcome> {
    let cfg = ctx.config()?.clone();
    let p = &cfg.params;
    let op = build_operator(p, &cfg.weight()?, grid, ratio)?;
    let init = fracvar_core::mountainpass::normalized_bubble(p, &op, 0.2);
    let mut opts = MinimizeOptions::default();
    if let Some(t) = ctx.tol {
        opts.tol = t;
    }
    let r = minimize_s(p, &op, &init, &opts)?;
    let euler = euler_residual(p, &op, &r.field, r.energy);
    let summary = obj([
        ("grid", Value::from(grid)),
        ("ratio", num(ratio)),
        ("lambda", num(p.lambda)),
        ("energy", num(r.energy)),
        ("p0_Ss", num(r.p0_ss)),
        ("constraint_residual", num(r.constraint_residual)),
        ("euler_residual", num(euler)),
        ("gradient", num(r.gradient)),
        ("iterations", Value::from(r.iterations)),
        ("converged", Value::Bool(r.converged)),
        ("below_threshold", Value::Bool(r.below_threshold)),
        ("indefinite_regime", Value::Bool(r.indefinite_regime)),
    ]);
    ctx.art.json("minimize.json", &summary)?;
    ctx.art.csv("minimize_profile.csv", &profile_table(&r.field, "u"))?;
    let mut trace = Table::new(&["iteration", "energy"]);
    for (i, e) in r.trace.iter().enumerate() {
        trace.push(vec![i as f64, *e]);
    }
    ctx.art.csv("minimize_trace.csv", &trace)?;
    Ok(Outcome::new(summary)
        .check("converged", r.converged)
        .check("constraint", r.constraint_residual <= 1e-8))
}

fn cmd_eigen(ctx: &mut Ctx, grid: usize, ratio: f64) -> Result<Outcome> {
    let cfg = ctx.config()?.clone();
    let op = build_operator(&cfg.params, &cfg.weight()?, grid, ratio)?;
    let e = first_eigenvalue(&op)?;
    let summary = obj([
        ("lambda1", num(e.lambda1)),
        ("residual", num(e.residual)),
        ("iterations", Value::from(e.iterations)),
        ("grid", Value::from(grid)),
        ("ratio", num(ratio)),
    ]);
    ctx.art.json("eigen.json", &summary)?;
    ctx.art.csv("eigen_profile.csv", &profile_table(&e.field, "u"))?;
    Ok(Outcome::new(summary).check("residual", e.residual <= 1e-8))
}

fn cmd_fiber(ctx: &mut Ctx, eps_grid: &[f64], grid: usize, ratio: f64) -> Result<Outcome> {
    let cfg = ctx.config()?.clone();
    let p = &cfg.params;
    let eps = eps_grid_or_default(eps_grid);
    let op = build_operator(p, &cfg.weight()?, grid, ratio)?;
    let c = bubble_constants(p.n, p.s)?;
    let rows = fiber_sweep(p, &op, &c, &eps)?;
    let bound = c.mountain_pass_bound(op.p0);
    let mut t = Table::new(&["eps", "X_tilde", "t_eps", "Y_eps", "limit_gap", "rel_gap", "Y_bound"]);
    for r in &rows {
        t.push(vec![r.eps, r.x_tilde, r.t_eps, r.y_eps, r.limit_gap, r.rel_gap, r.y_bound]);
    }
    ctx.art.csv("fiber.csv", &t)?;
    let monotone = rows.windows(2).all(|w| w[1].limit_gap < w[0].limit_gap);
    let below = rows.iter().all(|r| r.y_eps < bound);
    let summary = obj([
        ("limit", num(c.fiber_limit(op.p0))),
        ("mountain_pass_bound", num(bound)),
        ("final_rel_gap", num(rows.last().map(|r| r.rel_gap).unwrap_or(f64::NAN))),
        ("monotone_gap", Value::Bool(monotone)),
        ("y_below_bound", Value::Bool(below)),
    ]);
    ctx.art.json("fiber.json", &summary)?;
    Ok(Outcome::new(summary)
        .check("monotone_gap", monotone)
        .check("y_below_bound", below))
}

/// Result of a mountain-pass run, shared with the suite.
pub struct MountainPassRun {
    pub summary: Value,
    pub beta: f64,
    pub level: f64,
    pub bound: f64,
    pub monotone: bool,
    pub drop: f64,
    pub converged: bool,
    pub path: Table,
    pub max_point: Table,
    pub trace: Table,
}

pub fn mountain_pass(p: &ProblemParams, w: &WeightModel, m: usize, grid: usize, ratio: f64, grad_tol: Option<f64>) -> Result<MountainPassRun> {
    let op = build_operator(p, w, grid, ratio)?;
    let c = bubble_constants(p.n, p.s)?;
    let geom = mp_geometry(p, &op, &c)?;
    let mut opts = PathOptions::default();
    if let Some(t) = grad_tol {
        opts.grad_tol = t;
    }
    let st = mp_level(p, &op, &geom, m, &opts)?;
    let bound = c.mountain_pass_bound(op.p0);
    let monotone = st.trace.windows(2).all(|w| w[1] <= w[0]);
    let drop = st.initial_gradient / st.final_gradient;
    let top = &st.points[st.max_index];
    let ps = ps_diagnostics(p, &op, top);
    let phi = fracvar_core::mountainpass::Functional::new(p, &op);
    let mut path = Table::new(&["index", "phi", "seminorm", "lqs_integral"]);
    for (i, f) in st.points.iter().enumerate() {
        let u = f.unknowns();
        path.push(vec![i as f64, phi.value(&u), op.energy(&u), op.power_integral(&u, p.q_s())]);
    }
    let mut trace = Table::new(&["iteration", "level"]);
    for (i, l) in st.trace.iter().enumerate() {
        trace.push(vec![i as f64, *l]);
    }
    let summary = obj([
        ("beta", num(geom.beta)),
        ("rho", num(geom.rho)),
        ("level", num(st.level)),
        ("bound", num(bound)),
        ("converged", Value::Bool(st.converged)),
        ("iterations", Value::from(st.iterations)),
        ("path_points", Value::from(m)),
        ("grid", Value::from(grid)),
        ("ratio", num(ratio)),
        ("e_norm", num(geom.e_norm)),
        ("phi_e", num(geom.phi_e)),
        ("alpha_q", num(geom.alpha_q)),
        ("initial_gradient", num(st.initial_gradient)),
        ("final_gradient", num(st.final_gradient)),
        ("gradient_drop", num(drop)),
        ("trace_monotone", Value::Bool(monotone)),
        ("identity_residual", num(ps.identity_residual)),
    ]);
    Ok(MountainPassRun {
        summary,
        beta: geom.beta,
        level: st.level,
        bound,
        monotone,
        drop,
        converged: st.converged,
        path,
        max_point: profile_table(top, "u"),
        trace,
    })
}

fn cmd_mountain_pass(ctx: &mut Ctx, m: usize, grid: usize, ratio: f64) -> Result<Outcome> {
    let cfg = ctx.config()?.clone();
    let run = mountain_pass(&cfg.params, &cfg.weight()?, m, grid, ratio, ctx.tol)?;
    ctx.art.json("mountain_pass.json", &run.summary)?;
    ctx.art.csv("mountain_pass_path.csv", &run.path)?;
    ctx.art.csv("mountain_pass_max_point.csv", &run.max_point)?;
    ctx.art.csv("mountain_pass_trace.csv", &run.trace)?;
    let tol = 1e-8 * run.beta.abs();
    Ok(Outcome::new(run.summary.clone())
        .check("above_beta", run.level >= run.beta - tol)
        .check("below_bound", run.level < run.bound)
        .check("monotone_trace", run.monotone)
        .check("converged", run.converged))
}
