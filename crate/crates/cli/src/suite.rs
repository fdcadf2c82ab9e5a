//! The `verify` suite: eleven numerical acceptance criteria run against the
//! config's base parameters. Runtimes go to `timings.json`; everything in
//! `verify.json` is deterministic given the config and seed.
//!
//! Regime-dependent criteria build their own parameter sets from the base:
//! the existence checks take κ at half the measured q = 2 threshold κ*(λ)
//! and λ at half the discrete first eigenvalue.

use std::time::Instant;

use fracvar_core::asymptotics::{
    check_delta_lemma, sweep_a, sweep_energy, sweep_norms, sweep_weighted_seminorm, SweepOptions,
    ASYMPTOTIC_EPS_GRID, DEFAULT_EPS_GRID,
};
use fracvar_core::bubble::{Bubble, TruncatedBubble};
use fracvar_core::constants::{bubble_constants, lebesgue_power_integral};
use fracvar_core::gauss;
use fracvar_core::mountainpass::{fiber_root_bisection, fiber_sweep, normalized_bubble};
use fracvar_core::problem::{Config, ProblemParams, WeightModel, WeightVariant};
use fracvar_core::quad::{lq_integral, seminorm_radial, RadialOptions};
use fracvar_core::solver::{first_eigenvalue, minimize_s, MinimizeOptions};
use fracvar_core::special::sphere_area;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::commands::{build_operator, mc_seminorm, mountain_pass, report_json};
use crate::output::{num, nums, obj};
use crate::{Ctx, Outcome, Result};

/// Runtime budget per criterion in seconds, indexed by id - 1.
pub const BUDGETS: [f64; 11] = [5.0, 10.0, 120.0, 120.0, 300.0, 10.0, 600.0, 60.0, 300.0, 900.0, 600.0];

/// Solver grid of the existence and fiber checks.
const GRID: usize = 128;
const RATIO: f64 = 1.05;
/// The mountain-pass max-point needs cells finer than GRID/RATIO give at the center.
const MP_RATIO: f64 = 1.08;
const MP_POINTS: usize = 21;

#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub metrics: Vec<(String, Value)>,
    pub notes: Vec<String>,
}

impl Criterion {
    fn new(id: usize, name: &'static str) -> Self {
        Self {
            id,
            name,
            pass: true,
            metrics: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, v: Value) {
        self.metrics.push((key.to_string(), v));
    }

    /// Records a sub-check; the criterion passes only if all of them do.
    fn require(&mut self, key: &str, ok: bool) {
        self.metrics.push((format!("ok_{key}"), Value::Bool(ok)));
        self.pass &= ok;
    }

    fn to_json(&self) -> Value {
        obj([
            ("id", Value::from(self.id)),
            ("name", Value::from(self.name)),
            ("pass", Value::Bool(self.pass)),
            ("metrics", obj(self.metrics.clone())),
            (
                "notes",
                Value::Array(self.notes.iter().cloned().map(Value::from).collect()),
            ),
        ])
    }
}

struct Suite {
    cfg: Config,
    seed: u64,
    /// κ*(λ)/λ from the energy sweep.
    slope: Option<f64>,
    /// (κ, λ) of the q = 2 existence regime.
    existence: Option<(f64, f64)>,
}

impl Suite {
    fn base(&self) -> ProblemParams {
        self.cfg.params.clone()
    }

    fn weight(&self, p: &ProblemParams) -> WeightModel {
        WeightModel::from_params(p, self.cfg.variant)
    }

    fn threshold_slope(&mut self) -> Result<f64> {
        if let Some(s) = self.slope {
            return Ok(s);
        }
        let mut p = self.base();
        p.kappa = 1.0;
        p.lambda = 1.0;
        p.q = 2.0;
        let sw = sweep_energy(&p, &self.weight(&p), &DEFAULT_EPS_GRID, &SweepOptions::default())?;
        let s = sw.kappa_threshold.ok_or_else(|| {
            fracvar_core::Error::Degenerate("energy sweep gave no kappa threshold".into())
        })?;
        self.slope = Some(s);
        Ok(s)
    }

    fn lambda1(&self, kappa: f64) -> Result<f64> {
        let mut p = self.base();
        p.kappa = kappa;
        p.q = 2.0;
        let op = build_operator(&p, &self.weight(&p), GRID, RATIO)?;
        Ok(first_eigenvalue(&op)?.lambda1)
    }

    /// κ = ½ κ*(λ) and λ = ½ λ₁(κ), by fixed-point iteration from κ = 0.
    fn existence_regime(&mut self) -> Result<(f64, f64)> {
        if let Some(t) = self.existence {
            return Ok(t);
        }
        let slope = self.threshold_slope()?;
        let mut kappa = 0.0;
        let mut lambda = 0.5 * self.lambda1(kappa)?;
        for _ in 0..8 {
            let next = 0.5 * slope * lambda;
            let done = (next - kappa).abs() <= 1e-3 * next;
            kappa = next;
            lambda = 0.5 * self.lambda1(kappa)?;
            if done {
                break;
            }
        }
        self.existence = Some((kappa, lambda));
        Ok((kappa, lambda))
    }
}

/// σ_{n-1} ∫_0^∞ r^{n-1} (1 + r²)^{-α} dr through r = t/(1 - t), with
/// panels graded geometrically towards t = 1.
fn radial_power_quadrature(n: usize, alpha: f64) -> f64 {
    let mut breaks: Vec<f64> = (0..=8).map(|i| i as f64 / 16.0).collect();
    breaks.extend((1..=60).map(|j| 1.0 - 0.5f64.powi(j)));
    sphere_area(n)
        * gauss::composite(&breaks, 30, |t| {
            let r = t / (1.0 - t);
            r.powi(n as i32 - 1) * (1.0 + r * r).powf(-alpha) / ((1.0 - t) * (1.0 - t))
        })
}

fn c1(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(1, "constants oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(su.seed);
    rng.set_stream(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(1..=9usize);
        let alpha = n as f64 / 2.0 + rng.random_range(0.5..6.0);
        let exact = lebesgue_power_integral(n, alpha)?;
        let quad = radial_power_quadrature(n, alpha);
        worst = worst.max(((exact - quad) / exact).abs());
    }
    c.metric("worst_relative_error", num(worst));
    c.require("rel_1e-10", worst < 1e-10);
    Ok(c)
}

fn c2(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(2, "critical norm scale invariance");
    let p = su.base();
    let qs = p.q_s();
    let eps = [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0];
    let vals: Vec<f64> = eps
        .iter()
        .map(|&e| lq_integral(&Bubble::new(p.n, p.s, e), p.n, qs))
        .collect();
    let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
    let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let kqs = lebesgue_power_integral(p.n, p.n as f64)?;
    c.metric("values", nums(&vals));
    c.metric("relative_spread", num((hi - lo) / mean));
    c.metric("relative_to_Kqs", num((mean - kqs) / kqs));
    c.require("spread_1e-6", (hi - lo) / mean < 1e-6);
    Ok(c)
}

fn c3(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(3, "bubble norm asymptotics");
    let p = su.base();
    for r in sweep_norms(&p, &DEFAULT_EPS_GRID, &SweepOptions::default())? {
        c.require(&r.quantity, r.pass);
        c.metric(&r.quantity, report_json(&r));
    }
    Ok(c)
}

fn c4(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(4, "interior weighted integral A");
    let p = su.base();
    let eps = [0.5, 0.35, 0.25, 0.175, 0.125, 0.0875, 0.0625, 0.05];
    let r = sweep_a(&p, &eps, &SweepOptions::default())?;
    c.require("ratio_and_slope", r.pass);
    c.metric("A", report_json(&r));
    Ok(c)
}

fn c5(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(5, "weighted seminorm expansion");
    let opts = SweepOptions::default();
    let mut p = su.base();
    p.kappa = 1.0;
    let with = sweep_weighted_seminorm(&p, &su.weight(&p), &DEFAULT_EPS_GRID, &opts)?;
    c.require("kappa1_positive_rate_2s", with.report.pass);
    c.metric("kappa1", report_json(&with.report));
    p.kappa = 0.0;
    let without = sweep_weighted_seminorm(&p, &su.weight(&p), &ASYMPTOTIC_EPS_GRID, &opts)?;
    c.require("kappa0_rate_n_minus_2s", without.report.pass);
    c.metric("kappa0", report_json(&without.report));
    c.notes
        .push("kappa = 0 is fitted on the finer eps-grid where the cutoff residual is asymptotic".into());
    Ok(c)
}

fn c6(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(6, "delta lemma");
    let mut worst: f64 = 0.0;
    let mut i = 0u64;
    for k in [2.0, 3.0, 4.0] {
        for r in [1.0, 2.0] {
            let d = check_delta_lemma(k, r, 100_000, su.seed.wrapping_add(600 + i))?;
            c.require(&format!("k{k}_R{r}"), d.pass);
            worst = worst.max(d.worst_ratio);
            i += 1;
        }
    }
    c.metric("worst_ratio", num(worst));
    Ok(c)
}

fn c7(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(7, "energy dip and minimizer");
    let slope = su.threshold_slope()?;
    let (kappa, lambda) = su.existence_regime()?;
    let mut p = su.base();
    p.kappa = kappa;
    p.lambda = lambda;
    p.q = 2.0;
    let w = su.weight(&p);
    c.metric("kappa", num(kappa));
    c.metric("lambda", num(lambda));
    c.metric("kappa_threshold", num(slope * lambda));
    c.require("kappa_below_threshold", kappa < slope * lambda);

    let sw = sweep_energy(&p, &w, &DEFAULT_EPS_GRID, &SweepOptions::default())?;
    let min_gap = sw.gaps.iter().cloned().fold(f64::MAX, f64::min);
    c.metric("p0_Ss", num(sw.p0_ss));
    c.metric("min_energy_gap", num(min_gap));
    c.require("grid_energy_dips", sw.dips);

    let op = build_operator(&p, &w, GRID, RATIO)?;
    let init = normalized_bubble(&p, &op, 0.2);
    let r = minimize_s(&p, &op, &init, &MinimizeOptions::default())?;
    c.metric("energy", num(r.energy));
    c.metric("constraint_residual", num(r.constraint_residual));
    c.metric("iterations", Value::from(r.iterations));
    c.require("converged", r.converged);
    c.require("below_p0_Ss", r.energy < r.p0_ss);
    c.require("constraint_1e-8", r.constraint_residual <= 1e-8);

    // Resolution gate: halve every cell.
    let fine = build_operator(&p, &w, 2 * GRID, RATIO.sqrt())?;
    let init = normalized_bubble(&p, &fine, 0.2);
    let rf = minimize_s(&p, &fine, &init, &MinimizeOptions::default())?;
    let change = ((rf.energy - r.energy) / r.energy).abs();
    c.metric("refined_energy", num(rf.energy));
    c.metric("refinement_change", num(change));
    c.require("refinement_2pct", rf.converged && change < 0.02);

    let mut p0 = su.base();
    p0.kappa = 1.0;
    p0.lambda = 0.0;
    p0.q = 2.0;
    let none = sweep_energy(&p0, &su.weight(&p0), &DEFAULT_EPS_GRID, &SweepOptions::default())?;
    let min0 = none.gaps.iter().cloned().fold(f64::MAX, f64::min);
    c.metric("lambda0_min_energy_gap", num(min0));
    c.require("lambda0_no_dip", none.report.pass);
    Ok(c)
}

fn c8(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(8, "first eigenvalue");
    let p = su.base();
    let w = su.weight(&p);
    let e = first_eigenvalue(&build_operator(&p, &w, GRID, RATIO)?)?;
    let e2 = first_eigenvalue(&build_operator(&p, &w.scaled(2.0), GRID, RATIO)?)?;
    let e1 = first_eigenvalue(&build_operator(&p, &WeightModel::constant(1.0), GRID, RATIO)?)?;
    let doubling = (e2.lambda1 / (2.0 * e.lambda1) - 1.0).abs();
    c.metric("lambda1", num(e.lambda1));
    c.metric("residual", num(e.residual));
    c.metric("doubling_error", num(doubling));
    c.metric("lambda1_unit_weight", num(e1.lambda1));
    c.require("residual_1e-8", e.residual <= 1e-8);
    c.require("doubling_1e-8", doubling <= 1e-8);
    c.require("above_p0_unit", e.lambda1 >= w.p0() * e1.lambda1);
    Ok(c)
}

fn c9(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(9, "fiber limits");
    let consts = bubble_constants(su.base().n, su.base().s)?;
    let slope = su.threshold_slope()?;
    let (kappa, lambda) = su.existence_regime()?;

    let mut p = su.base();
    p.kappa = kappa;
    p.lambda = lambda;
    p.q = 2.0;
    let op = build_operator(&p, &su.weight(&p), GRID, RATIO)?;
    let rows = fiber_sweep(&p, &op, &consts, &DEFAULT_EPS_GRID)?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.rel_gap).collect();
    let monotone = rows.windows(2).all(|w| w[1].limit_gap < w[0].limit_gap);
    let last = *gaps.last().expect("grid is non-empty");
    let mut closed_vs_bisect: f64 = 0.0;
    for r in &rows {
        let t = fiber_root_bisection(r.x_tilde, p.lambda * r.lq, p.q_s(), 2.0)?;
        closed_vs_bisect = closed_vs_bisect.max(((t - r.t_eps) / r.t_eps).abs());
    }
    let bound = consts.mountain_pass_bound(op.p0);
    c.metric("q2_rel_gaps", nums(&gaps));
    c.metric("q2_closed_vs_bisection", num(closed_vs_bisect));
    c.require("q2_monotone_gap", monotone);
    c.require("q2_final_gap_2pct", last < 0.02);
    c.require("q2_closed_form_1e-10", closed_vs_bisect <= 1e-10);
    let ratio = |rows: &[fracvar_core::mountainpass::FiberResult]| {
        rows.iter().map(|r| r.y_eps / bound).fold(f64::MIN, f64::max)
    };
    c.metric("q2_max_Y_over_bound", num(ratio(&rows)));
    c.require("q2_Y_below_bound", rows.iter().all(|r| r.y_eps < bound));

    for lam in [0.1, 1.0, 10.0] {
        let mut p = su.base();
        p.q = if su.base().q > 2.0 { su.base().q } else { 2.2 };
        p.lambda = lam;
        p.kappa = 0.5 * slope * lam;
        let op = build_operator(&p, &su.weight(&p), GRID, RATIO)?;
        let rows = fiber_sweep(&p, &op, &consts, &DEFAULT_EPS_GRID)?;
        c.metric(&format!("q{}_lambda{lam}_max_Y_over_bound", p.q), num(ratio(&rows)));
        c.require(&format!("q{}_lambda{lam}_Y_below_bound", p.q), rows.iter().all(|r| r.y_eps < bound));
    }
    c.notes.push(format!(
        "existence regimes use kappa = kappa*(lambda)/2, kappa*(lambda) = {slope:.6e} lambda"
    ));
    Ok(c)
}

fn c10(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(10, "mountain-pass level");
    let p = su.base();
    let run = mountain_pass(&p, &su.weight(&p), MP_POINTS, GRID, MP_RATIO, None)?;
    let tol = 1e-8 * run.beta.abs();
    c.metric("summary", run.summary.clone());
    c.require("above_beta", run.level >= run.beta - tol);
    c.require("below_bound", run.level < run.bound);
    c.require("monotone_trace", run.monotone);
    c.require("gradient_drop_10x", run.drop >= 10.0);
    Ok(c)
}

/// Seminorm configurations for the cross-method check: (n, s, ε, κ, variant).
const MC_CASES: [(usize, f64, f64, f64, WeightVariant); 5] = [
    (6, 0.5, 0.3, 1.0, WeightVariant::TruncatedPower),
    (3, 0.2, 0.2, 1.0, WeightVariant::TruncatedPower),
    (4, 0.45, 0.5, 2.0, WeightVariant::Constant),
    (5, 0.6, 0.3, 1.0, WeightVariant::TabulatedRadial),
    (8, 0.9, 0.4, 0.5, WeightVariant::TruncatedPower),
];

fn c11(su: &mut Suite) -> Result<Criterion> {
    let mut c = Criterion::new(11, "radial vs Monte Carlo seminorm");
    let mut zs = Vec::new();
    for (i, &(n, s, eps, kappa, variant)) in MC_CASES.iter().enumerate() {
        let mut p = ProblemParams::new(n, s);
        p.kappa = kappa;
        let w = WeightModel::from_params(&p, variant);
        let u = TruncatedBubble::new(n, s, eps, p.eta);
        let det = seminorm_radial(&u, &w, n, s, &RadialOptions::default())?;
        let mc = mc_seminorm(&p, &w, &u, 200_000, su.seed.wrapping_add(1100 + i as u64))?;
        let z = (mc.value - det.value) / (mc.abs_error.powi(2) + det.abs_error.powi(2)).sqrt();
        zs.push(z);
    }
    c.metric("z_scores", nums(&zs));
    c.require("within_3_sigma", zs.iter().all(|z| z.abs() <= 3.0));

    let (n, s, eps, kappa, variant) = MC_CASES[0];
    let mut p = ProblemParams::new(n, s);
    p.kappa = kappa;
    let w = WeightModel::from_params(&p, variant);
    let u = TruncatedBubble::new(n, s, eps, p.eta);
    let det = seminorm_radial(&u, &w, n, s, &RadialOptions::default())?.value;
    let est: Vec<f64> = (0..50)
        .map(|i| mc_seminorm(&p, &w, &u, 20_000, su.seed.wrapping_add(1200 + i)).map(|e| e.value))
        .collect::<Result<_>>()?;
    let mean = est.iter().sum::<f64>() / 50.0;
    let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 49.0;
    let z = (mean - det) / (var / 50.0).sqrt();
    c.metric("seed_mean_relative_bias", num((mean - det) / det));
    c.metric("seed_mean_z", num(z));
    c.require("unbiased_over_50_seeds", z.abs() <= 3.0);
    Ok(c)
}

type Check = fn(&mut Suite) -> Result<Criterion>;

const CHECKS: [(usize, &str, Check); 11] = [
    (1, "constants oracle", c1),
    (2, "critical norm scale invariance", c2),
    (3, "bubble norm asymptotics", c3),
    (4, "interior weighted integral A", c4),
    (5, "weighted seminorm expansion", c5),
    (6, "delta lemma", c6),
    (7, "energy dip and minimizer", c7),
    (8, "first eigenvalue", c8),
    (9, "fiber limits", c9),
    (10, "mountain-pass level", c10),
    (11, "radial vs Monte Carlo seminorm", c11),
];

pub fn run(ctx: &mut Ctx) -> Result<Outcome> {
    let cfg = ctx.config()?.clone();
    cfg.params.check()?;
    let mut su = Suite {
        cfg,
        seed: ctx.seed,
        slope: None,
        existence: None,
    };
    let mut results = Vec::new();
    for (id, name, f) in CHECKS {
        let start = Instant::now();
        let c = match f(&mut su) {
            Ok(c) => c,
            Err(e) => {
                let mut c = Criterion::new(id, name);
                c.pass = false;
                c.notes.push(format!("error[{}]: {e}", e.code()));
                c
            }
        };
        ctx.timings
            .insert(format!("criterion_{id:02}"), start.elapsed().as_secs_f64());
        eprintln!(
            "verify: criterion {id:2} {:<34} {}",
            name,
            if c.pass { "PASS" } else { "FAIL" }
        );
        results.push(c);
    }
    let all = results.iter().all(|c| c.pass);
    let summary = obj([
        ("criteria", Value::Array(results.iter().map(Criterion::to_json).collect())),
        ("pass", Value::Bool(all)),
    ]);
    ctx.art.json("verify.json", &summary)?;
    let mut o = Outcome::new(obj([
        ("pass", Value::Bool(all)),
        (
            "passed",
            Value::from(results.iter().filter(|c| c.pass).count()),
        ),
        ("total", Value::from(results.len())),
    ]));
    for c in &results {
        o = o.check(&format!("criterion_{:02}", c.id), c.pass);
    }
    Ok(o)
}
