//! The `fracvar` command line: argument parsing, config loading, artifact
//! writing and the `verify` suite.

pub mod commands;
pub mod error;
pub mod output;
pub mod suite;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use fracvar_core::par;
use fracvar_core::problem::Config;
use serde_json::Value;

pub use error::{CliError, Result};
use output::{num, obj, Artifacts, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "fracvar", version, about = "Weighted fractional critical Sobolev problems: constants, bubbles, seminorms, minimizers and mountain-pass levels")]
pub struct Cli {
    /// Problem configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; FRACVAR_OUT takes precedence.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Numerical tolerance of the command (solver gradient, sweep rate window, quadrature).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeminormMethod {
    Radial,
    Mc,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    #[value(name = "A")]
    A,
    Thm22,
    Delta,
    Energy,
    Norms,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Checks the parameters against the hypotheses of the existence results.
    Validate,
    /// Bubble constants for (n, s).
    Constants {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// U_ε and the truncated u_ε at one radius.
    Bubble {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        x: f64,
    },
    /// ‖u_ε‖_q^q along an ε-grid.
    BubbleNorms {
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        eps_grid: Vec<f64>,
    },
    /// Weighted seminorm of u_ε.
    Seminorm {
        #[arg(long, value_enum, default_value_t = SeminormMethod::Radial)]
        method: SeminormMethod,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
    },
    /// Asymptotic sweeps of the bubble estimates.
    VerifyEstimates {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, value_delimiter = ',')]
        eps_grid: Vec<f64>,
    },
    /// Constrained minimizer on a radial grid.
    Minimize {
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = 1.05)]
        ratio: f64,
    },
    /// First weighted eigenvalue on a radial grid.
    Eigen {
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = 1.05)]
        ratio: f64,
    },
    /// Maximizers of t ↦ Φ(t v_ε) along an ε-grid.
    Fiber {
        #[arg(long, value_delimiter = ',')]
        eps_grid: Vec<f64>,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = 1.05)]
        ratio: f64,
    },
    /// Mountain-pass geometry and level.
    MountainPass {
        #[arg(long, default_value_t = 21)]
        path_points: usize,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = 1.08)]
        ratio: f64,
    },
    /// Runs the full acceptance suite.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Constants { .. } => "constants",
            Command::Bubble { .. } => "bubble",
            Command::BubbleNorms { .. } => "bubble-norms",
            Command::Seminorm { .. } => "seminorm",
            Command::VerifyEstimates { .. } => "verify-estimates",
            Command::Minimize { .. } => "minimize",
            Command::Eigen { .. } => "eigen",
            Command::Fiber { .. } => "fiber",
            Command::MountainPass { .. } => "mountain-pass",
            Command::Verify => "verify",
        }
    }
}

/// Shared state of one command.
pub struct Ctx {
    pub config: Option<Config>,
    pub seed: u64,
    pub tol: Option<f64>,
    pub art: Artifacts,
    /// Wall seconds per named step, kept out of the manifest.
    pub timings: BTreeMap<String, f64>,
}

impl Ctx {
    pub fn config(&self) -> Result<&Config> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs --config FILE".into()))
    }
}

/// What a command reports back: named checks and a JSON summary for stdout.
pub struct Outcome {
    pub checks: BTreeMap<String, bool>,
    pub summary: Value,
}

impl Outcome {
    pub fn new(summary: Value) -> Self {
        Self {
            checks: BTreeMap::new(),
            summary,
        }
    }

    pub fn check(mut self, name: &str, ok: bool) -> Self {
        self.checks.insert(name.to_string(), ok);
        self
    }

    pub fn pass(&self) -> bool {
        self.checks.values().all(|&b| b)
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = Config::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: &Cli, out: &Path) -> Result<Outcome> {
    let config = match &cli.config {
        Some(p) => Some(load_config(p, cli.seed)?),
        None => None,
    };
    let seed = config.as_ref().map(|c| c.seed).or(cli.seed).unwrap_or(0);
    let mut ctx = Ctx {
        config,
        seed,
        tol: cli.tol,
        art: Artifacts::new(out)?,
        timings: BTreeMap::new(),
    };
    if let Some(t) = ctx.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--tol {t} must be positive")));
        }
    }
    let start = Instant::now();
    let outcome = commands::dispatch(&cli.command, &mut ctx)?;
    ctx.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    let timing = obj(ctx.timings.iter().map(|(k, v)| (k.clone(), num(*v))));
    ctx.art.json("timings.json", &timing)?;
    let mut outputs = ctx.art.files();
    outputs.push("manifest.json".into());
    outputs.sort();
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config: ctx.config.as_ref().map(|c| c.to_text()),
        seed: ctx.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        checks: outcome.checks.clone(),
        pass: outcome.pass(),
    };
    ctx.art.json("manifest.json", &manifest.to_json())?;
    Ok(outcome)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let out = std::env::var_os("FRACVAR_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| cli.out.clone());
    let threads = cli.threads;
    let result = par::with_threads(threads, || execute(&cli, &out));
    match result {
        Ok(outcome) => {
            print!("{}", output::json_text(&outcome.summary));
            let failed: Vec<&String> = outcome.checks.iter().filter(|(_, &v)| !v).map(|(k, _)| k).collect();
            if failed.is_empty() {
                0
            } else {
                for f in failed {
                    eprintln!("{}: check failed: {f}", cli.command.name());
                }
                2
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

/// Parses `args` (program name first) and runs. Usage errors exit with 1.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}
