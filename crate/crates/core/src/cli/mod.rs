//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 solver
//! non-convergence, 3 degenerate observation (singular `M`).

pub mod config;
pub mod output;
pub mod plot;
pub mod selftest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use config::RunConfig;

use crate::dof::dof_report;
use crate::error::{Error, Result};
use crate::gridlasso::{compare_grid_vs_continuous, GridCompareConfig, GridCompareRow};
use crate::model::{DiscreteMeasure, ForwardModel};
use crate::risk::{run_sweep, Aggregate};
use crate::solver::solve_blasso;
use plot::{Plot, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "blasso", version, about = "Beurling Lasso solver, degrees of freedom and SURE sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` of the config; default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Observation vector as CSV instead of synthesizing it from the truth.
    #[arg(long)]
    pub y: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the Blasso once; writes solution.csv and certificate.csv.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Degrees-of-freedom report of a solution; writes dof_report.csv.
    Dof {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        lambda: Option<f64>,
        /// Evaluate the report on this solution.csv instead of solving.
        #[arg(long)]
        measure: Option<PathBuf>,
    },
    /// Monte-Carlo SURE sweep over the lambda grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Grid Lasso against the Blasso over grid sizes and the lambda grid.
    GridCompare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fast invariant checks.
    Selftest,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SingularM { .. } | Error::DegenerateCertificate(_) => EXIT_DEGENERATE,
        _ => EXIT_CONFIG,
    }
}

struct Context {
    cfg: RunConfig,
    model: ForwardModel,
    out: PathBuf,
    workers: Option<usize>,
}

impl Context {
    fn new(common: &CommonArgs) -> Result<Self> {
        let mut cfg = RunConfig::load(&common.config)?;
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if common.workers == Some(0) {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        let model = cfg.model()?;
        let out = common.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { cfg, model, out, workers: common.workers })
    }

    fn y(&self, path: Option<&Path>) -> Result<DVector<f64>> {
        let y = match path {
            Some(p) => output::read_vector(p)?,
            None => self.cfg.synthesize_y(&self.model)?,
        };
        if y.len() != self.model.n() {
            return Err(Error::Config(format!("y has {} entries, model has n = {}", y.len(), self.model.n())));
        }
        Ok(y)
    }

    fn lambda(&self, flag: Option<f64>) -> Result<f64> {
        match flag {
            Some(l) if l > 0.0 && l.is_finite() => Ok(l),
            Some(l) => Err(Error::Config(format!("lambda must be positive, got {l}"))),
            None => self.cfg.lambda(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.workers {
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
                Ok(pool.install(f))
            }
            None => Ok(f()),
        }
    }
}

/// Points where the certificate is sampled for certificate.csv.
fn certificate_points(model: &ForwardModel, seed: u64, support: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let d = model.dim();
    let mut pts = if d == 1 {
        model.domain().grid(1024)
    } else if d <= 3 {
        model.domain().grid((4096f64.powf(1.0 / d as f64)).floor() as usize)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normalized = model.as_relu().is_some_and(|r| r.normalized());
        (0..1024)
            .map(|_| {
                let mut x = if normalized {
                    DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng))
                } else {
                    model.domain().sample(&mut rng)
                };
                model.canonicalize(&mut x);
                x
            })
            .collect()
    };
    pts.extend(support.iter().cloned());
    pts
}

fn cmd_solve(common: &CommonArgs, lambda: Option<f64>) -> Result<i32> {
    let ctx = Context::new(common)?;
    let y = ctx.y(common.y.as_deref())?;
    let lambda = ctx.lambda(lambda)?;
    let opts = ctx.cfg.solver_options();
    let res = solve_blasso(&ctx.model, &y, lambda, &opts)?;
    let mut m = res.measure.clone();
    m.sort_by_position();
    output::write_solution(ctx.path("solution.csv"), &m)?;
    let pts = certificate_points(&ctx.model, ctx.cfg.seed, m.positions());
    output::write_certificate(ctx.path("certificate.csv"), &ctx.model, &res.certificate, &pts)?;
    println!(
        "k={} gap={} objective={} converged={}",
        m.len(),
        output::fmt(res.duality_gap),
        output::fmt(res.objective_value),
        res.converged
    );
    Ok(if res.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_dof(common: &CommonArgs, lambda: Option<f64>, measure: Option<&Path>) -> Result<i32> {
    let ctx = Context::new(common)?;
    let y = ctx.y(common.y.as_deref())?;
    let lambda = ctx.lambda(lambda)?;
    let (m, converged): (DiscreteMeasure, bool) = match measure {
        Some(p) => {
            let m = output::read_solution(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if !m.is_empty() && m.dim() != ctx.model.dim() {
                return Err(Error::Config(format!("{}: positions must have dimension {}", p.display(), ctx.model.dim())));
            }
            (m, true)
        }
        None => {
            let res = solve_blasso(&ctx.model, &y, lambda, &ctx.cfg.solver_options())?;
            (res.measure, res.converged)
        }
    };
    let r = dof_report(&ctx.model, &m, &y, lambda)?;
    output::write_dof_report(ctx.path("dof_report.csv"), &r)?;
    println!(
        "k={} P={} rank_gamma={} divergence={} support_class={}",
        r.k,
        r.p,
        r.rank_gamma,
        output::fmt(r.divergence),
        r.support_class
    );
    Ok(if converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn risk_plot(aggs: &[Aggregate]) -> Plot {
    let mut p = Plot::new("Risk estimates", "lambda", "mean over replicates", true);
    let col = |f: fn(&Aggregate) -> (f64, f64)| -> (Vec<(f64, f64)>, Vec<f64>) {
        aggs.iter().map(|a| ((a.lambda, f(a).0), f(a).1)).unzip()
    };
    for (label, f) in [
        ("MSE", (|a: &Aggregate| (a.mse.mean, a.mse.se)) as fn(&Aggregate) -> (f64, f64)),
        ("SURE", |a: &Aggregate| (a.sure.mean, a.sure.se)),
        ("SURE_param", |a: &Aggregate| (a.sure_param.mean, a.sure_param.se)),
    ] {
        let (pts, errs) = col(f);
        p.push(Series::new(label, pts).with_errors(errs));
    }
    p
}

fn dof_plot(aggs: &[Aggregate]) -> Plot {
    let mut p = Plot::new("Degrees of freedom", "lambda", "mean over replicates", true);
    let (pts, errs): (Vec<_>, Vec<_>) = aggs.iter().map(|a| ((a.lambda, a.divergence.mean), a.divergence.se)).unzip();
    p.push(Series::new("divergence", pts).with_errors(errs));
    let (pts, errs): (Vec<_>, Vec<_>) = aggs.iter().map(|a| ((a.lambda, a.p.mean), a.p.se)).unzip();
    p.push(Series::new("P = (d+1)k", pts).with_errors(errs));
    p
}

fn cmd_sweep(common: &CommonArgs) -> Result<i32> {
    let ctx = Context::new(common)?;
    if common.y.is_some() {
        log::warn!("--y is ignored by sweep: every replicate draws its own noise");
    }
    let cfg = ctx.cfg.sweep_config(ctx.workers)?;
    let out = run_sweep(&cfg)?;
    output::write_sweep(ctx.path("sweep.csv"), &out.records)?;
    output::write_aggregates(ctx.path("aggregates.csv"), &out.aggregates)?;
    risk_plot(&out.aggregates).save(ctx.path("sweep_risk.svg"))?;
    dof_plot(&out.aggregates).save(ctx.path("sweep_dof.svg"))?;
    let failures = out.failures();
    if failures > 0 {
        eprintln!("{failures} of {} records failed (non-convergence or singular M)", out.records.len());
    }
    println!("records={} failures={}", out.records.len(), failures);
    Ok(if failures == out.records.len() { EXIT_NOT_CONVERGED } else { EXIT_OK })
}

fn grid_plot(rows: &[GridCompareRow], lambdas: &[f64]) -> Plot {
    let mut p = Plot::new("Grid Lasso vs Blasso", "grid size p", "degrees of freedom", true);
    for &l in lambdas {
        let sel: Vec<&GridCompareRow> = rows.iter().filter(|r| r.lambda == l).collect();
        p.push(Series::new(format!("grid, lambda {}", output::fmt(l)), sel.iter().map(|r| (r.p as f64, r.grid_dof as f64)).collect()));
        p.push(
            Series::new(
                format!("blasso, lambda {}", output::fmt(l)),
                sel.iter().map(|r| (r.p as f64, r.blasso_divergence)).collect(),
            )
            .dashed(),
        );
    }
    p
}

fn cmd_grid_compare(common: &CommonArgs) -> Result<i32> {
    let ctx = Context::new(common)?;
    let grid = ctx.cfg.grid.clone().ok_or_else(|| Error::Config("missing [grid] section".into()))?;
    let y = ctx.y(common.y.as_deref())?;
    let mu = match &ctx.cfg.truth {
        Some(_) => Some(ctx.cfg.true_mean(&ctx.model)?),
        None => None,
    };
    let lambdas = if ctx.cfg.lambda_grid.is_empty() { vec![ctx.cfg.lambda()?] } else { ctx.cfg.lambda_grid.clone() };
    let gc = GridCompareConfig {
        model: ctx.model.clone(),
        y,
        mu,
        sigma: ctx.cfg.sigma,
        lambdas: lambdas.clone(),
        grid_sizes: grid.sizes.clone(),
        solver: ctx.cfg.solver_options(),
        tolerance: grid.tolerance,
    };
    let rows = ctx.in_pool(|| compare_grid_vs_continuous(&gc))??;
    output::write_grid_compare(ctx.path("grid_compare.csv"), &rows)?;
    grid_plot(&rows, &lambdas).save(ctx.path("grid_compare.svg"))?;
    println!("rows={}", rows.len());
    Ok(EXIT_OK)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve { common, lambda } => cmd_solve(common, *lambda),
        Command::Dof { common, lambda, measure } => cmd_dof(common, *lambda, measure.as_deref()),
        Command::Sweep { common } => cmd_sweep(common),
        Command::GridCompare { common } => cmd_grid_compare(common),
        Command::Selftest => Ok(if selftest::run_selftest() { EXIT_OK } else { EXIT_CONFIG }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
