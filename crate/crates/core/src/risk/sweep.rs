use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::oracle::{default_fd_step, finite_difference_divergence, monte_carlo_divergence};
use super::sure::{sure_param_value, sure_value};
use crate::dof::dof_report;
use crate::error::{Error, Result};
use crate::model::{DiscreteMeasure, ForwardModel};
use crate::solver::{solve_blasso, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Measure(DiscreteMeasure),
    Mean(DVector<f64>),
}

/// Optional per-record oracle evaluations (expensive: `2n` or `probes` extra solves).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleToggles {
    pub finite_difference: bool,
    /// Relative FD step; `None` uses `1e-4`.
    pub fd_step: Option<f64>,
    /// Number of Monte-Carlo probes; 0 disables.
    pub monte_carlo_probes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: ForwardModel,
    pub truth: Truth,
    pub sigma: f64,
    pub lambda_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub oracles: OracleToggles,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidArgument("lambda_grid is empty".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_grid entries must be positive, got {l}")));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        self.solver.validate()?;
        let n = self.model.n();
        match &self.truth {
            Truth::Mean(mu) if mu.len() != n => Err(Error::DimensionMismatch { expected: n, got: mu.len() }),
            Truth::Measure(m) if m.dim() != self.model.dim() => {
                Err(Error::DimensionMismatch { expected: self.model.dim(), got: m.dim() })
            }
            _ => Ok(()),
        }
    }

    pub fn true_mean(&self) -> Result<DVector<f64>> {
        match &self.truth {
            Truth::Mean(mu) => Ok(mu.clone()),
            Truth::Measure(m) => self.model.apply(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub lambda_index: usize,
    pub lambda: f64,
    pub replicate: usize,
    pub mse: f64,
    pub sure: f64,
    pub sure_param: f64,
    pub k: usize,
    pub divergence: f64,
    pub p: usize,
    pub converged: bool,
    pub fd_divergence: Option<f64>,
    pub mc_divergence: Option<f64>,
    pub mc_standard_error: Option<f64>,
}

/// Sample mean, sample standard deviation and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, se: std / (n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub lambda: f64,
    pub count: usize,
    pub failures: usize,
    pub mse: Summary,
    pub sure: Summary,
    pub sure_param: Summary,
    pub divergence: Summary,
    pub k: Summary,
    pub p: Summary,
}

impl Aggregate {
    /// `sqrt(var(a)/K + var(b)/K)` for two summarized columns.
    pub fn combined_se(a: &Summary, b: &Summary) -> f64 {
        (a.se * a.se + b.se * b.se).sqrt()
    }

    /// `|mean SURE - mean MSE| <= 2 * combined standard error`.
    pub fn sure_consistent(&self) -> bool {
        (self.sure.mean - self.mse.mean).abs() <= 2.0 * Self::combined_se(&self.sure, &self.mse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepOutput {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.converged).count()
    }
}

/// Noise for one replicate: a dedicated ChaCha stream, so every lambda sees the same draw.
pub fn replicate_noise(seed: u64, replicate: usize, n: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

fn failed(lambda_index: usize, lambda: f64, replicate: usize) -> SweepRecord {
    SweepRecord {
        lambda_index,
        lambda,
        replicate,
        mse: f64::NAN,
        sure: f64::NAN,
        sure_param: f64::NAN,
        k: 0,
        divergence: f64::NAN,
        p: 0,
        converged: false,
        fd_divergence: None,
        mc_divergence: None,
        mc_standard_error: None,
    }
}

/// One (lambda, replicate) work item.
pub fn run_replicate(
    config: &SweepConfig,
    mu: &DVector<f64>,
    lambda_index: usize,
    replicate: usize,
) -> Result<SweepRecord> {
    let lambda = config.lambda_grid[lambda_index];
    let n = mu.len();
    let y = mu + replicate_noise(config.seed, replicate, n) * config.sigma;
    let res = solve_blasso(&config.model, &y, lambda, &config.solver)?;
    if !res.converged {
        log::warn!("lambda {lambda} replicate {replicate}: solver did not converge (gap {:e})", res.duality_gap);
        return Ok(failed(lambda_index, lambda, replicate));
    }
    let report = match dof_report(&config.model, &res.measure, &y, lambda) {
        Ok(r) => r,
        Err(e @ (Error::SingularM { .. } | Error::DegenerateCertificate(_))) => {
            log::warn!("lambda {lambda} replicate {replicate}: {e}");
            return Ok(failed(lambda_index, lambda, replicate));
        }
        Err(e) => return Err(e),
    };
    let mu_hat = config.model.apply(&report.measure)?;
    let sigma = config.sigma;
    let d = config.model.dim();
    let oracles = &config.oracles;
    let fd = if oracles.finite_difference {
        let h = oracles.fd_step.map_or_else(|| default_fd_step(&y), |s| s * (1.0 + y.norm()));
        finite_difference_divergence(&config.model, &y, lambda, h, &config.solver)
            .map_err(|e| log::warn!("lambda {lambda} replicate {replicate}: {e}"))
            .ok()
    } else {
        None
    };
    let mc = if oracles.monte_carlo_probes > 0 {
        let h = oracles.fd_step.map_or_else(|| default_fd_step(&y), |s| s * (1.0 + y.norm()));
        let probe_seed = config.seed ^ ((lambda_index as u64) << 32 | replicate as u64);
        monte_carlo_divergence(&config.model, &y, lambda, h, oracles.monte_carlo_probes, probe_seed, &config.solver)
            .map_err(|e| log::warn!("lambda {lambda} replicate {replicate}: {e}"))
            .ok()
    } else {
        None
    };
    Ok(SweepRecord {
        lambda_index,
        lambda,
        replicate,
        mse: (mu - &mu_hat).norm_squared(),
        sure: sure_value(&y, &mu_hat, report.divergence, sigma),
        sure_param: sure_param_value(&y, &mu_hat, report.k, d, sigma),
        k: report.k,
        divergence: report.divergence,
        p: report.p,
        converged: true,
        fd_divergence: fd,
        mc_divergence: mc.map(|m| m.0),
        mc_standard_error: mc.map(|m| m.1),
    })
}

/// Per-lambda summaries over converged records.
pub fn aggregate(lambda_grid: &[f64], records: &[SweepRecord]) -> Vec<Aggregate> {
    lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let rows: Vec<&SweepRecord> = records.iter().filter(|r| r.lambda_index == i).collect();
            let ok: Vec<&&SweepRecord> = rows.iter().filter(|r| r.converged).collect();
            let col = |f: fn(&SweepRecord) -> f64| Summary::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            Aggregate {
                lambda,
                count: ok.len(),
                failures: rows.len() - ok.len(),
                mse: col(|r| r.mse),
                sure: col(|r| r.sure),
                sure_param: col(|r| r.sure_param),
                divergence: col(|r| r.divergence),
                k: col(|r| r.k as f64),
                p: col(|r| r.p as f64),
            }
        })
        .collect()
}

/// Runs every (lambda, replicate) pair in parallel; records come back ordered by
/// (lambda index, replicate) regardless of scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    let mu = config.true_mean()?;
    let jobs: Vec<(usize, usize)> = (0..config.lambda_grid.len())
        .flat_map(|i| (0..config.replicates).map(move |r| (i, r)))
        .collect();
    let work = || -> Result<Vec<SweepRecord>> {
        jobs.par_iter().map(|&(i, r)| run_replicate(config, &mu, i, r)).collect()
    };
    let records = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let aggregates = aggregate(&config.lambda_grid, &records);
    Ok(SweepOutput { records, aggregates })
}
