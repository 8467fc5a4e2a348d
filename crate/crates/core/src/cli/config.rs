//! TOML run configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{build_fourier_model, build_relu_model, DiscreteMeasure, ForwardModel};
use crate::risk::{replicate_noise, OracleToggles, SweepConfig, Truth};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub truth: Option<TruthSection>,
    pub sigma: f64,
    /// Regularization for `solve` and `dof`; defaults to the first grid entry.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub oracles: OracleSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_replicates() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSection {
    Fourier {
        cutoff: usize,
    },
    Relu {
        n: usize,
        d: usize,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default)]
        radius: Option<f64>,
        /// Seed of the i.i.d. standard normal weights; defaults to the run seed.
        #[serde(default)]
        weights_seed: Option<u64>,
        /// Explicit `n` rows of length `d`, overriding the random draw.
        #[serde(default)]
        weights: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Position {
    Scalar(f64),
    Point(Vec<f64>),
}

impl Position {
    fn to_vector(&self) -> DVector<f64> {
        match self {
            Position::Scalar(x) => DVector::from_element(1, *x),
            Position::Point(v) => DVector::from_column_slice(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    #[serde(default)]
    pub positions: Option<Vec<Position>>,
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    #[serde(default)]
    pub random: Option<RandomTruth>,
}

/// Spikes with `N(0, position_std^2 I)` positions (uniform over the domain when
/// `position_std` is absent) and `N(0, amplitude_std^2)` amplitudes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTruth {
    pub spikes: usize,
    #[serde(default)]
    pub position_std: Option<f64>,
    #[serde(default = "default_amplitude_std")]
    pub amplitude_std: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_amplitude_std() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalDescentSection {
    pub max_steps: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub max_position_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_outer_iterations: Option<usize>,
    pub certificate_grid_size: Option<usize>,
    pub multistart_points: Option<usize>,
    pub newton_steps: Option<usize>,
    pub duality_gap_tolerance: Option<f64>,
    pub amplitude_prune_tolerance: Option<f64>,
    pub merge_tolerance: Option<f64>,
    pub insertion_exclusion: Option<f64>,
    #[serde(default)]
    pub local_descent: LocalDescentSection,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub finite_difference: bool,
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub monte_carlo_probes: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

macro_rules! set_if {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Config(format!("lambda must be positive, got {l}")));
            }
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("lambda_grid entries must be positive, got {l}")));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if let Some(g) = &self.grid {
            if g.sizes.is_empty() || g.sizes.contains(&0) {
                return Err(Error::Config("grid.sizes must be a non-empty list of positive sizes".into()));
            }
        }
        if let ModelSection::Relu { n, d, weights, .. } = &self.model {
            if *n == 0 || *d == 0 {
                return Err(Error::Config("model.n and model.d must be positive".into()));
            }
            if let Some(w) = weights {
                if w.len() != *n || w.iter().any(|r| r.len() != *d) {
                    return Err(Error::Config(format!("model.weights must be {n} rows of length {d}")));
                }
            }
        }
        if let Some(t) = &self.truth {
            let explicit = t.positions.is_some() || t.amplitudes.is_some();
            let forms = [explicit, t.mean.is_some(), t.random.is_some()].iter().filter(|b| **b).count();
            if forms != 1 {
                return Err(Error::Config(
                    "truth needs exactly one of positions/amplitudes, mean or random".into(),
                ));
            }
            if explicit && (t.positions.is_none() || t.amplitudes.is_none()) {
                return Err(Error::Config("truth.positions and truth.amplitudes must be given together".into()));
            }
        }
        self.solver_options().validate().map_err(|e| Error::Config(format!("solver: {e}")))
    }

    pub fn model(&self) -> Result<ForwardModel> {
        match &self.model {
            ModelSection::Fourier { cutoff } => Ok(build_fourier_model(*cutoff)),
            ModelSection::Relu { n, d, normalize, radius, weights_seed, weights } => {
                let a = match weights {
                    Some(rows) => DMatrix::from_fn(*n, *d, |i, j| rows[i][j]),
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(weights_seed.unwrap_or(self.seed));
                        DMatrix::from_fn(*n, *d, |_, _| StandardNormal.sample(&mut rng))
                    }
                };
                build_relu_model(a, *normalize, *radius).map_err(|e| Error::Config(format!("model: {e}")))
            }
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        let mut o = SolverOptions { seed: self.seed, ..SolverOptions::default() };
        set_if!(o.max_outer_iterations, s.max_outer_iterations);
        o.certificate_grid_size = s.certificate_grid_size.or(o.certificate_grid_size);
        set_if!(o.multistart_points, s.multistart_points);
        set_if!(o.newton_steps, s.newton_steps);
        set_if!(o.duality_gap_tolerance, s.duality_gap_tolerance);
        set_if!(o.amplitude_prune_tolerance, s.amplitude_prune_tolerance);
        set_if!(o.merge_tolerance, s.merge_tolerance);
        set_if!(o.insertion_exclusion, s.insertion_exclusion);
        set_if!(o.local_descent.max_steps, s.local_descent.max_steps);
        set_if!(o.local_descent.gradient_tolerance, s.local_descent.gradient_tolerance);
        set_if!(o.local_descent.max_position_step, s.local_descent.max_position_step);
        o
    }

    pub fn truth(&self, model: &ForwardModel) -> Result<Truth> {
        let t = self.truth.as_ref().ok_or_else(|| Error::Config("missing [truth] section".into()))?;
        if let Some(mu) = &t.mean {
            if mu.len() != model.n() {
                return Err(Error::Config(format!("truth.mean has {} entries, model has n = {}", mu.len(), model.n())));
            }
            return Ok(Truth::Mean(DVector::from_column_slice(mu)));
        }
        if let Some(r) = &t.random {
            return Ok(Truth::Measure(random_truth(model, r, self.seed)));
        }
        let positions: Vec<DVector<f64>> = t.positions.as_ref().unwrap().iter().map(Position::to_vector).collect();
        if positions.iter().any(|x| x.len() != model.dim()) {
            return Err(Error::Config(format!("truth.positions must have dimension {}", model.dim())));
        }
        let amplitudes = t.amplitudes.clone().unwrap();
        let m = DiscreteMeasure::new(positions, amplitudes).map_err(|e| Error::Config(format!("truth: {e}")))?;
        for x in m.positions() {
            model.domain().check(x).map_err(|e| Error::Config(format!("truth: {e}")))?;
        }
        Ok(Truth::Measure(m))
    }

    pub fn true_mean(&self, model: &ForwardModel) -> Result<DVector<f64>> {
        match self.truth(model)? {
            Truth::Mean(mu) => Ok(mu),
            Truth::Measure(m) => model.apply(&m),
        }
    }

    /// Observation `mu + sigma w` with the replicate-0 noise stream of the run seed.
    pub fn synthesize_y(&self, model: &ForwardModel) -> Result<DVector<f64>> {
        let mu = self.true_mean(model)?;
        Ok(mu + replicate_noise(self.seed, 0, model.n()) * self.sigma)
    }

    pub fn lambda(&self) -> Result<f64> {
        self.lambda
            .or_else(|| self.lambda_grid.first().copied())
            .ok_or_else(|| Error::Config("lambda is not set (give lambda or lambda_grid)".into()))
    }

    pub fn oracles(&self) -> OracleToggles {
        OracleToggles {
            finite_difference: self.oracles.finite_difference,
            fd_step: self.oracles.fd_step,
            monte_carlo_probes: self.oracles.monte_carlo_probes,
        }
    }

    pub fn sweep_config(&self, workers: Option<usize>) -> Result<SweepConfig> {
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda_grid is empty".into()));
        }
        let model = self.model()?;
        let truth = self.truth(&model)?;
        Ok(SweepConfig {
            model,
            truth,
            sigma: self.sigma,
            lambda_grid: self.lambda_grid.clone(),
            replicates: self.replicates,
            seed: self.seed,
            solver: self.solver_options(),
            oracles: self.oracles(),
            workers,
        })
    }
}

fn random_truth(model: &ForwardModel, r: &RandomTruth, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed.unwrap_or(seed));
    rng.set_stream(u64::MAX);
    let d = model.dim();
    let mut positions = Vec::with_capacity(r.spikes);
    for _ in 0..r.spikes {
        let mut x = match r.position_std {
            Some(s) => DVector::from_fn(d, |_, _| s * Distribution::<f64>::sample(&StandardNormal, &mut rng)),
            None => model.domain().sample(&mut rng),
        };
        model.canonicalize(&mut x);
        positions.push(x);
    }
    let amplitudes = (0..r.spikes).map(|_| r.amplitude_std * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    DiscreteMeasure::new(positions, amplitudes).expect("positions and amplitudes have matching lengths")
}
