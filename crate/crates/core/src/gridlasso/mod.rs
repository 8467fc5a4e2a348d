//! Lasso on a fixed uniform grid of positions, the discretized counterpart of the
//! Blasso. Its degrees of freedom are the support size of the coefficient vector.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dof::dof_report;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DomainSpec, ForwardModel};
use crate::risk::sure_value;
use crate::solver::{kkt_residual, solve_blasso, solve_penalized, Penalty, SolverOptions};

/// Default KKT tolerance of [`solve_grid_lasso`].
pub const GRID_LASSO_TOLERANCE: f64 = 1e-10;
const GRID_LASSO_MAX_ITER: usize = 500_000;

/// Sorted, distinct nodes of a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    nodes: Vec<DVector<f64>>,
}

impl GridSpec {
    /// `p` nodes spread uniformly over a 1-D domain (torus: `i / p`; interval: both ends included),
    /// or a tensor grid with `p^(1/d)` nodes per axis.
    pub fn uniform(domain: &DomainSpec, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("grid size must be at least 1".into()));
        }
        let d = domain.dim();
        let per_axis = (p as f64).powf(1.0 / d as f64).round() as usize;
        if per_axis.pow(d as u32) != p {
            return Err(Error::InvalidArgument(format!("grid size {p} is not a perfect power of dimension {d}")));
        }
        Ok(Self { nodes: domain.grid(per_axis) })
    }

    pub fn from_nodes(nodes: Vec<DVector<f64>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("grid has no nodes".into()));
        }
        Ok(Self { nodes })
    }

    pub fn p(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridLassoSolution {
    pub beta: DVector<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
}

impl GridLassoSolution {
    pub fn dof(&self) -> usize {
        grid_lasso_dof(&self.beta, None)
    }
}

/// `argmin_beta 1/2 |X beta - y|^2 + lambda |beta|_1` with `X = [phi(x_1) .. phi(x_p)]`,
/// solved to KKT residual `tol` (default [`GRID_LASSO_TOLERANCE`]).
pub fn solve_grid_lasso(
    model: &ForwardModel,
    grid: &GridSpec,
    y: &DVector<f64>,
    lambda: f64,
    tol: Option<f64>,
) -> Result<GridLassoSolution> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if y.len() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: y.len() });
    }
    let x = model.design(grid.nodes())?;
    Ok(solve_design_lasso(&x, y, lambda, tol.unwrap_or(GRID_LASSO_TOLERANCE)))
}

/// Lasso on an explicit design matrix: homotopy path from `lambda_max` down to
/// `lambda`, with a proximal-gradient fallback when the path breaks down.
pub fn solve_design_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, tol: f64) -> GridLassoSolution {
    let pen = Penalty::L1(lambda);
    let path = lasso_homotopy(x, y, lambda);
    let (beta, converged) = match path {
        Some(b) if kkt_residual(x, y, &b, pen) <= tol => (b, true),
        warm => {
            log::debug!("homotopy did not reach the KKT target, refining");
            solve_penalized(x, y, pen, warm.as_ref(), tol, GRID_LASSO_MAX_ITER)
        }
    };
    if !converged {
        log::warn!("grid lasso stopped before reaching KKT residual {tol:e}");
    }
    GridLassoSolution { kkt_residual: kkt_residual(x, y, &beta, pen), beta, converged }
}

/// Lasso homotopy (LARS with the lasso modification). Returns `None` if the
/// active Gram matrix becomes singular before `lambda` is reached.
fn lasso_homotopy(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut active: Vec<usize> = Vec::new();
    let mut corr = x.transpose() * y;
    let mut level = corr.amax();
    if level <= lambda {
        return Some(beta);
    }
    let mut blocked: Option<usize> = None;
    active.push(corr.iamax());
    for _ in 0..(50 * p.max(x.nrows())) {
        let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| corr[j].signum()));
        let xa = x.select_columns(&active);
        let dir = (xa.transpose() * &xa).cholesky()?.solve(&signs);
        let a = x.transpose() * (&xa * &dir);
        let mut gamma = level - lambda;
        let mut event: Option<(usize, bool)> = None;
        for j in 0..p {
            if active.contains(&j) || blocked == Some(j) {
                continue;
            }
            for g in [(level - corr[j]) / (1.0 - a[j]), (level + corr[j]) / (1.0 + a[j])] {
                if g > 1e-14 * level && g < gamma {
                    gamma = g;
                    event = Some((j, true));
                }
            }
        }
        for (i, &j) in active.iter().enumerate() {
            let g = -beta[j] / dir[i];
            if g > 1e-14 * level && g < gamma {
                gamma = g;
                event = Some((j, false));
            }
        }
        for (i, &j) in active.iter().enumerate() {
            beta[j] += gamma * dir[i];
        }
        level -= gamma;
        corr = x.transpose() * (y - x * &beta);
        blocked = None;
        match event {
            None => break,
            Some((j, true)) => active.push(j),
            Some((j, false)) => {
                beta[j] = 0.0;
                active.retain(|&i| i != j);
                blocked = Some(j);
            }
        }
        if active.is_empty() {
            return None;
        }
    }
    if level > lambda * (1.0 + 1e-12) {
        return None;
    }
    // exact stationarity on the final sign pattern
    let xa = x.select_columns(&active);
    let rhs = DVector::from_iterator(
        active.len(),
        active.iter().map(|&j| x.column(j).dot(y) - lambda * beta[j].signum()),
    );
    let sol = (xa.transpose() * &xa).cholesky()?.solve(&rhs);
    for (i, &j) in active.iter().enumerate() {
        if sol[i].signum() != beta[j].signum() {
            return Some(beta);
        }
    }
    for (i, &j) in active.iter().enumerate() {
        beta[j] = sol[i];
    }
    Some(beta)
}

/// Number of coefficients with `|beta_i| > tol`; `tol` defaults to `1e-8 |beta|_inf`.
pub fn grid_lasso_dof(beta: &DVector<f64>, tol: Option<f64>) -> usize {
    let bmax = beta.amax();
    if bmax == 0.0 {
        return 0;
    }
    let tol = tol.unwrap_or(1e-8 * bmax);
    beta.iter().filter(|b| b.abs() > tol).count()
}

/// True when the design restricted to the support of `beta` is rank deficient,
/// in which case the support size need not be the divergence.
pub fn support_is_degenerate(model: &ForwardModel, grid: &GridSpec, beta: &DVector<f64>) -> Result<bool> {
    let tol = 1e-8 * beta.amax();
    let support: Vec<DVector<f64>> =
        grid.nodes().iter().zip(beta.iter()).filter(|(_, b)| b.abs() > tol).map(|(x, _)| x.clone()).collect();
    if support.is_empty() {
        return Ok(false);
    }
    let xs = model.design(&support)?;
    Ok(linalg::rank(&xs, linalg::RANK_TOLERANCE) < support.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCompareConfig {
    pub model: ForwardModel,
    pub y: DVector<f64>,
    /// True mean, for the MSE columns.
    pub mu: Option<DVector<f64>>,
    pub sigma: f64,
    pub lambdas: Vec<f64>,
    pub grid_sizes: Vec<usize>,
    pub solver: SolverOptions,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCompareRow {
    pub p: usize,
    pub lambda: f64,
    pub grid_dof: usize,
    pub grid_sure: f64,
    pub grid_mse: Option<f64>,
    pub grid_degenerate: bool,
    pub blasso_k: usize,
    /// `NaN` when the closed form is unavailable (singular `M`).
    pub blasso_divergence: f64,
    pub blasso_sure: f64,
    pub blasso_mse: Option<f64>,
}

struct BlassoSide {
    k: usize,
    divergence: f64,
    sure: f64,
    mse: Option<f64>,
}

fn blasso_side(cfg: &GridCompareConfig, lambda: f64) -> Result<BlassoSide> {
    let res = solve_blasso(&cfg.model, &cfg.y, lambda, &cfg.solver)?;
    if !res.converged {
        log::warn!("blasso at lambda {lambda} did not reach the gap target ({:e})", res.duality_gap);
    }
    let (k, divergence, fitted) = match dof_report(&cfg.model, &res.measure, &cfg.y, lambda) {
        Ok(r) => (r.k, r.divergence, cfg.model.apply(&r.measure)?),
        Err(e @ Error::SingularM { .. }) => {
            log::warn!("lambda {lambda}: {e}");
            (res.measure.len(), f64::NAN, cfg.model.apply(&res.measure)?)
        }
        Err(e) => return Err(e),
    };
    Ok(BlassoSide {
        k,
        divergence,
        sure: sure_value(&cfg.y, &fitted, divergence, cfg.sigma),
        mse: cfg.mu.as_ref().map(|mu| (mu - &fitted).norm_squared()),
    })
}

/// One row per (grid size, lambda), ordered by grid size then lambda. The Blasso
/// columns do not depend on the grid and are computed once per lambda.
pub fn compare_grid_vs_continuous(cfg: &GridCompareConfig) -> Result<Vec<GridCompareRow>> {
    if cfg.model.dim() != 1 {
        return Err(Error::InvalidArgument("grid comparison needs a 1-D model".into()));
    }
    if !(cfg.sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", cfg.sigma)));
    }
    if cfg.y.len() != cfg.model.n() {
        return Err(Error::DimensionMismatch { expected: cfg.model.n(), got: cfg.y.len() });
    }
    let blasso: Vec<BlassoSide> = cfg.lambdas.par_iter().map(|&l| blasso_side(cfg, l)).collect::<Result<_>>()?;
    let grids: Vec<(GridSpec, DMatrix<f64>)> = cfg
        .grid_sizes
        .iter()
        .map(|&p| {
            let g = GridSpec::uniform(cfg.model.domain(), p)?;
            let x = cfg.model.design(g.nodes())?;
            Ok((g, x))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..grids.len()).flat_map(|g| (0..cfg.lambdas.len()).map(move |l| (g, l))).collect();
    let tol = cfg.tolerance.unwrap_or(GRID_LASSO_TOLERANCE);
    jobs.par_iter()
        .map(|&(gi, li)| {
            let (grid, x) = &grids[gi];
            let lambda = cfg.lambdas[li];
            let sol = solve_design_lasso(x, &cfg.y, lambda, tol);
            let fitted = x * &sol.beta;
            let dof = sol.dof();
            let b = &blasso[li];
            Ok(GridCompareRow {
                p: grid.p(),
                lambda,
                grid_dof: dof,
                grid_sure: sure_value(&cfg.y, &fitted, dof as f64, cfg.sigma),
                grid_mse: cfg.mu.as_ref().map(|mu| (mu - &fitted).norm_squared()),
                grid_degenerate: support_is_degenerate(&cfg.model, grid, &sol.beta)?,
                blasso_k: b.k,
                blasso_divergence: b.divergence,
                blasso_sure: b.sure,
                blasso_mse: b.mse,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fourier_model, DiscreteMeasure};
    use crate::risk::fd_divergence;
    use crate::solver::soft_threshold;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Cyclic coordinate descent, an independent solver for cross-checking.
    fn coordinate_descent(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let p = x.ncols();
        let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
        let mut beta = DVector::zeros(p);
        let mut r = y.clone();
        for _ in 0..200_000 {
            let mut delta = 0.0f64;
            for j in 0..p {
                if norms[j] == 0.0 {
                    continue;
                }
                let old = beta[j];
                let rho = x.column(j).dot(&r) + norms[j] * old;
                let new = soft_threshold(rho, lambda) / norms[j];
                if new != old {
                    r.axpy(old - new, &x.column(j), 1.0);
                    beta[j] = new;
                    delta = delta.max((new - old).abs());
                }
            }
            if delta < 1e-15 {
                break;
            }
        }
        beta
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        (x, y)
    }

    #[test]
    fn uniform_grid_shapes() {
        let model = build_fourier_model(3);
        let g = GridSpec::uniform(model.domain(), 8).unwrap();
        assert_eq!(g.p(), 8);
        assert!(g.nodes().windows(2).all(|w| w[0][0] < w[1][0]));
        assert!(GridSpec::uniform(model.domain(), 0).is_err());
        let box2 = DomainSpec::cube(2, 1.0).unwrap();
        assert_eq!(GridSpec::uniform(&box2, 9).unwrap().p(), 9);
        assert!(GridSpec::uniform(&box2, 8).is_err());
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = random_design(&mut rng, 10, 30);
        let lmax = (x.transpose() * &y).amax();
        let sol = solve_design_lasso(&x, &y, lmax * 1.0001, GRID_LASSO_TOLERANCE);
        assert_eq!(sol.beta.amax(), 0.0);
        assert_eq!(sol.dof(), 0);
    }

    #[test]
    fn single_column_is_soft_threshold() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let y = DVector::from_vec(vec![2.0, 1.0, 0.5]);
        let lam = 0.7;
        let sol = solve_design_lasso(&x, &y, lam, 1e-12);
        let expected = soft_threshold(x.column(0).dot(&y), lam) / x.column(0).norm_squared();
        assert!((sol.beta[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_coordinate_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..10 {
            let (n, p) = if trial % 2 == 0 { (15, 40) } else { (30, 10) };
            let (x, y) = random_design(&mut rng, n, p);
            let lam = 0.1 * (x.transpose() * &y).amax() * (1.0 + rng.random::<f64>());
            let sol = solve_design_lasso(&x, &y, lam, GRID_LASSO_TOLERANCE);
            assert!(sol.converged);
            let cd = coordinate_descent(&x, &y, lam);
            assert!((&x * &sol.beta - &x * &cd).norm() < 1e-8, "trial {trial}");
        }
    }

    #[test]
    fn dof_counts_support() {
        assert_eq!(grid_lasso_dof(&DVector::zeros(4), None), 0);
        let b = DVector::from_vec(vec![0.0, 1.0, -2.0, 1e-12]);
        assert_eq!(grid_lasso_dof(&b, None), 2);
        assert_eq!(grid_lasso_dof(&b, Some(1.5)), 1);
    }

    #[test]
    fn dof_matches_finite_difference_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = random_design(&mut rng, 20, 8);
        let lam = 0.3 * (x.transpose() * &y).amax();
        let sol = solve_design_lasso(&x, &y, lam, 1e-13);
        let est = |v: &DVector<f64>| Ok(&x * solve_design_lasso(&x, v, lam, 1e-13).beta);
        let fd = fd_divergence(est, &y, 1e-6).unwrap();
        assert!((fd - sol.dof() as f64).abs() < 1e-2, "fd {fd} dof {}", sol.dof());
    }

    #[test]
    fn grid_beats_rounded_blasso() {
        let model = build_fourier_model(6);
        let truth = DiscreteMeasure::from_1d(&[0.13, 0.58], &[1.0, -1.2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = model.apply(&truth).unwrap() + DVector::from_fn(13, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let lam = 0.2;
        let grid = GridSpec::uniform(model.domain(), 64).unwrap();
        let sol = solve_grid_lasso(&model, &grid, &y, lam, None).unwrap();
        let x = model.design(grid.nodes()).unwrap();
        let grid_obj = 0.5 * (&x * &sol.beta - &y).norm_squared() + lam * sol.beta.lp_norm(1);
        let blasso = solve_blasso(&model, &y, lam, &SolverOptions::default()).unwrap();
        let mut rounded = DVector::zeros(64);
        for (pos, b) in blasso.measure.positions().iter().zip(blasso.measure.amplitudes()) {
            let idx = ((pos[0] * 64.0).round() as usize) % 64;
            rounded[idx] += b;
        }
        let rounded_obj = 0.5 * (&x * &rounded - &y).norm_squared() + lam * rounded.lp_norm(1);
        assert!(grid_obj <= rounded_obj + 1e-12);
        assert!(grid_obj >= blasso.objective_value - 1e-9);
    }

    #[test]
    fn aligned_grid_contains_blasso_support() {
        // a grid through the Blasso spikes: the grid Lasso recovers the Blasso fit,
        // with support size k while the continuous divergence also counts positions
        let model = build_fourier_model(6);
        let truth = DiscreteMeasure::from_1d(&[0.125, 0.625], &[1.0, -1.2]).unwrap();
        let y = model.apply(&truth).unwrap();
        let lam = 0.3;
        let blasso = solve_blasso(&model, &y, lam, &SolverOptions::default()).unwrap();
        let fitted = model.apply(&blasso.measure).unwrap();
        for p in [8, 32, 128] {
            let mut nodes: Vec<DVector<f64>> =
                (0..p).map(|i| DVector::from_element(1, (i as f64 + 0.37) / p as f64)).collect();
            nodes.extend(blasso.measure.positions().iter().cloned());
            let grid = GridSpec::from_nodes(nodes).unwrap();
            let sol = solve_grid_lasso(&model, &grid, &y, lam, None).unwrap();
            let x = model.design(grid.nodes()).unwrap();
            let err = (&x * &sol.beta - &fitted).norm();
            assert!(err < 1e-6, "p {p}: {err:e}");
            assert_eq!(sol.dof(), blasso.measure.len());
        }
        let div = dof_report(&model, &blasso.measure, &y, lam).unwrap().divergence;
        assert!(div > blasso.measure.len() as f64);
    }

    #[test]
    fn comparison_table_shape() {
        let model = build_fourier_model(4);
        let truth = DiscreteMeasure::from_1d(&[0.2, 0.7], &[1.0, -1.5]).unwrap();
        let mu = model.apply(&truth).unwrap();
        let cfg = GridCompareConfig {
            model,
            y: mu.clone(),
            mu: Some(mu),
            sigma: 0.01,
            lambdas: vec![0.5, 1.0],
            grid_sizes: vec![1, 16, 64],
            solver: SolverOptions::default(),
            tolerance: None,
        };
        let rows = compare_grid_vs_continuous(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].p, 1);
        assert!(rows[0].grid_dof <= 1);
        for r in &rows {
            assert!(r.grid_dof <= 9.min(r.p));
        }
        // blasso columns are grid independent
        assert_eq!(rows[1].blasso_divergence, rows[5].blasso_divergence);
    }
}
