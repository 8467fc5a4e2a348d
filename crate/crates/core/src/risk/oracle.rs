//! Independent divergence estimators used to validate the closed form:
//! coordinate-wise central differences and randomized probing.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{DiscreteMeasure, ForwardModel};
use crate::solver::{solve_blasso, solve_blasso_from, SolveResult, SolverOptions};

/// Default finite-difference step `1e-4 (1 + |y|)`.
pub fn default_fd_step(y: &DVector<f64>) -> f64 {
    1e-4 * (1.0 + y.norm())
}

/// `sum_i (mu_i(y + h e_i) - mu_i(y - h e_i)) / 2h` for an arbitrary estimator.
pub fn fd_divergence<F>(estimator: F, y: &DVector<f64>, h: f64) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let mut total = 0.0;
    for i in 0..y.len() {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[i] += h;
        ym[i] -= h;
        total += (estimator(&yp)?[i] - estimator(&ym)?[i]) / (2.0 * h);
    }
    Ok(total)
}

/// Mean and standard error of `<delta, mu(y + h delta) - mu(y)> / h` over Gaussian probes.
pub fn mc_divergence<F>(estimator: F, y: &DVector<f64>, h: f64, probes: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if probes == 0 {
        return Err(Error::InvalidArgument("at least one probe is required".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("probe step must be positive".into()));
    }
    let base = estimator(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(probes);
    for _ in 0..probes {
        let delta = DVector::from_fn(y.len(), |_, _| StandardNormal.sample(&mut rng));
        let moved = estimator(&(y + &delta * h))?;
        samples.push(delta.dot(&(moved - &base)) / h);
    }
    let mean = samples.iter().sum::<f64>() / probes as f64;
    let se = if probes > 1 {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (probes - 1) as f64;
        (var / probes as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, se))
}

/// Options for the inner solves of the oracles: tight gap, same seed.
pub fn oracle_solver_options(base: &SolverOptions) -> SolverOptions {
    SolverOptions {
        duality_gap_tolerance: base.duality_gap_tolerance.min(1e-13),
        ..base.clone()
    }
}

fn sign_counts(m: &DiscreteMeasure) -> (usize, usize) {
    let pos = m.amplitudes().iter().filter(|b| **b > 0.0).count();
    (pos, m.len() - pos)
}

/// Blasso fitted-value map warm-started from `base`.
///
/// A non-converged solve, or a solution whose spike count or sign pattern differs
/// from `base` (a jump to another solution branch), is an oracle failure.
pub fn blasso_estimator<'a>(
    model: &'a ForwardModel,
    lambda: f64,
    opts: &'a SolverOptions,
    base: &'a SolveResult,
) -> impl Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a {
    move |y: &DVector<f64>| {
        let res = solve_blasso_from(model, y, lambda, opts, &base.measure)?;
        if !res.converged {
            return Err(Error::OracleFailure(format!(
                "inner solve did not converge (gap {:e})",
                res.duality_gap
            )));
        }
        if sign_counts(&res.measure) != sign_counts(&base.measure) {
            return Err(Error::OracleFailure(format!(
                "solution branch changed: {} spikes instead of {}",
                res.measure.len(),
                base.measure.len()
            )));
        }
        model.apply(&res.measure)
    }
}

fn base_solve(model: &ForwardModel, y: &DVector<f64>, lambda: f64, opts: &SolverOptions) -> Result<SolveResult> {
    let res = solve_blasso(model, y, lambda, opts)?;
    if !res.converged {
        return Err(Error::OracleFailure(format!("base solve did not converge (gap {:e})", res.duality_gap)));
    }
    Ok(res)
}

/// Finite-difference divergence of the Blasso fitted value at `y` (`2n` warm-started solves).
pub fn finite_difference_divergence(
    model: &ForwardModel,
    y: &DVector<f64>,
    lambda: f64,
    h: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let opts = oracle_solver_options(opts);
    let base = base_solve(model, y, lambda, &opts)?;
    fd_divergence(blasso_estimator(model, lambda, &opts, &base), y, h)
}

/// Randomized-probe divergence of the Blasso fitted value at `y`.
pub fn monte_carlo_divergence(
    model: &ForwardModel,
    y: &DVector<f64>,
    lambda: f64,
    h: f64,
    probes: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    let opts = oracle_solver_options(opts);
    let base = base_solve(model, y, lambda, &opts)?;
    mc_divergence(blasso_estimator(model, lambda, &opts, &base), y, h, probes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn linear(a: DMatrix<f64>) -> impl Fn(&DVector<f64>) -> Result<DVector<f64>> {
        move |y: &DVector<f64>| Ok(&a * y)
    }

    fn test_matrix() -> DMatrix<f64> {
        DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5)
    }

    #[test]
    fn fd_exact_for_linear_maps() {
        let a = test_matrix();
        let y = DVector::from_fn(6, |i, _| i as f64);
        let est = fd_divergence(linear(a.clone()), &y, 0.1).unwrap();
        assert!((est - a.trace()).abs() < 1e-10);
    }

    #[test]
    fn mc_unbiased_for_linear_maps() {
        let a = test_matrix();
        let y = DVector::zeros(6);
        let (m1, se1) = mc_divergence(linear(a.clone()), &y, 1.0, 100, 1).unwrap();
        let (_, se2) = mc_divergence(linear(a.clone()), &y, 1.0, 1600, 1).unwrap();
        assert!((m1 - a.trace()).abs() < 4.0 * se1);
        // 16x the probes -> roughly a quarter of the standard error
        assert!(se2 < 0.5 * se1);
    }

    #[test]
    fn mc_deterministic_with_seed() {
        let a = test_matrix();
        let y = DVector::zeros(6);
        let r1 = mc_divergence(linear(a.clone()), &y, 1.0, 1, 9).unwrap();
        let r2 = mc_divergence(linear(a), &y, 1.0, 1, 9).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.1, 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let y = DVector::zeros(2);
        assert!(fd_divergence(linear(DMatrix::identity(2, 2)), &y, 0.0).is_err());
        assert!(mc_divergence(linear(DMatrix::identity(2, 2)), &y, 1.0, 0, 0).is_err());
    }
}
