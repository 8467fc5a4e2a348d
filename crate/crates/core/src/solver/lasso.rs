//! Finite-dimensional Lasso / nonnegative least squares on a fixed design:
//! accelerated proximal gradient with periodic active-set polishing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pinv, RANK_TOLERANCE};
use crate::model::{DiscreteMeasure, ForwardModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// `lambda |beta|_1`
    L1(f64),
    /// indicator of `beta >= 0`
    NonNegative,
}

impl Penalty {
    fn prox(&self, v: f64, step: f64) -> f64 {
        match *self {
            Penalty::L1(lam) => soft_threshold(v, lam * step),
            Penalty::NonNegative => v.max(0.0),
        }
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        match *self {
            Penalty::L1(lam) => lam * beta.lp_norm(1),
            Penalty::NonNegative => 0.0,
        }
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) fn objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, pen: Penalty) -> f64 {
    0.5 * (x * beta - y).norm_squared() + pen.value(beta)
}

/// Largest violation of the optimality conditions, with `c = X^T (y - X beta)`.
pub fn kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, pen: Penalty) -> f64 {
    let c = x.transpose() * (y - x * beta);
    let mut worst = 0.0f64;
    for (ci, bi) in c.iter().zip(beta.iter()) {
        let v = match pen {
            Penalty::L1(lam) => {
                if *bi != 0.0 {
                    (ci - lam * bi.signum()).abs()
                } else {
                    (ci.abs() - lam).max(0.0)
                }
            }
            Penalty::NonNegative => {
                if *bi > 0.0 {
                    ci.abs()
                } else {
                    ci.max(0.0)
                }
            }
        };
        worst = worst.max(v);
    }
    worst
}

fn lipschitz(x: &DMatrix<f64>) -> f64 {
    // power iteration on X^T X
    let k = x.ncols();
    let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..200 {
        let w = x.transpose() * (x * &v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw;
        v = w / nw;
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Solves `min 1/2 |X beta - y|^2 + pen(beta)` to `kkt_residual <= tol`.
/// Returns the solution and whether the tolerance was reached.
pub fn solve_penalized(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    pen: Penalty,
    warm: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> (DVector<f64>, bool) {
    let k = x.ncols();
    if k == 0 {
        return (DVector::zeros(0), true);
    }
    let l = lipschitz(x) * (1.0 + 1e-9);
    if l == 0.0 {
        return (DVector::zeros(k), true);
    }
    let step = 1.0 / l;
    let mut beta = warm.cloned().unwrap_or_else(|| DVector::zeros(k));
    for b in beta.iter_mut() {
        *b = pen.prox(*b, 0.0);
    }
    if kkt_residual(x, y, &beta, pen) <= tol {
        return (beta, true);
    }
    let xty = x.transpose() * y;
    // the Gram matrix only pays off when it is smaller than the design
    let gram = (k <= x.nrows()).then(|| x.transpose() * x);
    let mut z = beta.clone();
    let mut t = 1.0f64;
    let mut fprev = objective(x, y, &beta, pen);
    let polish_every = 25;
    for it in 1..=max_iter {
        let grad = match &gram {
            Some(g) => g * &z - &xty,
            None => x.transpose() * (x * &z) - &xty,
        };
        let mut next = &z - grad * step;
        for v in next.iter_mut() {
            *v = pen.prox(*v, step);
        }
        let fnext = objective(x, y, &next, pen);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if fnext > fprev {
            // adaptive restart
            z = beta.clone();
            t = 1.0;
            continue;
        }
        z = &next + (&next - &beta) * ((t - 1.0) / tn);
        t = tn;
        beta = next;
        fprev = fnext;
        if it % polish_every == 0 {
            if let Some(b) = active_set_polish(x, &xty, &beta, pen) {
                let fb = objective(x, y, &b, pen);
                if fb <= fprev {
                    beta = b;
                    fprev = fb;
                    z = beta.clone();
                    t = 1.0;
                }
            }
            if kkt_residual(x, y, &beta, pen) <= tol {
                return (beta, true);
            }
        }
    }
    let ok = kkt_residual(x, y, &beta, pen) <= tol;
    (beta, ok)
}

/// Solves the smooth problem restricted to the current sign pattern. If the
/// restricted minimizer keeps the signs it is returned; otherwise the segment
/// towards it is followed until the first coefficient reaches zero.
fn active_set_polish(x: &DMatrix<f64>, xty: &DVector<f64>, beta: &DVector<f64>, pen: Penalty) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let s = support.len();
    let xs = x.select_columns(&support);
    let g = xs.transpose() * xs;
    let rhs = DVector::from_fn(s, |a, _| match pen {
        Penalty::L1(lam) => xty[support[a]] - lam * beta[support[a]].signum(),
        Penalty::NonNegative => xty[support[a]],
    });
    let sol = g.cholesky()?.solve(&rhs);
    let mut t_max = 1.0f64;
    for (a, &i) in support.iter().enumerate() {
        let (b0, b1) = (beta[i], sol[a]);
        if b1.signum() != b0.signum() {
            t_max = t_max.min(b0 / (b0 - b1));
        }
    }
    let mut out = beta.clone();
    for (a, &i) in support.iter().enumerate() {
        let v = beta[i] + t_max * (sol[a] - beta[i]);
        out[i] = if v.signum() == beta[i].signum() { v } else { 0.0 };
    }
    if t_max < 1.0 {
        // snap the coefficient(s) that hit zero
        for (a, &i) in support.iter().enumerate() {
            let v = beta[i] + t_max * (sol[a] - beta[i]);
            if v.abs() <= 1e-14 * beta[i].abs().max(1.0) {
                out[i] = 0.0;
            }
        }
    }
    Some(out)
}

pub(crate) const LASSO_KKT_TOLERANCE: f64 = 1e-10;

/// Lasso amplitudes on fixed positions: `argmin 1/2 |Phi_X beta - y|^2 + lambda |beta|_1`.
pub fn lasso_on_support(
    model: &ForwardModel,
    positions: &[DVector<f64>],
    y: &DVector<f64>,
    lambda: f64,
) -> Result<Vec<f64>> {
    lasso_on_support_warm(model, positions, y, lambda, None)
}

pub fn lasso_on_support_warm(
    model: &ForwardModel,
    positions: &[DVector<f64>],
    y: &DVector<f64>,
    lambda: f64,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let x = model.design(positions)?;
    let warm = warm.map(DVector::from_column_slice);
    let tol = LASSO_KKT_TOLERANCE * (1.0 + lambda);
    let (beta, _) = solve_penalized(&x, y, Penalty::L1(lambda), warm.as_ref(), tol, 200_000);
    Ok(beta.iter().copied().collect())
}

/// Nonnegative least squares amplitudes on fixed positions.
pub fn nnls_on_support(
    model: &ForwardModel,
    positions: &[DVector<f64>],
    y: &DVector<f64>,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let x = model.design(positions)?;
    let warm = warm.map(DVector::from_column_slice);
    let tol = LASSO_KKT_TOLERANCE * (1.0 + y.norm());
    let (beta, _) = solve_penalized(&x, y, Penalty::NonNegative, warm.as_ref(), tol, 200_000);
    Ok(beta.iter().copied().collect())
}

/// Amplitudes `Phi_E^+ (y - (Phi_E^*)^+ lambda s)` on an extended support `E` with signs `s`.
pub fn closed_form_on_extended_support(
    model: &ForwardModel,
    positions: &[DVector<f64>],
    y: &DVector<f64>,
    lambda: f64,
    signs: &[f64],
) -> Result<Vec<f64>> {
    if positions.len() != signs.len() {
        return Err(Error::DimensionMismatch { expected: positions.len(), got: signs.len() });
    }
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let phi = model.design(positions)?;
    let s = DVector::from_column_slice(signs) * lambda;
    let adj_pinv = pinv(&phi.transpose(), RANK_TOLERANCE);
    let beta = pinv(&phi, RANK_TOLERANCE) * (y - adj_pinv * s);
    Ok(beta.iter().copied().collect())
}

/// Objective `1/2 |Phi m - y|^2 + lambda |m|_TV`.
pub fn blasso_objective(model: &ForwardModel, measure: &DiscreteMeasure, y: &DVector<f64>, lambda: f64) -> Result<f64> {
    Ok(0.5 * (model.apply(measure)? - y).norm_squared() + lambda * measure.tv_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_fourier_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Cyclic coordinate descent, an independent solver used only as a test oracle.
    fn coordinate_descent(x: &DMatrix<f64>, y: &DVector<f64>, lam: f64, sweeps: usize) -> DVector<f64> {
        let k = x.ncols();
        let mut beta = DVector::zeros(k);
        let mut r = y.clone();
        let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm_squared()).collect();
        for _ in 0..sweeps {
            for j in 0..k {
                let old = beta[j];
                let rho = x.column(j).dot(&r) + norms[j] * old;
                let new = soft_threshold(rho, lam) / norms[j];
                if new != old {
                    r.axpy(old - new, &x.column(j).into_owned(), 1.0);
                    beta[j] = new;
                }
            }
        }
        beta
    }

    #[test]
    fn empty_support() {
        let model = build_fourier_model(3);
        assert!(lasso_on_support(&model, &[], &DVector::zeros(7), 0.1).unwrap().is_empty());
        assert!(closed_form_on_extended_support(&model, &[], &DVector::zeros(7), 0.1, &[]).unwrap().is_empty());
    }

    #[test]
    fn single_position_closed_form() {
        let model = build_fourier_model(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DVector::from_fn(9, |_, _| rng.sample(StandardNormal));
        let x = DVector::from_element(1, 0.23);
        let phi = model.feature(&x).unwrap();
        let c = phi.dot(&y);
        let lam = 0.5 * c.abs();
        let beta = lasso_on_support(&model, &[x], &y, lam).unwrap();
        let expected = soft_threshold(c, lam) / phi.norm_squared();
        assert!((beta[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_coordinate_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = DMatrix::from_fn(20, 12, |_, _| rng.sample(StandardNormal));
            let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
            let lam = 0.5 + rng.random::<f64>() * 3.0;
            let (beta, ok) = solve_penalized(&x, &y, Penalty::L1(lam), None, 1e-11, 100_000);
            assert!(ok);
            let cd = coordinate_descent(&x, &y, lam, 5000);
            assert!((&x * &beta - &x * &cd).norm() < 1e-8);
        }
    }

    #[test]
    fn nonnegative_solution_satisfies_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(15, 8, |_, _| rng.sample(StandardNormal));
        let y = DVector::from_fn(15, |_, _| rng.sample(StandardNormal));
        let (beta, ok) = solve_penalized(&x, &y, Penalty::NonNegative, None, 1e-10, 100_000);
        assert!(ok);
        assert!(beta.iter().all(|b| *b >= 0.0));
    }

    #[test]
    fn least_squares_when_lambda_zero() {
        let model = build_fourier_model(5);
        let pos: Vec<DVector<f64>> = [0.1, 0.45, 0.8].iter().map(|&v| DVector::from_element(1, v)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = DVector::from_fn(11, |_, _| rng.sample(StandardNormal));
        let beta = closed_form_on_extended_support(&model, &pos, &y, 0.0, &[1.0, 1.0, 1.0]).unwrap();
        let phi = model.design(&pos).unwrap();
        let ls = (phi.transpose() * &phi).cholesky().unwrap().solve(&(phi.transpose() * &y));
        for (a, b) in beta.iter().zip(ls.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
