//! Joint local refinement of amplitudes and positions on a fixed sign pattern.
//!
//! On the orthant given by the current signs `s`, the objective
//! `F(beta, X) = 1/2 |Phi_X beta - y|^2 + lambda <s, beta>` is smooth. Steps use the exact
//! gradient and Hessian with Levenberg damping and a backtracking line search, so
//! `F` never increases. A step that would flip the sign of an amplitude is cut at
//! the orthant boundary; the spike is removed and the descent continues.

use nalgebra::{DMatrix, DVector};

use super::lasso::Penalty;
use super::options::LocalDescentOptions;
use crate::error::Result;
use crate::model::{DiscreteMeasure, ForwardModel, ModelKind};

/// Spikes below this fraction of the largest amplitude slide in amplitude only.
const FREEZE_RATIO: f64 = 1e-6;

/// Steps without the gradient halving after which a flat objective ends the descent
/// (piecewise-smooth features can trap Newton steps at a hinge).
const STALL_STEPS: usize = 20;
const STALL_DECREASE: f64 = 1e-8;

struct Local {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

fn smooth_objective(model: &ForwardModel, m: &DiscreteMeasure, y: &DVector<f64>, pen: Penalty) -> Result<f64> {
    let r = model.apply(m)? - y;
    let lin = match pen {
        Penalty::L1(lam) => lam * m.tv_norm(),
        Penalty::NonNegative => 0.0,
    };
    Ok(0.5 * r.norm_squared() + lin)
}

/// Gradient of the smooth-orthant objective, variables ordered `(beta_1..beta_k, x_1..x_k)`.
pub fn slide_gradient(model: &ForwardModel, m: &DiscreteMeasure, y: &DVector<f64>, pen: Penalty) -> Result<DVector<f64>> {
    Ok(local_model(model, m, y, pen, false)?.gradient)
}

/// Smooth-orthant objective value.
pub fn slide_objective(model: &ForwardModel, m: &DiscreteMeasure, y: &DVector<f64>, pen: Penalty) -> Result<f64> {
    smooth_objective(model, m, y, pen)
}

fn local_model(model: &ForwardModel, m: &DiscreteMeasure, y: &DVector<f64>, pen: Penalty, hess: bool) -> Result<Local> {
    let k = m.len();
    let d = model.dim();
    let nv = k * (d + 1);
    let feats: Vec<DVector<f64>> = m.positions().iter().map(|x| model.feature(x)).collect::<Result<_>>()?;
    let jacs: Vec<DMatrix<f64>> = m.positions().iter().map(|x| model.jacobian(x)).collect::<Result<_>>()?;
    let beta = m.amplitudes();
    let mut r = -y.clone();
    for (f, b) in feats.iter().zip(beta) {
        r.axpy(*b, f, 1.0);
    }
    let lam = match pen {
        Penalty::L1(l) => l,
        Penalty::NonNegative => 0.0,
    };
    let value = 0.5 * r.norm_squared() + lam * beta.iter().map(|b| b.abs()).sum::<f64>();
    let mut g = DVector::zeros(nv);
    let jtr: Vec<DVector<f64>> = jacs.iter().map(|j| j.transpose() * &r).collect();
    for i in 0..k {
        g[i] = feats[i].dot(&r) + lam * beta[i].signum();
        g.rows_mut(k + i * d, d).copy_from(&(&jtr[i] * beta[i]));
    }
    let mut h = DMatrix::zeros(nv, nv);
    if hess {
        // one Gram product over [features | beta-scaled Jacobians]
        let mut cols = DMatrix::zeros(model.n(), nv);
        for i in 0..k {
            cols.set_column(i, &feats[i]);
            cols.view_mut((0, k + i * d), (model.n(), d)).copy_from(&(&jacs[i] * beta[i]));
        }
        h = cols.transpose() * &cols;
        for i in 0..k {
            for a in 0..d {
                h[(i, k + i * d + a)] += jtr[i][a];
                h[(k + i * d + a, i)] += jtr[i][a];
            }
            let curv = model.weighted_hessian(&m.positions()[i], &r)? * beta[i];
            let mut block = h.view_mut((k + i * d, k + i * d), (d, d));
            block += curv;
        }
    }
    Ok(Local { value, gradient: g, hessian: h })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlideExit {
    Stationary,
    OrthantBoundary,
    NoProgress,
    MaxSteps,
}

/// Joint descent on `(beta, X)`; see the module docs.
pub fn slide_local(
    model: &ForwardModel,
    measure: &DiscreteMeasure,
    y: &DVector<f64>,
    lambda: f64,
    opts: &LocalDescentOptions,
) -> Result<DiscreteMeasure> {
    Ok(slide_with_penalty(model, measure, y, Penalty::L1(lambda), opts)?.0)
}

pub(crate) fn slide_with_penalty(
    model: &ForwardModel,
    measure: &DiscreteMeasure,
    y: &DVector<f64>,
    pen: Penalty,
    opts: &LocalDescentOptions,
) -> Result<(DiscreteMeasure, SlideExit)> {
    let mut m = measure.clone();
    let d = model.dim();
    let gtol = opts.gradient_tolerance * (1.0 + y.norm_squared());
    let mut exit = SlideExit::MaxSteps;
    let mut hit_orthant = false;
    // smooth models can creep along flat valleys for a long time and still be making progress
    let detect_stall = matches!(model.kind(), ModelKind::Relu(_));
    let (mut best_gradient, mut value_at_best, mut since_best) = (f64::INFINITY, f64::INFINITY, 0);
    for _ in 0..opts.max_steps {
        if m.is_empty() {
            exit = SlideExit::Stationary;
            break;
        }
        let k = m.len();
        let signs = m.signs();
        let loc = local_model(model, &m, y, pen, true)?;
        // positions of negligible spikes are ill-determined; keep them fixed
        let bmax = m.amplitudes().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let free: Vec<usize> = (0..k)
            .chain((0..k).filter(|&j| m.amplitudes()[j].abs() > FREEZE_RATIO * bmax).flat_map(|j| k + j * d..k + (j + 1) * d))
            .collect();
        let g = DVector::from_iterator(free.len(), free.iter().map(|&i| loc.gradient[i]));
        log::trace!("slide value {:e} gradient {:e}", loc.value, g.norm());
        let gn = g.norm();
        if gn <= gtol {
            exit = SlideExit::Stationary;
            break;
        }
        if gn < 0.5 * best_gradient {
            (best_gradient, value_at_best, since_best) = (gn, loc.value, 0);
        } else {
            since_best += 1;
            if detect_stall && since_best >= STALL_STEPS && value_at_best - loc.value <= STALL_DECREASE * loc.value.abs() {
                exit = SlideExit::NoProgress;
                break;
            }
        }
        let h = DMatrix::from_fn(free.len(), free.len(), |a, b| loc.hessian[(free[a], free[b])]);
        let Some(mut reduced) = damped_newton(&h, &g) else {
            exit = SlideExit::NoProgress;
            break;
        };
        if reduced.dot(&g) >= 0.0 {
            reduced = -g.clone();
        }
        let mut dir = DVector::zeros(loc.gradient.len());
        for (a, &i) in free.iter().enumerate() {
            dir[i] = reduced[a];
        }
        // trust region on positions
        let pos_max = dir.rows(k, k * d).amax();
        if pos_max > opts.max_position_step {
            dir *= opts.max_position_step / pos_max;
        }
        // orthant boundary
        let mut t_boundary = f64::INFINITY;
        let mut blocking = None;
        for j in 0..k {
            let (b, db) = (m.amplitudes()[j], dir[j]);
            if db != 0.0 && (b + db).signum() != signs[j] && -b / db < t_boundary {
                t_boundary = -b / db;
                blocking = Some(j);
            }
        }
        let slope = loc.gradient.dot(&dir);
        let mut t = 1.0f64.min(t_boundary);
        let hit_boundary = t_boundary <= 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial = step(model, &m, &dir, t, &signs, blocking.filter(|_| hit_boundary && t == t_boundary));
            let f = smooth_objective(model, &trial, y, pen)?;
            if f <= loc.value + 1e-4 * t * slope || (f < loc.value && t < 1e-3) {
                accepted = Some((trial, f, false));
                break;
            }
            // objective flat to rounding: judge the step by the gradient instead
            if f <= loc.value + 64.0 * f64::EPSILON * loc.value.abs() {
                let gn = local_model(model, &trial, y, pen, false)?.gradient.norm();
                if gn < 0.5 * loc.gradient.norm() {
                    accepted = Some((trial, f, true));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, f_new, by_gradient)) = accepted else {
            exit = SlideExit::NoProgress;
            break;
        };
        let progress = loc.value - f_new;
        m = trial;
        if m.amplitudes().iter().any(|&b| b == 0.0) {
            hit_orthant = true;
            m.prune_small(0.0);
            continue;
        }
        if !by_gradient && progress <= 1e-17 * loc.value.abs().max(1e-300) && t < 1.0 {
            exit = SlideExit::NoProgress;
            break;
        }
    }
    if hit_orthant && exit != SlideExit::Stationary {
        exit = SlideExit::OrthantBoundary;
    }
    log::trace!("slide exit {exit:?}");
    Ok((m, exit))
}

fn step(
    model: &ForwardModel,
    m: &DiscreteMeasure,
    dir: &DVector<f64>,
    t: f64,
    signs: &[f64],
    zeroed: Option<usize>,
) -> DiscreteMeasure {
    let k = m.len();
    let d = model.dim();
    let mut out = m.clone();
    for j in 0..k {
        let mut b = m.amplitudes()[j] + t * dir[j];
        if b.signum() != signs[j] || zeroed == Some(j) {
            b = 0.0;
        }
        out.amplitudes_mut()[j] = b;
        let mut x = &m.positions()[j] + dir.rows(k + j * d, d) * t;
        model.canonicalize(&mut x);
        out.positions_mut()[j] = x;
    }
    out
}

/// `-(H + mu I)^{-1} g` with the smallest `mu >= 0` (on a 10x ladder) making the matrix positive definite.
fn damped_newton(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = h.diagonal().amax().max(1e-300);
    let mut mu = 0.0;
    for _ in 0..40 {
        let shifted = h + DMatrix::identity(n, n) * mu;
        if let Some(ch) = shifted.cholesky() {
            let dir = -ch.solve(g);
            if dir.iter().all(|v| v.is_finite()) {
                return Some(dir);
            }
        }
        mu = if mu == 0.0 { 1e-12 * scale } else { mu * 10.0 };
    }
    None
}
