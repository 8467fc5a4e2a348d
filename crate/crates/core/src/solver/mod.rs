//! Sliding Frank-Wolfe for the Beurling Lasso and its positivity-constrained variant.

mod argmax;
mod lasso;
mod options;
mod prune;
mod slide;

use nalgebra::DVector;

pub use argmax::{certificate_extremum, polish_extremum, Extremum, Target};
pub use lasso::{
    blasso_objective, closed_form_on_extended_support, kkt_residual, lasso_on_support, lasso_on_support_warm,
    nnls_on_support, soft_threshold, solve_penalized, Penalty,
};
pub use options::{LocalDescentOptions, SolverOptions};
pub use prune::prune_to_injective;
pub use slide::{slide_gradient, slide_local, slide_objective, SlideExit};

use crate::error::{Error, Result};
use crate::model::{Certificate, DiscreteMeasure, ForwardModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub measure: DiscreteMeasure,
    pub certificate: Certificate,
    pub duality_gap: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub objective_value: f64,
}

/// Duality gap of a candidate measure together with the certificate extremum used to get it.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub gap: f64,
    pub primal: f64,
    pub dual: f64,
    pub extremum: Extremum,
}

fn check_inputs(model: &ForwardModel, y: &DVector<f64>, opts: &SolverOptions) -> Result<()> {
    opts.validate()?;
    if y.len() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("observation contains non-finite values".into()));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Gap between the primal objective at `measure` and the dual objective at the
/// rescaled feasible point `p / max(1, |Phi^* p|_inf)`, `p = (y - Phi m) / lambda`.
pub fn gap_report(
    model: &ForwardModel,
    measure: &DiscreteMeasure,
    y: &DVector<f64>,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<GapReport> {
    let fitted = model.apply(measure)?;
    let residual = y - &fitted;
    let p = &residual / lambda;
    let extremum = certificate_extremum(model, &p, Target::Abs, opts, measure.positions())?;
    let sup = extremum.value.abs();
    let primal = 0.5 * residual.norm_squared() + lambda * measure.tv_norm();
    let scaled = if sup > 1.0 { &residual / sup } else { residual };
    // lambda^2 (|y/lambda|^2 - |p~ - y/lambda|^2) / 2
    let dual = 0.5 * (y.norm_squared() - (scaled - y).norm_squared());
    Ok(GapReport { gap: primal - dual, primal, dual, extremum })
}

pub fn primal_dual_gap(
    model: &ForwardModel,
    measure: &DiscreteMeasure,
    y: &DVector<f64>,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(gap_report(model, measure, y, lambda, opts)?.gap)
}

fn gap_target(y: &DVector<f64>, opts: &SolverOptions) -> f64 {
    opts.duality_gap_tolerance * y.norm_squared().max(1e-300)
}

fn admits_insertion(nearest: Option<f64>, stalled: bool, opts: &SolverOptions) -> bool {
    match nearest {
        None => true,
        Some(d) if d <= opts.merge_tolerance => false,
        Some(d) => stalled || d > opts.insertion_exclusion,
    }
}

fn clean(model: &ForwardModel, m: &mut DiscreteMeasure, opts: &SolverOptions) {
    for x in m.positions_mut() {
        model.canonicalize(x);
    }
    m.prune_small(opts.amplitude_prune_tolerance);
    m.merge_close(model.domain(), opts.merge_tolerance);
    m.prune_small(opts.amplitude_prune_tolerance);
}

/// Solves `min_m 1/2 |Phi m - y|^2 + lambda |m|_TV` from the zero measure.
pub fn solve_blasso(model: &ForwardModel, y: &DVector<f64>, lambda: f64, opts: &SolverOptions) -> Result<SolveResult> {
    solve_blasso_from(model, y, lambda, opts, &DiscreteMeasure::zero(model.dim()))
}

/// Solves the Blasso starting from `initial` (warm start).
pub fn solve_blasso_from(
    model: &ForwardModel,
    y: &DVector<f64>,
    lambda: f64,
    opts: &SolverOptions,
    initial: &DiscreteMeasure,
) -> Result<SolveResult> {
    check_lambda(lambda)?;
    check_inputs(model, y, opts)?;
    let mut m = if initial.is_empty() { DiscreteMeasure::zero(model.dim()) } else { initial.clone() };
    clean(model, &mut m, opts);
    let target = gap_target(y, opts);
    let mut converged = false;
    let mut iterations = 0;
    let mut report = gap_report(model, &m, y, lambda, opts)?;
    let mut previous_gap = f64::INFINITY;
    while iterations < opts.max_outer_iterations {
        if report.gap <= target {
            converged = true;
            break;
        }
        let stalled = report.gap > 0.5 * previous_gap;
        previous_gap = report.gap;
        iterations += 1;
        log::debug!(
            "iteration {iterations}: k {} gap {:e} sup {:e}",
            m.len(),
            report.gap,
            report.extremum.value.abs()
        );
        let ext = &report.extremum;
        let near = m.nearest(model.domain(), &ext.position).map(|(_, d)| d);
        if ext.value.abs() > 1.0 && admits_insertion(near, stalled, opts) {
            m.push(ext.position.clone(), 0.0);
        }
        let warm: Vec<f64> = m.amplitudes().to_vec();
        let amps = lasso_on_support_warm(model, m.positions(), y, lambda, Some(&warm))?;
        m.amplitudes_mut().copy_from_slice(&amps);
        m.prune_small(opts.amplitude_prune_tolerance);
        let (slid, _) = slide::slide_with_penalty(model, &m, y, Penalty::L1(lambda), &opts.local_descent)?;
        m = slid;
        clean(model, &mut m, opts);
        report = gap_report(model, &m, y, lambda, opts)?;
    }
    if !converged && report.gap <= target {
        converged = true;
    }
    if converged && !m.is_empty() {
        // a warm start may already meet the gap target; polish to stationarity anyway
        let mut polished = m.clone();
        let warm: Vec<f64> = polished.amplitudes().to_vec();
        let amps = lasso_on_support_warm(model, polished.positions(), y, lambda, Some(&warm))?;
        polished.amplitudes_mut().copy_from_slice(&amps);
        polished.prune_small(opts.amplitude_prune_tolerance);
        let (slid, _) = slide::slide_with_penalty(model, &polished, y, Penalty::L1(lambda), &opts.local_descent)?;
        polished = slid;
        clean(model, &mut polished, opts);
        let polished_report = gap_report(model, &polished, y, lambda, opts)?;
        if polished_report.gap <= target && polished_report.primal <= report.primal {
            m = polished;
            report = polished_report;
        }
    }
    if m.len() > model.n() {
        m = prune_to_injective(model, &m)?;
    }
    let fitted = model.apply(&m)?;
    let certificate = Certificate::from_residual(y, &fitted, lambda)?;
    Ok(SolveResult {
        objective_value: report.primal,
        duality_gap: report.gap,
        measure: m,
        certificate,
        outer_iterations: iterations,
        converged,
    })
}

/// Solves `min_{m >= 0} 1/2 |Phi m - y|^2` by the positive sliding Frank-Wolfe variant.
///
/// The returned certificate holds `p = Phi m - y` (with `lambda = 1`), so that
/// `eta~ = Phi^* p >= 0` at the optimum and vanishes on the support. `duality_gap`
/// is the complementary-slackness term `<Phi m, p>`.
pub fn solve_positive_blasso(model: &ForwardModel, y: &DVector<f64>, opts: &SolverOptions) -> Result<SolveResult> {
    check_inputs(model, y, opts)?;
    let mut m = DiscreteMeasure::zero(model.dim());
    let tol = opts.duality_gap_tolerance * (1.0 + y.norm());
    let mut converged = false;
    let mut iterations = 0;
    let mut previous = f64::INFINITY;
    loop {
        let fitted = model.apply(&m)?;
        let p = &fitted - y;
        let ext = certificate_extremum(model, &p, Target::Min, opts, m.positions())?;
        let stationary = m
            .positions()
            .iter()
            .map(|x| model.feature(x).map(|f| f.dot(&p).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .all(|v| v <= tol);
        if ext.value >= -tol && stationary {
            converged = true;
            break;
        }
        if iterations >= opts.max_outer_iterations {
            break;
        }
        iterations += 1;
        let stalled = -ext.value > 0.5 * previous;
        previous = -ext.value;
        let near = m.nearest(model.domain(), &ext.position).map(|(_, d)| d);
        if ext.value < -tol && admits_insertion(near, stalled, opts) {
            m.push(ext.position.clone(), 0.0);
        }
        let warm: Vec<f64> = m.amplitudes().to_vec();
        let amps = nnls_on_support(model, m.positions(), y, Some(&warm))?;
        m.amplitudes_mut().copy_from_slice(&amps);
        m.prune_small(opts.amplitude_prune_tolerance);
        let (slid, _) = slide::slide_with_penalty(model, &m, y, Penalty::NonNegative, &opts.local_descent)?;
        m = slid;
        clean(model, &mut m, opts);
        // amplitudes may lose optimality after merging; re-fit
        let warm: Vec<f64> = m.amplitudes().to_vec();
        let amps = nnls_on_support(model, m.positions(), y, Some(&warm))?;
        m.amplitudes_mut().copy_from_slice(&amps);
        m.prune_small(opts.amplitude_prune_tolerance);
    }
    let fitted = model.apply(&m)?;
    let p = &fitted - y;
    Ok(SolveResult {
        objective_value: 0.5 * p.norm_squared(),
        duality_gap: fitted.dot(&p).abs(),
        certificate: Certificate::new(p, 1.0),
        measure: m,
        outer_iterations: iterations,
        converged,
    })
}
