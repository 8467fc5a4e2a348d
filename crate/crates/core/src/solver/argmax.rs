//! Global maximization of `|eta|` (or of a signed `eta`) over the domain:
//! a uniform scan (low dimension) or multi-start ascent (high dimension),
//! followed by damped Newton polishing.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SolverOptions;
use crate::error::Result;
use crate::model::{Certificate, ForwardModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// maximize `|eta(x)|`
    Abs,
    /// maximize `eta(x)`
    Max,
    /// minimize `eta(x)` (reported as the maximizer of `-eta`)
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extremum {
    pub position: DVector<f64>,
    /// Signed certificate value `eta(position)`.
    pub value: f64,
}

impl Extremum {
    fn score(&self, target: Target) -> f64 {
        score(self.value, target)
    }
}

fn score(v: f64, target: Target) -> f64 {
    match target {
        Target::Abs => v.abs(),
        Target::Max => v,
        Target::Min => -v,
    }
}

/// Maximizes the target functional of `eta = Phi^* p`, seeding the search with
/// `extra_starts` in addition to the scan or random starts.
pub fn certificate_extremum(
    model: &ForwardModel,
    p: &DVector<f64>,
    target: Target,
    opts: &SolverOptions,
    extra_starts: &[DVector<f64>],
) -> Result<Extremum> {
    let cert = Certificate::new(p.clone(), 1.0);
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    match opts.grid_size_for(model.dim()) {
        Some(per_axis) => {
            let grid = model.domain().grid(per_axis);
            let values = grid
                .iter()
                .map(|x| cert.value(model, x).map(|v| score(v, target)))
                .collect::<Result<Vec<f64>>>()?;
            candidates.extend(scan_candidates(model, &grid, &values, per_axis));
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
            for _ in 0..opts.multistart_points {
                let mut x = if model.as_relu().is_some_and(|r| r.normalized()) {
                    DVector::from_fn(model.dim(), |_, _| StandardNormal.sample(&mut rng))
                } else {
                    model.domain().sample(&mut rng)
                };
                model.canonicalize(&mut x);
                candidates.push(x);
            }
        }
    }
    candidates.extend(extra_starts.iter().cloned());

    let mut best: Option<Extremum> = None;
    for x0 in candidates {
        let e = polish_extremum(model, &cert, target, x0, opts)?;
        if best.as_ref().is_none_or(|b| e.score(target) > b.score(target)) {
            best = Some(e);
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Local maxima of the scanned score (up to 8 best), falling back to the top scores.
fn scan_candidates(model: &ForwardModel, grid: &[DVector<f64>], values: &[f64], per_axis: usize) -> Vec<DVector<f64>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    if model.dim() == 1 {
        let m = values.len();
        let wrap = model.domain().is_torus();
        order.retain(|&i| {
            let left = if i > 0 { Some(values[i - 1]) } else if wrap { Some(values[m - 1]) } else { None };
            let right = if i + 1 < m { Some(values[i + 1]) } else if wrap { Some(values[0]) } else { None };
            left.is_none_or(|l| values[i] >= l) && right.is_none_or(|r| values[i] >= r)
        });
    }
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let keep = if model.dim() == 1 { 8 } else { 16.max(per_axis / 2) };
    order.truncate(keep);
    order.into_iter().map(|i| grid[i].clone()).collect()
}

/// Damped Newton ascent of the target functional from `x0`.
pub fn polish_extremum(
    model: &ForwardModel,
    cert: &Certificate,
    target: Target,
    x0: DVector<f64>,
    opts: &SolverOptions,
) -> Result<Extremum> {
    let mut x = x0;
    model.canonicalize(&mut x);
    let mut eval = cert.eval(model, &x)?;
    // fixed orientation along the ascent path
    let sign = match target {
        Target::Abs => {
            if eval.value >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
        Target::Max => 1.0,
        Target::Min => -1.0,
    };
    let max_iter = opts.newton_steps;
    let step_cap = match model.as_fourier() {
        Some(f) => 0.25 / (f.cutoff() as f64 + 1.0),
        None => 0.25,
    };
    let on_sphere = model.as_relu().is_some_and(|r| r.normalized());
    for _ in 0..max_iter {
        let f0 = sign * eval.value;
        let g = &eval.gradient * sign;
        let gn = g.norm();
        if gn <= 1e-14 * (1.0 + f0.abs()) {
            break;
        }
        let mut h = &eval.hessian * sign;
        let mut g = g;
        if let Some(u) = model.invariant_direction(&x) {
            // ascend within the tangent space of the invariance orbit
            let proj = DMatrix::identity(x.len(), x.len()) - &u * u.transpose();
            let s = h.amax().max(1.0);
            h = &proj * h * &proj - &u * u.transpose() * s;
            g = &proj * g;
        }
        let mut dir = newton_ascent_direction(&h, &g).unwrap_or_else(|| g.clone());
        if dir.dot(&g) <= 0.0 {
            dir = g.clone();
        }
        let scale = match model.domain().geometry() {
            _ if on_sphere => step_cap,
            crate::model::Geometry::Torus => step_cap,
            crate::model::Geometry::Box { lower, upper } => {
                step_cap * lower.iter().zip(upper).map(|(l, u)| u - l).fold(f64::INFINITY, f64::min)
            }
        };
        let dn = dir.amax();
        if dn > scale {
            dir *= scale / dn;
        }
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let mut xn = &x + &dir * t;
            model.canonicalize(&mut xn);
            let vn = sign * cert.value(model, &xn)?;
            if vn > f0 {
                eval = cert.eval(model, &xn)?;
                x = xn;
                improved = true;
                break;
            }
            if vn >= f0 - 4.0 * f64::EPSILON * f0.abs() {
                let en = cert.eval(model, &xn)?;
                if en.gradient.norm() < 0.5 * gn {
                    x = xn;
                    eval = en;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(Extremum { position: x, value: eval.value })
}

/// Direction `-(H - mu I)^{-1} g` with `mu >= 0` making `H - mu I` negative definite.
fn newton_ascent_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let d = h.nrows();
    let scale = h.amax().max(1e-300);
    let mut mu = 0.0;
    for _ in 0..30 {
        let neg = -(h - DMatrix::identity(d, d) * mu);
        if let Some(ch) = neg.clone().cholesky() {
            return Some(ch.solve(g));
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_fourier_model;

    #[test]
    fn finds_peak_of_single_spike_kernel() {
        // eta(x) = <phi(x), phi(x0)> / n peaks at x0 with value 1
        let model = build_fourier_model(10);
        let x0 = DVector::from_element(1, 0.3141592);
        let p = model.feature(&x0).unwrap() / 21.0;
        let e = certificate_extremum(&model, &p, Target::Abs, &SolverOptions::default(), &[]).unwrap();
        assert!((e.position[0] - x0[0]).abs() < 1e-10);
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_peak_and_min_target() {
        let model = build_fourier_model(5);
        let x0 = DVector::from_element(1, 0.77);
        let p = -model.feature(&x0).unwrap() / 11.0;
        let e = certificate_extremum(&model, &p, Target::Abs, &SolverOptions::default(), &[]).unwrap();
        assert!((e.value + 1.0).abs() < 1e-12);
        let e = certificate_extremum(&model, &p, Target::Min, &SolverOptions::default(), &[]).unwrap();
        assert!((e.position[0] - 0.77).abs() < 1e-9);
    }
}
