//! Fast invariant suite behind `blasso selftest`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dof::{build_gamma, build_m, divergence_closed_form, dof_report, fourier_dof, trace_decomposition};
use crate::model::{
    build_fourier_model, build_relu_model, complex_measurements, complex_real_map, DiscreteMeasure, ForwardModel,
    MapDirection,
};
use crate::solver::{
    closed_form_on_extended_support, lasso_on_support, primal_dual_gap, prune_to_injective, solve_blasso,
    SolverOptions,
};

type Check = std::result::Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib(e: crate::Error) -> String {
    e.to_string()
}

fn derivative_check(model: &ForwardModel, x: &DVector<f64>) -> Check {
    let d = model.dim();
    let h = 1e-6;
    let jac = model.jacobian(x).map_err(lib)?;
    let w = DVector::from_fn(model.n(), |i, _| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5);
    let hess = model.weighted_hessian(x, &w).map_err(lib)?;
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fd = (model.feature(&xp).map_err(lib)? - model.feature(&xm).map_err(lib)?) / (2.0 * h);
        let err = (&fd - jac.column(j)).amax();
        ensure(err <= 1e-5 * (1.0 + fd.amax()), || format!("jacobian column {j} off by {err:e}"))?;
        let gp = model.jacobian(&xp).map_err(lib)?.transpose() * &w;
        let gm = model.jacobian(&xm).map_err(lib)?.transpose() * &w;
        let fdh = (gp - gm) / (2.0 * h);
        let err = (&fdh - hess.column(j)).amax();
        ensure(err <= 1e-4 * (1.0 + fdh.amax()), || format!("hessian column {j} off by {err:e}"))?;
    }
    Ok(())
}

fn fourier_derivatives() -> Check {
    let model = build_fourier_model(10);
    for x in [0.0, 0.137, 0.5, 0.93] {
        derivative_check(&model, &DVector::from_element(1, x))?;
    }
    Ok(())
}

fn relu_derivatives() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = DMatrix::from_fn(40, 5, |_, _| rng.sample(StandardNormal));
    for normalize in [false, true] {
        let model = build_relu_model(w.clone(), normalize, None).map_err(lib)?;
        for _ in 0..4 {
            let x = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
            derivative_check(&model, &x)?;
        }
    }
    Ok(())
}

fn fourier_unitarity() -> Check {
    let fc = 3;
    let model = build_fourier_model(fc);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let v: Vec<Complex64> = (0..2 * fc + 1)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let r = complex_real_map(fc, MapDirection::ComplexToReal, &v).map_err(lib)?;
        let back = complex_real_map(fc, MapDirection::RealToComplex, &r).map_err(lib)?;
        let norm = |a: &[Complex64]| a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        ensure((norm(&v) - norm(&r)).abs() <= 1e-12 * norm(&v), || "map is not norm preserving".into())?;
        let err = v.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        ensure(err <= 1e-12, || format!("round trip off by {err:e}"))?;
        let xs: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let bs: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let m = DiscreteMeasure::from_1d(&xs, &bs).map_err(lib)?;
        let u = complex_real_map(fc, MapDirection::ComplexToReal, &complex_measurements(fc, &m).map_err(lib)?)
            .map_err(lib)?;
        let phi = model.apply(&m).map_err(lib)?;
        let err = u.iter().zip(phi.iter()).map(|(a, b)| (a - Complex64::new(*b, 0.0)).norm()).fold(0.0, f64::max);
        ensure(err <= 1e-10, || format!("U Psi m differs from Phi m by {err:e}"))?;
    }
    Ok(())
}

struct Solved {
    model: ForwardModel,
    y: DVector<f64>,
    lambda: f64,
    measure: DiscreteMeasure,
}

fn solved_instances() -> std::result::Result<Vec<Solved>, String> {
    let model = build_fourier_model(10);
    let m0 = DiscreteMeasure::from_1d(&[0.1, 0.6, 0.9], &[2.0, -4.5, 4.0]).map_err(lib)?;
    let mu = model.apply(&m0).map_err(lib)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut out = Vec::new();
    for lambda in [0.05, 0.2, 1.0] {
        let y = &mu + DVector::from_fn(21, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
        let res = solve_blasso(&model, &y, lambda, &SolverOptions::default()).map_err(lib)?;
        ensure(res.converged, || format!("solve at lambda {lambda} did not converge"))?;
        out.push(Solved { model: model.clone(), y, lambda, measure: res.measure });
    }
    Ok(out)
}

fn bound_chain(cases: &[Solved]) -> Check {
    for c in cases {
        let r = dof_report(&c.model, &c.measure, &c.y, c.lambda).map_err(lib)?;
        ensure(r.divergence >= -1e-9 && r.divergence <= r.rank_gamma as f64 + 1e-9 && r.rank_gamma <= r.p, || {
            format!("0 <= {} <= {} <= {} fails", r.divergence, r.rank_gamma, r.p)
        })?;
        ensure(r.m_min_eigenvalue >= -1e-9, || format!("M has eigenvalue {:e}", r.m_min_eigenvalue))?;
    }
    Ok(())
}

fn trace_identities(cases: &[Solved]) -> Check {
    for c in cases {
        let gamma = build_gamma(&c.model, c.measure.positions()).map_err(lib)?;
        let m = build_m(&c.model, &c.measure, &c.y, c.lambda).map_err(lib)?;
        let div = divergence_closed_form(&gamma, &m).map_err(lib)?;
        let (value, t) = trace_decomposition(&gamma, &m).map_err(lib)?;
        ensure(t >= -1e-10, || format!("subtracted trace {t:e} is negative"))?;
        ensure((value - div).abs() <= 1e-8 * (1.0 + div), || format!("rank - T = {value} but trace = {div}"))?;
        let (fdiv, nu) = fourier_dof(&m).map_err(lib)?;
        ensure(nu >= -1e-10, || format!("nu = {nu:e} < 0"))?;
        ensure((fdiv - div).abs() <= 1e-10 * (1.0 + div), || format!("2k - nu = {fdiv} but trace = {div}"))?;
    }
    Ok(())
}

fn pseudo_inverse_solution(cases: &[Solved]) -> Check {
    for c in cases {
        let signs = c.measure.signs();
        let closed =
            closed_form_on_extended_support(&c.model, c.measure.positions(), &c.y, c.lambda, &signs).map_err(lib)?;
        let lasso = lasso_on_support(&c.model, c.measure.positions(), &c.y, c.lambda).map_err(lib)?;
        let err = closed.iter().zip(&lasso).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-8, || format!("closed form differs from the finite Lasso by {err:e}"))?;
    }
    Ok(())
}

fn weak_duality(cases: &[Solved]) -> Check {
    let opts = SolverOptions::default();
    for c in cases {
        for m in [&c.measure, &DiscreteMeasure::zero(1)] {
            let gap = primal_dual_gap(&c.model, m, &c.y, c.lambda, &opts).map_err(lib)?;
            ensure(gap >= -1e-10, || format!("negative gap {gap:e}"))?;
        }
    }
    Ok(())
}

fn pruning() -> Check {
    // duplicated weight rows make two positions share one feature column
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let w = DMatrix::from_fn(8, 2, |_, _| rng.sample(StandardNormal));
    let model = build_relu_model(w, true, None).map_err(lib)?;
    let x = DVector::from_vec(vec![0.6, 0.8]);
    let m = DiscreteMeasure::new(vec![x.clone(), &x * 2.0], vec![1.0, 2.0]).map_err(lib)?;
    let pruned = prune_to_injective(&model, &m).map_err(lib)?;
    ensure(pruned.len() < m.len(), || "support did not shrink".into())?;
    let err = (model.apply(&pruned).map_err(lib)? - model.apply(&m).map_err(lib)?).amax();
    ensure(err <= 1e-10, || format!("Phi m changed by {err:e}"))?;
    ensure((pruned.tv_norm() - m.tv_norm()).abs() <= 1e-10, || "TV norm changed".into())
}

/// Runs every check, printing one line each; returns whether all passed.
pub fn run_selftest() -> bool {
    let mut all = true;
    let mut report = |name: &str, r: Check| match r {
        Ok(()) => println!("PASS {name}"),
        Err(e) => {
            all = false;
            println!("FAIL {name}: {e}");
        }
    };
    report("fourier_derivatives", fourier_derivatives());
    report("relu_derivatives", relu_derivatives());
    report("fourier_unitarity", fourier_unitarity());
    report("support_pruning", pruning());
    match solved_instances() {
        Ok(cases) => {
            report("bound_chain", bound_chain(&cases));
            report("trace_identities", trace_identities(&cases));
            report("pseudo_inverse_solution", pseudo_inverse_solution(&cases));
            report("weak_duality", weak_duality(&cases));
        }
        Err(e) => report("solve", Err(e)),
    }
    all
}
