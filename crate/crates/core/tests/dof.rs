use blasso::dof::*;
use blasso::model::*;
use blasso::risk::{finite_difference_divergence, replicate_noise};
use blasso::solver::{solve_blasso, SolverOptions};
use blasso::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn fourier_instance(sigma: f64) -> (ForwardModel, DVector<f64>) {
    let model = build_fourier_model(10);
    let m0 = DiscreteMeasure::from_1d(&[0.1, 0.6, 0.9], &[2.0, -4.5, 4.0]).unwrap();
    let y = model.apply(&m0).unwrap() + replicate_noise(1, 0, 21) * sigma;
    (model, y)
}

fn random_positions(rng: &mut ChaCha8Rng, k: usize, min_sep: f64) -> Vec<f64> {
    let domain = DomainSpec::torus(1).unwrap();
    loop {
        let xs: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let ok = (0..k).all(|i| {
            (0..i).all(|j| {
                domain.distance(&DVector::from_element(1, xs[i]), &DVector::from_element(1, xs[j])) > min_sep
            })
        });
        if ok {
            return xs;
        }
    }
}

#[test]
fn gamma_shapes() {
    let f = build_fourier_model(4);
    let g = build_gamma(&f, &[DVector::from_element(1, 0.3)]).unwrap();
    assert_eq!(g.matrix().shape(), (9, 2));
    let x = DVector::from_element(1, 0.3);
    assert_eq!(g.matrix().column(0), f.feature(&x).unwrap().column(0));
    assert_eq!(g.matrix().column(1), f.jacobian(&x).unwrap().column(0));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = DMatrix::from_fn(12, 2, |_, _| rng.sample(StandardNormal));
    let relu = build_relu_model(w, false, None).unwrap();
    let xs = vec![DVector::from_vec(vec![0.3, -0.4]), DVector::from_vec(vec![-1.1, 0.2])];
    assert_eq!(build_gamma(&relu, &xs).unwrap().matrix().shape(), (12, 6));
}

#[test]
fn fourier_gamma_full_rank() {
    let model = build_fourier_model(10);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let k = rng.random_range(1..=10);
        let xs = random_positions(&mut rng, k, 0.025);
        let pos: Vec<DVector<f64>> = xs.iter().map(|x| DVector::from_element(1, *x)).collect();
        let g = build_gamma(&model, &pos).unwrap();
        assert!(g.sigma_min() > 0.0);
        assert_eq!(g.rank(), 2 * k);
    }
    let pos: Vec<DVector<f64>> = [0.11, 0.52, 0.83].iter().map(|x| DVector::from_element(1, *x)).collect();
    assert_eq!(build_gamma(&model, &pos).unwrap().rank(), 6);
}

#[test]
fn empty_measure_has_zero_divergence() {
    let model = build_fourier_model(3);
    let g = build_gamma(&model, &[]).unwrap();
    let y = DVector::from_element(7, 0.1);
    let m = build_m(&model, &DiscreteMeasure::zero(1), &y, 1.0).unwrap();
    assert_eq!(m.matrix().shape(), (0, 0));
    assert_eq!(divergence_closed_form(&g, &m).unwrap(), 0.0);
    assert_eq!(fourier_dof(&m).unwrap(), (0.0, 0.0));
    let r = dof_report(&model, &DiscreteMeasure::zero(1), &y, 10.0).unwrap();
    assert_eq!(r.divergence, 0.0);
    assert_eq!(r.support_class, SupportClass::Empty);
}

#[test]
fn flat_certificate_gives_projection_trace() {
    // y = Phi m exactly: p = 0, so Q = 0 and M = Gamma^T Gamma
    let model = build_fourier_model(10);
    let m0 = DiscreteMeasure::from_1d(&[0.2, 0.45, 0.8], &[1.0, -2.0, 0.5]).unwrap();
    let y = model.apply(&m0).unwrap();
    let g = build_gamma(&model, m0.positions()).unwrap();
    let m = build_m(&model, &m0, &y, 0.1).unwrap();
    assert!((m.matrix() - g.matrix().transpose() * g.matrix()).amax() < 1e-12);
    let div = divergence_closed_form(&g, &m).unwrap();
    assert!((div - 6.0).abs() < 1e-9, "{div}");
}

#[test]
fn zero_amplitude_rejected() {
    let model = build_fourier_model(2);
    let m0 = DiscreteMeasure::from_1d(&[0.2], &[0.0]).unwrap();
    assert!(build_m(&model, &m0, &DVector::zeros(5), 1.0).is_err());
}

#[test]
fn singular_m_is_reported() {
    let model = build_fourier_model(1);
    // four spikes in a 3-dimensional observation space
    let m0 = DiscreteMeasure::from_1d(&[0.1, 0.3, 0.6, 0.8], &[1.0, 1.0, 1.0, 1.0]).unwrap();
    let y = model.apply(&m0).unwrap();
    let g = build_gamma(&model, m0.positions()).unwrap();
    let m = build_m(&model, &m0, &y, 1.0).unwrap();
    assert!(matches!(divergence_closed_form(&g, &m), Err(Error::SingularM { .. })));
}

#[test]
fn solved_fourier_instance() {
    let (model, y) = fourier_instance(0.01);
    let lambda = 0.3;
    let res = solve_blasso(&model, &y, lambda, &SolverOptions::default()).unwrap();
    assert!(res.converged);
    let r = dof_report(&model, &res.measure, &y, lambda).unwrap();
    assert_eq!(r.k, 3);
    assert_eq!(r.p, 6);
    assert_eq!(r.rank_gamma, 6);
    assert_eq!(r.support_class, SupportClass::Discrete);
    assert_eq!(r.flatness_orders, vec![1, 1, 1]);
    assert!(r.m_min_eigenvalue >= -1e-9);
    let nu = r.nu.unwrap();
    assert!(nu >= -1e-10);
    assert!((2.0 * r.k as f64 - nu - r.divergence).abs() < 1e-10);
    assert!(r.divergence < 6.0 - 1e-12 && r.divergence >= 0.0);

    let gamma = build_gamma(&model, r.measure.positions()).unwrap();
    let m = build_m(&model, &r.measure, &y, lambda).unwrap();
    let (value, t) = trace_decomposition(&gamma, &m).unwrap();
    assert!(t >= -1e-10);
    assert!((value - r.divergence).abs() < 1e-9);

    let h = 1e-6 * (1.0 + y.norm());
    let fd = finite_difference_divergence(&model, &y, lambda, h, &SolverOptions::default()).unwrap();
    assert!((fd - r.divergence).abs() <= 1e-3 * r.divergence, "fd {fd} closed {}", r.divergence);
}

#[test]
fn classification_cases() {
    let model = build_fourier_model(5);
    let y = DVector::from_fn(11, |i, _| if i == 0 { 1.0 } else { 0.0 });
    // p = y / lambda = e_1 makes eta identically one
    let cert = Certificate::from_residual(&y, &DVector::zeros(11), 1.0).unwrap();
    let s = classify_extended_support(&cert, &model, 1e-6).unwrap();
    assert_eq!(s.class, SupportClass::FullDomain);
    let r = dof_report(&model, &DiscreteMeasure::zero(1), &y, 1.0).unwrap();
    assert_eq!(r.divergence, 11.0);

    let cert = Certificate::from_residual(&y, &DVector::zeros(11), 2.0).unwrap();
    assert_eq!(classify_extended_support(&cert, &model, 1e-6).unwrap().class, SupportClass::Empty);
}

#[test]
fn normalized_relu_report() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, d) = (60, 4);
    let w = DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    let model = build_relu_model(w, true, None).unwrap();
    let mut pos = Vec::new();
    for _ in 0..2 {
        let mut x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        model.canonicalize(&mut x);
        pos.push(x);
    }
    let m0 = DiscreteMeasure::new(pos, vec![1.5, -1.0]).unwrap();
    let y = model.apply(&m0).unwrap() + DVector::from_fn(n, |_, _| 0.02 * rng.sample::<f64, _>(StandardNormal));
    let lambda = 0.05;
    let res = solve_blasso(&model, &y, lambda, &SolverOptions::default()).unwrap();
    assert!(res.converged);
    let r = dof_report(&model, &res.measure, &y, lambda).unwrap();
    assert!(r.k >= 1);
    assert!(r.divergence >= -1e-9);
    // one direction per spike is invisible to phi
    assert!(r.divergence <= (r.k * d) as f64 + 1e-9);
    assert!(r.divergence <= r.rank_gamma as f64 + 1e-9);
    assert!(r.nu.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bound_chain_on_solved_instances(seed in 0u64..10_000, lambda in 0.05f64..1.0) {
        let model = build_fourier_model(6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = random_positions(&mut rng, 2, 0.15);
        let amps: Vec<f64> = (0..2).map(|_| (1.0 + rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let m0 = DiscreteMeasure::from_1d(&xs, &amps).unwrap();
        let y = model.apply(&m0).unwrap() + DVector::from_fn(13, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let res = solve_blasso(&model, &y, lambda, &SolverOptions::default()).unwrap();
        prop_assume!(res.converged);
        match dof_report(&model, &res.measure, &y, lambda) {
            Ok(r) => {
                prop_assert!(r.divergence >= -1e-9);
                prop_assert!(r.divergence <= r.rank_gamma as f64 + 1e-9);
                prop_assert!(r.rank_gamma <= r.p);
                prop_assert!(r.m_min_eigenvalue >= -1e-9);
                let nu = r.nu.unwrap();
                prop_assert!(nu >= -1e-10);
                prop_assert!((2.0 * r.k as f64 - nu - r.divergence).abs() < 1e-10 * (1.0 + r.divergence));
                if r.k > 0 {
                    let gamma = build_gamma(&model, r.measure.positions()).unwrap();
                    let m = build_m(&model, &r.measure, &y, lambda).unwrap();
                    let (value, t) = trace_decomposition(&gamma, &m).unwrap();
                    prop_assert!(t >= -1e-10);
                    prop_assert!((value - r.divergence).abs() < 1e-8 * (1.0 + r.divergence));
                    let flat = m.q_blocks().iter().any(|q| q[(0, 0)].abs() <= 1e-8);
                    if r.sigma_min_gamma > 1e-8 && !flat {
                        prop_assert!(r.divergence < r.p as f64 - 1e-12);
                    }
                }
            }
            Err(Error::SingularM { .. }) | Err(Error::DegenerateCertificate(_)) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
