//! Measurement operators `Phi m = int phi(x) dm(x)` built from a smooth feature map.

mod certificate;
mod complex_map;
mod domain;
mod fourier;
mod measure;
mod relu;

use nalgebra::{DMatrix, DVector};

pub use certificate::{certificate_eval, Certificate, CertificateEval};
pub use complex_map::{complex_measurements, complex_real_map, MapDirection};
pub use domain::{DomainSpec, Geometry};
pub use fourier::FourierModel;
pub use measure::{DiscreteMeasure, POSITION_MERGE_TOLERANCE};
pub use relu::{ReluModel, HINGE_PERTURBATION};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// Second derivatives exist everywhere.
    Exact,
    /// Second derivatives exist off a null set (ReLU hinges).
    AlmostEverywhere,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Fourier(FourierModel),
    Relu(ReluModel),
}

/// Immutable measurement model; cheap to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    kind: ModelKind,
    domain: DomainSpec,
}

/// Real Fourier features up to frequency `cutoff` on the 1-D torus.
pub fn build_fourier_model(cutoff: usize) -> ForwardModel {
    ForwardModel {
        kind: ModelKind::Fourier(FourierModel::new(cutoff)),
        domain: DomainSpec::torus(1).expect("dimension 1 is valid"),
    }
}

/// Default half-width of the ReLU parameter box.
pub fn default_relu_radius(dim: usize) -> f64 {
    10.0 * (dim as f64).sqrt()
}

/// ReLU features from an `n x d` weight matrix on the box `[-radius, radius]^d`
/// (`radius` defaults to `10 sqrt(d)`).
pub fn build_relu_model(weights: DMatrix<f64>, normalize: bool, radius: Option<f64>) -> Result<ForwardModel> {
    let relu = ReluModel::new(weights, normalize)?;
    let d = relu.dim();
    let domain = DomainSpec::cube(d, radius.unwrap_or_else(|| default_relu_radius(d)))?;
    Ok(ForwardModel { kind: ModelKind::Relu(relu), domain })
}

impl ForwardModel {
    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn n(&self) -> usize {
        match &self.kind {
            ModelKind::Fourier(f) => f.n(),
            ModelKind::Relu(r) => r.n(),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn smoothness(&self) -> Smoothness {
        match &self.kind {
            ModelKind::Fourier(_) => Smoothness::Exact,
            ModelKind::Relu(_) => Smoothness::AlmostEverywhere,
        }
    }

    pub fn as_fourier(&self) -> Option<&FourierModel> {
        match &self.kind {
            ModelKind::Fourier(f) => Some(f),
            ModelKind::Relu(_) => None,
        }
    }

    pub fn as_relu(&self) -> Option<&ReluModel> {
        match &self.kind {
            ModelKind::Fourier(_) => None,
            ModelKind::Relu(r) => Some(r),
        }
    }

    fn checked(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.domain.check(x)?;
        let mut x = x.clone();
        if self.domain.is_torus() {
            self.domain.project(&mut x);
        }
        Ok(x)
    }

    pub fn feature(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.checked(x)?;
        match &self.kind {
            ModelKind::Fourier(f) => Ok(f.feature(x[0])),
            ModelKind::Relu(r) => r.feature(&x),
        }
    }

    /// `n x d` matrix whose column `i` is `d phi / d x_i`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let x = self.checked(x)?;
        match &self.kind {
            ModelKind::Fourier(f) => Ok(f.jacobian(x[0])),
            ModelKind::Relu(r) => r.jacobian(&x),
        }
    }

    /// Hessian of every output coordinate, `n` matrices of size `d x d`.
    pub fn hessian(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                self.weighted_hessian(x, &e)
            })
            .collect()
    }

    /// `sum_i w_i hess(phi_i)(x)`.
    pub fn weighted_hessian(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DMatrix<f64>> {
        if w.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: w.len() });
        }
        let x = self.checked(x)?;
        match &self.kind {
            ModelKind::Fourier(f) => Ok(DMatrix::from_element(1, 1, f.certificate_derivative(x[0], w, 2))),
            ModelKind::Relu(r) => r.weighted_hessian(&x, w),
        }
    }

    /// `Phi_X`, the `n x k` matrix with columns `phi(x_j)`.
    pub fn design(&self, positions: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n(), positions.len());
        for (j, x) in positions.iter().enumerate() {
            out.set_column(j, &self.feature(x)?);
        }
        Ok(out)
    }

    /// `Phi m = sum_j beta_j phi(x_j)`.
    pub fn apply(&self, measure: &DiscreteMeasure) -> Result<DVector<f64>> {
        if !measure.is_empty() && measure.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: measure.dim() });
        }
        let mut out = DVector::zeros(self.n());
        for (x, b) in measure.positions().iter().zip(measure.amplitudes()) {
            out.axpy(*b, &self.feature(x)?, 1.0);
        }
        Ok(out)
    }

    /// Unit direction along which `phi` is locally constant at `x`, if any.
    pub fn invariant_direction(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.kind {
            ModelKind::Fourier(_) => None,
            ModelKind::Relu(r) => r.invariant_direction(x),
        }
    }

    /// Brings `x` into the domain. Normalized ReLU positions are moved to the unit
    /// sphere, which leaves `phi(x)` unchanged.
    pub fn canonicalize(&self, x: &mut DVector<f64>) {
        if let ModelKind::Relu(r) = &self.kind {
            if r.normalized() {
                let nrm = x.norm();
                if nrm > 0.0 {
                    *x /= nrm;
                }
            }
        }
        self.domain.project(x);
    }
}

/// Measurement of a measure; free-function alias of [`ForwardModel::apply`].
pub fn apply_forward(model: &ForwardModel, measure: &DiscreteMeasure) -> Result<DVector<f64>> {
    model.apply(measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn fd_jacobian(model: &ForwardModel, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(model.n(), model.dim());
        for i in 0..model.dim() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let col = (model.feature(&xp).unwrap() - model.feature(&xm).unwrap()) / (2.0 * h);
            j.set_column(i, &col);
        }
        j
    }

    fn fd_weighted_hessian(model: &ForwardModel, x: &DVector<f64>, w: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let d = model.dim();
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let gp = model.jacobian(&xp).unwrap().transpose() * w;
            let gm = model.jacobian(&xm).unwrap().transpose() * w;
            out.set_column(i, &((gp - gm) / (2.0 * h)));
        }
        out
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-12)
    }

    fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn fourier_derivatives_match_finite_differences() {
        let model = build_fourier_model(6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = DVector::from_element(1, rng.random::<f64>() * 0.9 + 0.05);
            let w = DVector::from_fn(model.n(), |_, _| rng.sample(StandardNormal));
            assert!(rel_err(&model.jacobian(&x).unwrap(), &fd_jacobian(&model, &x, 1e-6)) < 1e-5);
            let h = model.weighted_hessian(&x, &w).unwrap();
            assert!(rel_err(&h, &fd_weighted_hessian(&model, &x, &w, 1e-6)) < 1e-5);
        }
    }

    #[test]
    fn relu_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for normalize in [false, true] {
            let model = build_relu_model(gaussian_matrix(&mut rng, 30, 4), normalize, None).unwrap();
            for _ in 0..20 {
                let x = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
                // stay away from hinges so that the difference stencil does not cross one
                let pre = model.as_relu().unwrap().weights() * &x;
                if pre.iter().any(|v| v.abs() < 1e-3) {
                    continue;
                }
                let w = DVector::from_fn(model.n(), |_, _| rng.sample(StandardNormal));
                assert!(rel_err(&model.jacobian(&x).unwrap(), &fd_jacobian(&model, &x, 1e-6)) < 1e-5);
                if normalize {
                    let h = model.weighted_hessian(&x, &w).unwrap();
                    assert!(rel_err(&h, &fd_weighted_hessian(&model, &x, &w, 1e-6)) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn per_coordinate_hessians_sum_to_weighted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = build_relu_model(gaussian_matrix(&mut rng, 12, 3), true, None).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.9]);
        let w = DVector::from_fn(12, |_, _| rng.sample(StandardNormal));
        let hs = model.hessian(&x).unwrap();
        let summed = hs.iter().zip(w.iter()).fold(DMatrix::zeros(3, 3), |acc, (h, wi)| acc + h * *wi);
        assert!(rel_err(&summed, &model.weighted_hessian(&x, &w).unwrap()) < 1e-12);
    }

    #[test]
    fn relu_paper_scale_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = build_relu_model(gaussian_matrix(&mut rng, 500, 50), true, None).unwrap();
        assert_eq!((model.n(), model.dim()), (500, 50));
        for _ in 0..100 {
            let x = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal));
            assert!((model.feature(&x).unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_forward_basics() {
        let model = build_fourier_model(10);
        assert_eq!(model.apply(&DiscreteMeasure::zero(1)).unwrap(), DVector::zeros(21));
        let single = DiscreteMeasure::from_1d(&[0.3], &[1.0]).unwrap();
        let x = DVector::from_element(1, 0.3);
        assert_eq!(model.apply(&single).unwrap(), model.feature(&x).unwrap());
        let m = DiscreteMeasure::from_1d(&[0.1, 0.6, 0.9], &[2.0, -4.5, 4.0]).unwrap();
        assert!((model.apply(&m).unwrap()[0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn apply_forward_rejects_outside_box() {
        let model = build_relu_model(DMatrix::identity(2, 2), false, Some(1.0)).unwrap();
        let m = DiscreteMeasure::new(vec![DVector::from_vec(vec![2.0, 0.5])], vec![1.0]).unwrap();
        assert!(matches!(model.apply(&m), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn canonicalize_keeps_normalized_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = build_relu_model(gaussian_matrix(&mut rng, 10, 3), true, None).unwrap();
        let x = DVector::from_vec(vec![3.0, -4.0, 12.0]);
        let mut y = x.clone();
        model.canonicalize(&mut y);
        assert!((y.norm() - 1.0).abs() < 1e-15);
        assert!((model.feature(&x).unwrap() - model.feature(&y).unwrap()).norm() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fourier_feature_norm(x in 0.0f64..1.0, fc in 0usize..15) {
                let model = build_fourier_model(fc);
                let f = model.feature(&DVector::from_element(1, x)).unwrap();
                prop_assert!((f.norm_squared() - (2 * fc + 1) as f64).abs() < 1e-12);
            }

            #[test]
            fn forward_is_additive(
                a in proptest::collection::vec((0.0f64..0.5, -5.0f64..5.0), 0..5),
                b in proptest::collection::vec((0.5f64..1.0, -5.0f64..5.0), 0..5),
            ) {
                let model = build_fourier_model(5);
                let to_measure = |v: &[(f64, f64)]| {
                    let xs: Vec<f64> = v.iter().map(|p| p.0).collect();
                    let bs: Vec<f64> = v.iter().map(|p| p.1).collect();
                    DiscreteMeasure::from_1d(&xs, &bs).unwrap()
                };
                let (ma, mb) = (to_measure(&a), to_measure(&b));
                let lhs = model.apply(&ma).unwrap() + model.apply(&mb).unwrap();
                let rhs = model.apply(&ma.union(&mb).unwrap()).unwrap();
                prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + model.apply(&ma).unwrap().norm()));
            }
        }
    }
}
