use nalgebra::{DMatrix, DVector};

use super::ForwardModel;
use crate::error::{Error, Result};

/// Dual vector `p` together with the function `eta(x) = <phi(x), p>` it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    dual: DVector<f64>,
    lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Certificate {
    pub fn new(dual: DVector<f64>, lambda: f64) -> Self {
        Self { dual, lambda }
    }

    /// `p = (y - Phi m) / lambda`.
    pub fn from_residual(y: &DVector<f64>, fitted: &DVector<f64>, lambda: f64) -> Result<Self> {
        if y.len() != fitted.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: fitted.len() });
        }
        Ok(Self { dual: (y - fitted) / lambda, lambda })
    }

    pub fn dual(&self) -> &DVector<f64> {
        &self.dual
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn check_model(&self, model: &ForwardModel) -> Result<()> {
        if model.n() != self.dual.len() {
            return Err(Error::DimensionMismatch { expected: model.n(), got: self.dual.len() });
        }
        Ok(())
    }

    pub fn value(&self, model: &ForwardModel, x: &DVector<f64>) -> Result<f64> {
        self.check_model(model)?;
        Ok(model.feature(x)?.dot(&self.dual))
    }

    pub fn gradient(&self, model: &ForwardModel, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_model(model)?;
        Ok(model.jacobian(x)?.transpose() * &self.dual)
    }

    /// Value, gradient `grad phi(x)^T p` and Hessian `sum_i p_i hess(phi_i)(x)`.
    pub fn eval(&self, model: &ForwardModel, x: &DVector<f64>) -> Result<CertificateEval> {
        self.check_model(model)?;
        Ok(CertificateEval {
            value: model.feature(x)?.dot(&self.dual),
            gradient: model.jacobian(x)?.transpose() * &self.dual,
            hessian: model.weighted_hessian(x, &self.dual)?,
        })
    }
}

/// Free-function form of [`Certificate::eval`].
pub fn certificate_eval(cert: &Certificate, model: &ForwardModel, x: &DVector<f64>) -> Result<CertificateEval> {
    cert.eval(model, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fourier_model, build_relu_model};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_dual_gives_zero_eval() {
        let model = build_fourier_model(4);
        let cert = Certificate::new(DVector::zeros(9), 1.0);
        let e = cert.eval(&model, &DVector::from_element(1, 0.42)).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.gradient, DVector::zeros(1));
        assert_eq!(e.hessian, DMatrix::zeros(1, 1));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fourier = build_fourier_model(10);
        let relu = build_relu_model(DMatrix::from_fn(40, 3, |_, _| rng.sample(StandardNormal)), true, None).unwrap();
        for model in [&fourier, &relu] {
            let cert = Certificate::new(DVector::from_fn(model.n(), |_, _| rng.sample(StandardNormal)), 0.5);
            for _ in 0..10 {
                let x = if model.domain().is_torus() {
                    DVector::from_element(1, 0.05 + 0.9 * rng.random::<f64>())
                } else {
                    DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal))
                };
                let g = cert.gradient(model, &x).unwrap();
                let h = 1e-6;
                let fd = DVector::from_fn(x.len(), |i, _| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    (cert.value(model, &xp).unwrap() - cert.value(model, &xm).unwrap()) / (2.0 * h)
                });
                assert!((&g - &fd).norm() <= 1e-4 * fd.norm().max(1e-8), "{g} vs {fd}");
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let model = build_fourier_model(2);
        let cert = Certificate::new(DVector::zeros(3), 1.0);
        assert!(cert.value(&model, &DVector::from_element(1, 0.1)).is_err());
    }
}
