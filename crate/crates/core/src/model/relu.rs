//! Single-hidden-layer ReLU features `phi~(x) = (max(0, <a_j, x>))_j`, optionally normalized
//! to the unit sphere. Derivatives are exact away from the hinge hyperplanes `<a_j, x> = 0`;
//! the ReLU derivative is taken to be 0 on a hinge.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Offset applied to points landing exactly on a hinge hyperplane.
pub const HINGE_PERTURBATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReluModel {
    weights: DMatrix<f64>,
    normalize: bool,
}

pub(crate) struct ReluEval {
    pub act: DVector<f64>,
    /// Jacobian of the unnormalized activations (rows `a_j` where active, zero elsewhere).
    pub jac: DMatrix<f64>,
}

impl ReluModel {
    pub fn new(weights: DMatrix<f64>, normalize: bool) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::InvalidArgument("ReLU weight matrix must be non-empty".into()));
        }
        for (j, row) in weights.row_iter().enumerate() {
            if row.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidArgument(format!("ReLU weight row {j} is zero")));
            }
        }
        Ok(Self { weights, normalize })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn normalized(&self) -> bool {
        self.normalize
    }

    pub(crate) fn eval(&self, x: &DVector<f64>) -> ReluEval {
        let mut pre = &self.weights * x;
        if pre.iter().any(|v| *v == 0.0) {
            // Nudge off the hinge along the first offending row.
            let j = pre.iter().position(|v| *v == 0.0).unwrap();
            let a = self.weights.row(j).transpose();
            let shifted = x + a.scale(HINGE_PERTURBATION / a.norm());
            log::warn!("ReLU evaluation on a hinge hyperplane; perturbing by {HINGE_PERTURBATION:e}");
            pre = &self.weights * shifted;
        }
        let act = pre.map(|v| v.max(0.0));
        let mut jac = self.weights.clone();
        for (j, v) in pre.iter().enumerate() {
            if *v <= 0.0 {
                jac.row_mut(j).fill(0.0);
            }
        }
        ReluEval { act, jac }
    }

    fn norm_checked(&self, e: &ReluEval, x: &DVector<f64>) -> Result<f64> {
        let nrm = e.act.norm();
        if nrm == 0.0 {
            return Err(Error::DegenerateFeature { position: x.iter().copied().collect() });
        }
        Ok(nrm)
    }

    pub fn feature(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let e = self.eval(x);
        if !self.normalize {
            return Ok(e.act);
        }
        let nrm = self.norm_checked(&e, x)?;
        Ok(e.act / nrm)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = self.eval(x);
        if !self.normalize {
            return Ok(e.jac);
        }
        let nrm = self.norm_checked(&e, x)?;
        let phi = &e.act / nrm;
        // (I - phi phi^T) J~ / N
        let proj = phi.transpose() * &e.jac;
        Ok((&e.jac - &phi * proj) / nrm)
    }

    /// `sum_i p_i hess(phi_i)(x)`.
    pub fn weighted_hessian(&self, x: &DVector<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if !self.normalize {
            return Ok(DMatrix::zeros(d, d));
        }
        let e = self.eval(x);
        let nrm = self.norm_checked(&e, x)?;
        let n2 = nrm * nrm;
        let n3 = n2 * nrm;
        let g = e.jac.transpose() * &e.act / nrm;
        let c = e.jac.transpose() * p;
        let up = e.act.dot(p);
        let jtj = e.jac.transpose() * &e.jac;
        let ggt = &g * g.transpose();
        let cross = &c * g.transpose() + &g * c.transpose();
        Ok(-cross / n2 - jtj * (up / n3) + ggt * (3.0 * up / n3))
    }

    /// Direction along which the normalized feature map is constant (the ray through `x`).
    pub fn invariant_direction(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        if self.normalize && x.norm() > 0.0 {
            Some(x.normalize())
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(normalize: bool) -> ReluModel {
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 1.0, 0.7, -1.2]);
        ReluModel::new(w, normalize).unwrap()
    }

    #[test]
    fn zero_row_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(ReluModel::new(w, false).is_err());
    }

    #[test]
    fn all_inactive_gives_zero_or_error() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let x = DVector::from_vec(vec![-1.0, -2.0]);
        let m = ReluModel::new(w.clone(), false).unwrap();
        assert_eq!(m.feature(&x).unwrap(), DVector::zeros(2));
        let m = ReluModel::new(w, true).unwrap();
        assert!(matches!(m.feature(&x), Err(Error::DegenerateFeature { .. })));
    }

    #[test]
    fn normalized_feature_has_unit_norm() {
        let m = model(true);
        let x = DVector::from_vec(vec![0.4, 0.9]);
        assert!((m.feature(&x).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn radial_invariance() {
        let m = model(true);
        let x = DVector::from_vec(vec![0.4, 0.9]);
        let f1 = m.feature(&x).unwrap();
        let f2 = m.feature(&(&x * 3.7)).unwrap();
        assert!((f1 - f2).norm() < 1e-14);
        let j = m.jacobian(&x).unwrap();
        assert!((j * &x).norm() < 1e-13);
    }

    #[test]
    fn hinge_is_perturbed() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let m = ReluModel::new(w, false).unwrap();
        let f = m.feature(&DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!(f[0] > 0.0 && f[0] < 1e-11);
    }
}
