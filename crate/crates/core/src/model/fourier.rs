//! Real trigonometric features on the 1-D torus.
//!
//! Feature layout: `(1, sqrt2 sin(2 pi l x) for l = 1..=fc, sqrt2 cos(2 pi l x) for l = 1..=fc)`,
//! so `n = 2 fc + 1` and `|phi(x)|^2 = n` for every `x`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct FourierModel {
    cutoff: usize,
}

impl FourierModel {
    pub fn new(cutoff: usize) -> Self {
        Self { cutoff }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn n(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub(crate) fn sin_index(&self, l: usize) -> usize {
        l
    }

    pub(crate) fn cos_index(&self, l: usize) -> usize {
        self.cutoff + l
    }

    pub fn feature(&self, x: f64) -> DVector<f64> {
        self.derivative_feature(x, 0)
    }

    /// `order`-th derivative of the feature map with respect to the position.
    pub fn derivative_feature(&self, x: f64, order: u32) -> DVector<f64> {
        let fc = self.cutoff;
        let mut out = DVector::zeros(self.n());
        out[0] = if order == 0 { 1.0 } else { 0.0 };
        let shift = order as f64 * PI / 2.0;
        for l in 1..=fc {
            let w = 2.0 * PI * l as f64;
            let scale = SQRT_2 * w.powi(order as i32);
            let theta = w * x + shift;
            out[self.sin_index(l)] = scale * theta.sin();
            out[self.cos_index(l)] = scale * theta.cos();
        }
        out
    }

    pub fn jacobian(&self, x: f64) -> DMatrix<f64> {
        let d1 = self.derivative_feature(x, 1);
        DMatrix::from_column_slice(self.n(), 1, d1.as_slice())
    }

    /// `order`-th derivative of the trigonometric polynomial `eta(x) = <phi(x), p>`.
    pub fn certificate_derivative(&self, x: f64, p: &DVector<f64>, order: u32) -> f64 {
        self.derivative_feature(x, order).dot(p)
    }

    /// Upper bound on `sup_x |eta^{(order)}(x)|`, used as a scale for flatness tests.
    pub fn derivative_scale(&self, p: &DVector<f64>, order: u32) -> f64 {
        let fc = self.cutoff;
        let mut s = if order == 0 { p[0].abs() } else { 0.0 };
        for l in 1..=fc {
            let w = (2.0 * PI * l as f64).powi(order as i32);
            s += SQRT_2 * w * (p[self.sin_index(l)].hypot(p[self.cos_index(l)]));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cutoff_is_constant() {
        let m = FourierModel::new(0);
        assert_eq!(m.n(), 1);
        assert_eq!(m.feature(0.37).as_slice(), &[1.0]);
    }

    #[test]
    fn cutoff_one_at_origin() {
        let f = FourierModel::new(1).feature(0.0);
        assert_eq!(f[0], 1.0);
        assert!(f[1].abs() < 1e-15);
        assert!((f[2] - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cutoff_ten_has_21_measurements() {
        assert_eq!(FourierModel::new(10).n(), 21);
    }

    #[test]
    fn squared_norm_is_constant() {
        let m = FourierModel::new(7);
        for i in 0..50 {
            let x = i as f64 * 0.0731;
            assert!((m.feature(x).norm_squared() - 15.0).abs() < 1e-12);
        }
    }
}
