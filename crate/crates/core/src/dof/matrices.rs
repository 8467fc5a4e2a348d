use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOLERANCE};
use crate::model::{DiscreteMeasure, ForwardModel};

/// `Gamma_X = [Phi_X, Phi_X^(1)]`: the `k` feature columns followed by `k d`
/// derivative columns grouped per spike.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrix {
    matrix: DMatrix<f64>,
    k: usize,
}

impl GammaMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        linalg::rank(&self.matrix, RANK_TOLERANCE)
    }

    pub fn sigma_min(&self) -> f64 {
        linalg::sigma_min(&self.matrix)
    }

    /// `Gamma T` for a change of variables `T` on the parameter side.
    pub fn restricted(&self, t: &DMatrix<f64>) -> GammaMatrix {
        GammaMatrix { matrix: &self.matrix * t, k: self.k }
    }
}

pub fn build_gamma(model: &ForwardModel, positions: &[DVector<f64>]) -> Result<GammaMatrix> {
    let k = positions.len();
    let d = model.dim();
    let mut matrix = DMatrix::zeros(model.n(), k * (d + 1));
    for (j, x) in positions.iter().enumerate() {
        matrix.set_column(j, &model.feature(x)?);
        let jac = model.jacobian(x)?;
        matrix.view_mut((0, k + j * d), (model.n(), d)).copy_from(&jac);
    }
    Ok(GammaMatrix { matrix, k })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMatrix {
    matrix: DMatrix<f64>,
    curvature: DMatrix<f64>,
    q_blocks: Vec<DMatrix<f64>>,
    k: usize,
    d: usize,
}

impl MMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `Q_j = -(lambda / beta_j) hess(eta)(x_j)`.
    pub fn q_blocks(&self) -> &[DMatrix<f64>] {
        &self.q_blocks
    }

    /// `Z_j = beta_j Q_j = -lambda hess(eta)(x_j)`.
    pub fn z_blocks(&self, amplitudes: &[f64]) -> Vec<DMatrix<f64>> {
        self.q_blocks.iter().zip(amplitudes).map(|(q, b)| q * *b).collect()
    }

    /// `blockdiag(0_k, Q_1, ..., Q_k)`.
    pub fn curvature_block(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::symmetric_eig_range(&self.matrix).0
    }

    /// `T^T M T`.
    pub fn restricted(&self, t: &DMatrix<f64>) -> MMatrix {
        MMatrix {
            matrix: t.transpose() * &self.matrix * t,
            curvature: t.transpose() * &self.curvature * t,
            q_blocks: self.q_blocks.clone(),
            k: self.k,
            d: self.d,
        }
    }
}

/// `M = Gamma^T Gamma + blockdiag(0_k, Q_1..Q_k)` for the certificate of `(measure, y, lambda)`.
pub fn build_m(model: &ForwardModel, measure: &DiscreteMeasure, y: &DVector<f64>, lambda: f64) -> Result<MMatrix> {
    let k = measure.len();
    let d = model.dim();
    if k == 0 {
        return Ok(MMatrix {
            matrix: DMatrix::zeros(0, 0),
            curvature: DMatrix::zeros(0, 0),
            q_blocks: Vec::new(),
            k,
            d,
        });
    }
    if measure.amplitudes().iter().any(|b| *b == 0.0) {
        return Err(Error::InvalidArgument("M requires nonzero amplitudes".into()));
    }
    let gamma = build_gamma(model, measure.positions())?;
    let p = (y - model.apply(measure)?) / lambda;
    let mut curvature = DMatrix::zeros(k * (d + 1), k * (d + 1));
    let mut q_blocks = Vec::with_capacity(k);
    for (j, (x, b)) in measure.positions().iter().zip(measure.amplitudes()).enumerate() {
        let q = model.weighted_hessian(x, &p)? * (-lambda / b);
        let q = (&q + q.transpose()) * 0.5;
        curvature.view_mut((k + j * d, k + j * d), (d, d)).copy_from(&q);
        q_blocks.push(q);
    }
    let g = gamma.matrix();
    let matrix = g.transpose() * g + &curvature;
    Ok(MMatrix { matrix, curvature, q_blocks, k, d })
}
