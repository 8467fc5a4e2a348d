//! Closed-form degrees of freedom of the Blasso estimator `y -> Phi m(y)`.
//!
//! With `Gamma = [Phi_X, Phi_X^(1)]` and
//! `M = Gamma^T Gamma + blockdiag(0_k, Q_1..Q_k)`, `Q_j = -(lambda / beta_j) hess(eta)(x_j)`,
//! the divergence is `tr(Gamma M^{-1} Gamma^T)`.

mod extended_support;
mod matrices;

pub use extended_support::{classify_extended_support, ExtendedSupport, SupportClass};
pub use matrices::{build_gamma, build_m, GammaMatrix, MMatrix};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOLERANCE};
use crate::model::{DiscreteMeasure, ForwardModel};
use crate::solver::prune_to_injective;

/// Condition number above which `M` is treated as singular.
pub const M_CONDITION_LIMIT: f64 = 1e12;

fn invert_checked(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let condition = linalg::condition_number(m);
    if !(condition < M_CONDITION_LIMIT) {
        return Err(Error::SingularM { condition });
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularM { condition: f64::INFINITY })
}

/// `tr(Gamma M^{-1} Gamma^T)`, computed as `tr(Gamma S)` with `M S = Gamma^T`.
pub fn divergence_closed_form(gamma: &GammaMatrix, m: &MMatrix) -> Result<f64> {
    let g = gamma.matrix();
    if g.ncols() == 0 {
        return Ok(0.0);
    }
    if m.matrix().nrows() != g.ncols() {
        return Err(Error::DimensionMismatch { expected: g.ncols(), got: m.matrix().nrows() });
    }
    let condition = linalg::condition_number(m.matrix());
    if !(condition < M_CONDITION_LIMIT) {
        return Err(Error::SingularM { condition });
    }
    let sym = (m.matrix() + m.matrix().transpose()) * 0.5;
    let s = sym.lu().solve(&g.transpose()).ok_or(Error::SingularM { condition: f64::INFINITY })?;
    Ok((g * s).trace())
}

/// `rank(Gamma) - T` with `T = tr(Pi_row(Gamma) blockdiag(0, Q) M^{-1})`. Returns `(value, T)`.
pub fn trace_decomposition(gamma: &GammaMatrix, m: &MMatrix) -> Result<(f64, f64)> {
    let g = gamma.matrix();
    if g.ncols() == 0 {
        return Ok((0.0, 0.0));
    }
    let minv = invert_checked(m.matrix())?;
    let basis = linalg::row_space_basis(g, RANK_TOLERANCE);
    let proj = &basis * basis.transpose();
    let t = (proj * m.curvature_block() * minv).trace();
    Ok((basis.ncols() as f64 - t, t))
}

/// Fourier form `2k - nu`, `nu = sum_j Q_j (M^{-1})_{k+j,k+j}`. Returns `(divergence, nu)`.
pub fn fourier_dof(m: &MMatrix) -> Result<(f64, f64)> {
    let k = m.k();
    if k == 0 {
        return Ok((0.0, 0.0));
    }
    if m.dim() != 1 {
        return Err(Error::InvalidArgument("fourier_dof requires a one-dimensional model".into()));
    }
    let minv = invert_checked(m.matrix())?;
    let nu: f64 = (0..k).map(|j| m.q_blocks()[j][(0, 0)] * minv[(k + j, k + j)]).sum();
    Ok((2.0 * k as f64 - nu, nu))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofReport {
    pub k: usize,
    pub d: usize,
    /// Parameter count `(d + 1) k`.
    pub p: usize,
    pub rank_gamma: usize,
    pub sigma_min_gamma: f64,
    /// Raw closed-form value (not clamped).
    pub divergence: f64,
    pub nu: Option<f64>,
    pub support_class: SupportClass,
    pub flatness_orders: Vec<u32>,
    pub m_min_eigenvalue: f64,
    pub condition_m: f64,
    /// The injective-support measure the report was computed on.
    pub measure: DiscreteMeasure,
}

impl DofReport {
    /// Divergence clamped at zero for display.
    pub fn reported_divergence(&self) -> f64 {
        self.divergence.max(0.0)
    }
}

/// Per-spike orthonormal bases for the position directions that move `phi`.
/// Returns `None` when every direction is informative.
fn tangent_reduction(model: &ForwardModel, measure: &DiscreteMeasure) -> Option<DMatrix<f64>> {
    let k = measure.len();
    let d = model.dim();
    let dirs: Vec<Option<DVector<f64>>> = measure.positions().iter().map(|x| model.invariant_direction(x)).collect();
    if dirs.iter().all(|v| v.is_none()) {
        return None;
    }
    let reduced: usize = dirs.iter().map(|v| if v.is_some() { d - 1 } else { d }).sum();
    let mut t = DMatrix::zeros(k * (d + 1), k + reduced);
    for j in 0..k {
        t[(j, j)] = 1.0;
    }
    let mut col = k;
    for (j, dir) in dirs.iter().enumerate() {
        let block = match dir {
            Some(u) => linalg::complement_basis(u),
            None => DMatrix::identity(d, d),
        };
        t.view_mut((k + j * d, col), (d, block.ncols())).copy_from(&block);
        col += block.ncols();
    }
    Some(t)
}

/// Full degrees-of-freedom report for a Blasso solution.
///
/// The measure is first pruned to an injective support. For models with a
/// direction of invariance (normalized ReLU: `phi(t x) = phi(x)`), `Gamma` and
/// `M` are restricted to the complementary position directions before inversion;
/// `rank_gamma` always refers to the unrestricted `Gamma`.
pub fn dof_report(
    model: &ForwardModel,
    measure: &DiscreteMeasure,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DofReport> {
    let pruned = prune_to_injective(model, measure)?;
    let k = pruned.len();
    let d = model.dim();
    let fitted = model.apply(&pruned)?;
    let cert = crate::model::Certificate::from_residual(y, &fitted, lambda)?;
    let support = if model.as_fourier().is_some() {
        classify_extended_support(&cert, model, extended_support::DEFAULT_CONTACT_TOLERANCE).ok()
    } else {
        None
    };
    let support_class = match (&support, k) {
        (Some(s), _) => s.class,
        (None, 0) => SupportClass::Empty,
        (None, _) => SupportClass::Discrete,
    };
    if k == 0 {
        let divergence = if support_class == SupportClass::FullDomain { model.n() as f64 } else { 0.0 };
        return Ok(DofReport {
            k,
            d,
            p: 0,
            rank_gamma: 0,
            sigma_min_gamma: 0.0,
            divergence,
            nu: model.as_fourier().map(|_| 0.0),
            support_class,
            flatness_orders: Vec::new(),
            m_min_eigenvalue: 0.0,
            condition_m: 1.0,
            measure: pruned,
        });
    }
    let gamma = build_gamma(model, pruned.positions())?;
    let mm = build_m(model, &pruned, y, lambda)?;
    let (m_min, _) = linalg::symmetric_eig_range(mm.matrix());
    let (divergence, nu, condition_m) = match tangent_reduction(model, &pruned) {
        None => {
            let cond = linalg::condition_number(mm.matrix());
            let div = divergence_closed_form(&gamma, &mm)?;
            let nu = if model.as_fourier().is_some() { Some(fourier_dof(&mm)?.1) } else { None };
            (div, nu, cond)
        }
        Some(t) => {
            let g_red = gamma.restricted(&t);
            let m_red = mm.restricted(&t);
            let cond = linalg::condition_number(m_red.matrix());
            (divergence_closed_form(&g_red, &m_red)?, None, cond)
        }
    };
    let flatness_orders = support
        .as_ref()
        .map(|s| s.flatness_orders.clone())
        .unwrap_or_default();
    Ok(DofReport {
        k,
        d,
        p: (d + 1) * k,
        rank_gamma: gamma.rank(),
        sigma_min_gamma: gamma.sigma_min(),
        divergence,
        nu,
        support_class,
        flatness_orders,
        m_min_eigenvalue: m_min,
        condition_m,
        measure: pruned,
    })
}
