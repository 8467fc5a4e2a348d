//! Beurling Lasso (Blasso) over discrete measures.
//!
//! * [`model`]: measurement operators (Fourier on the torus, ReLU features) and certificates.
//! * [`solver`]: sliding Frank-Wolfe, finite Lasso on a support, support pruning.
//! * [`dof`]: closed-form divergence `tr(Gamma M^{-1} Gamma^T)` and its Fourier specialization.
//! * [`risk`]: SURE, finite-difference / Monte-Carlo divergence oracles, risk sweeps.
//! * [`gridlasso`]: discrete grid Lasso baseline.
//! * [`cli`]: configuration, CSV/SVG output and the command implementations.

pub mod cli;
pub mod dof;
pub mod error;
pub mod gridlasso;
pub mod linalg;
pub mod model;
pub mod risk;
pub mod solver;

pub use error::{Error, Result};
