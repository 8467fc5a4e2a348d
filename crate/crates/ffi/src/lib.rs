//! C ABI for the `blasso` crate.
//!
//! Models and solutions are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`BlassoStatus`]; on failure a
//! message is available from [`blasso_last_error_message`] on the same thread.
//! Matrices are passed row-major: positions as `k x d`, ReLU weights as `n x d`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use blasso::dof::{dof_report, SupportClass};
use blasso::model::{build_fourier_model, build_relu_model, DiscreteMeasure, ForwardModel};
use blasso::risk::sure_value;
use blasso::solver::{solve_blasso, SolveResult, SolverOptions};
use blasso::Error;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlassoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// `M` is numerically singular: the observation is near the degenerate set.
    SingularM = 4,
    DegenerateCertificate = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlassoSupportClass {
    Empty = 0,
    FullDomain = 1,
    Discrete = 2,
}

/// Opaque forward model.
pub struct BlassoModel {
    inner: ForwardModel,
}

/// Opaque solver output.
pub struct BlassoSolution {
    inner: SolveResult,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlassoSolverOptions {
    pub max_outer_iterations: usize,
    /// Relative duality-gap target (`gap <= tol * |y|^2`).
    pub duality_gap_tolerance: f64,
    pub amplitude_prune_tolerance: f64,
    /// 0 selects the default scan size for the model dimension.
    pub certificate_grid_size: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlassoDofReport {
    pub k: usize,
    pub d: usize,
    /// Parameter count `(d + 1) k`.
    pub p: usize,
    pub rank_gamma: usize,
    pub sigma_min_gamma: f64,
    pub divergence: f64,
    /// NaN for non-Fourier models.
    pub nu: f64,
    pub support_class: BlassoSupportClass,
    pub m_min_eigenvalue: f64,
    pub condition_m: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BlassoStatus {
    match e {
        Error::DimensionMismatch { .. } => BlassoStatus::DimensionMismatch,
        Error::SingularM { .. } => BlassoStatus::SingularM,
        Error::DegenerateCertificate(_) => BlassoStatus::DegenerateCertificate,
        Error::Io(_) => BlassoStatus::Internal,
        _ => BlassoStatus::InvalidArgument,
    }
}

struct Failure(BlassoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BlassoStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording the error message and turning panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BlassoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BlassoStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BlassoStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_ref<'a>(m: *const BlassoModel) -> Result<&'a ForwardModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn solution_ref<'a>(s: *const BlassoSolution) -> Result<&'a SolveResult, Failure> {
    s.as_ref().map(|s| &s.inner).ok_or_else(|| null("solution"))
}

unsafe fn observation(y: *const f64, n: usize, model: &ForwardModel) -> Result<DVector<f64>, Failure> {
    if n != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: n }.into());
    }
    Ok(DVector::from_column_slice(slice(y, n, "y")?))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn blasso_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn blasso_solver_options_default() -> BlassoSolverOptions {
    let d = SolverOptions::default();
    BlassoSolverOptions {
        max_outer_iterations: d.max_outer_iterations,
        duality_gap_tolerance: d.duality_gap_tolerance,
        amplitude_prune_tolerance: d.amplitude_prune_tolerance,
        certificate_grid_size: 0,
        seed: d.seed,
    }
}

fn solver_options(o: &BlassoSolverOptions) -> SolverOptions {
    SolverOptions {
        max_outer_iterations: o.max_outer_iterations,
        duality_gap_tolerance: o.duality_gap_tolerance,
        amplitude_prune_tolerance: o.amplitude_prune_tolerance,
        certificate_grid_size: (o.certificate_grid_size > 0).then_some(o.certificate_grid_size),
        seed: o.seed,
        ..SolverOptions::default()
    }
}

/// Real Fourier features up to frequency `cutoff` (`n = 2 cutoff + 1`).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blasso_model_fourier(cutoff: usize, out: *mut *mut BlassoModel) -> BlassoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(BlassoModel { inner: build_fourier_model(cutoff) }));
        Ok(())
    })
}

/// ReLU features from row-major `n x d` weights. `radius <= 0` selects the default box.
///
/// # Safety
/// `weights` must point to `n * d` doubles and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blasso_model_relu(
    weights: *const f64,
    n: usize,
    d: usize,
    normalize: bool,
    radius: f64,
    out: *mut *mut BlassoModel,
) -> BlassoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 || d == 0 {
            return Err(Failure(BlassoStatus::InvalidArgument, "n and d must be positive".into()));
        }
        let w = slice(weights, n * d, "weights")?;
        let a = DMatrix::from_row_slice(n, d, w);
        let model = build_relu_model(a, normalize, (radius > 0.0).then_some(radius))?;
        *out = Box::into_raw(Box::new(BlassoModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a `blasso_model_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blasso_model_free(model: *mut BlassoModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of measurements `n` (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blasso_model_n(model: *const BlassoModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n())
}

/// Parameter dimension `d` (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blasso_model_dim(model: *const BlassoModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// `y = Phi m` for `k` spikes.
///
/// # Safety
/// `positions` must hold `k * d` doubles, `amplitudes` `k` and `y_out` `n`.
#[no_mangle]
pub unsafe extern "C" fn blasso_model_apply(
    model: *const BlassoModel,
    positions: *const f64,
    amplitudes: *const f64,
    k: usize,
    y_out: *mut f64,
) -> BlassoStatus {
    guard(|| {
        let model = model_ref(model)?;
        let d = model.dim();
        let pos = slice(positions, k * d, "positions")?;
        let amps = slice(amplitudes, k, "amplitudes")?;
        if y_out.is_null() {
            return Err(null("y_out"));
        }
        let m = if k == 0 {
            DiscreteMeasure::zero(d)
        } else {
            DiscreteMeasure::new(pos.chunks(d).map(DVector::from_column_slice).collect(), amps.to_vec())?
        };
        let y = model.apply(&m)?;
        std::slice::from_raw_parts_mut(y_out, y.len()).copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// Solves the Blasso. A non-converged run still returns `Ok` with a handle;
/// check [`blasso_solution_converged`]. `options` may be null for defaults.
///
/// # Safety
/// `y` must hold `n` doubles, `options` must be null or valid, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blasso_solve(
    model: *const BlassoModel,
    y: *const f64,
    n: usize,
    lambda: f64,
    options: *const BlassoSolverOptions,
    out: *mut *mut BlassoSolution,
) -> BlassoStatus {
    guard(|| {
        let model = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = observation(y, n, model)?;
        let opts = options.as_ref().map_or_else(SolverOptions::default, solver_options);
        let res = solve_blasso(model, &y, lambda, &opts)?;
        *out = Box::into_raw(Box::new(BlassoSolution { inner: res }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`blasso_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blasso_solution_free(solution: *mut BlassoSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of spikes (0 for a null handle).
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blasso_solution_len(solution: *const BlassoSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.inner.measure.len())
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blasso_solution_converged(solution: *const BlassoSolution) -> bool {
    solution.as_ref().is_some_and(|s| s.inner.converged)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blasso_solution_duality_gap(solution: *const BlassoSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.inner.duality_gap)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blasso_solution_objective(solution: *const BlassoSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.inner.objective_value)
}

/// Copies the row-major `k x d` positions and the `k` amplitudes. Either output may be null.
///
/// # Safety
/// Non-null outputs must hold `k * d` and `k` doubles respectively.
#[no_mangle]
pub unsafe extern "C" fn blasso_solution_spikes(
    solution: *const BlassoSolution,
    positions_out: *mut f64,
    amplitudes_out: *mut f64,
) -> BlassoStatus {
    guard(|| {
        let s = solution_ref(solution)?;
        let m = &s.measure;
        if !positions_out.is_null() {
            let d = m.dim();
            let out = std::slice::from_raw_parts_mut(positions_out, m.len() * d);
            for (j, x) in m.positions().iter().enumerate() {
                out[j * d..(j + 1) * d].copy_from_slice(x.as_slice());
            }
        }
        if !amplitudes_out.is_null() {
            std::slice::from_raw_parts_mut(amplitudes_out, m.len()).copy_from_slice(m.amplitudes());
        }
        Ok(())
    })
}

/// Degrees-of-freedom report of a solution for the same `y` and `lambda`.
///
/// # Safety
/// Handles must be live, `y` must hold `n` doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blasso_dof_report(
    model: *const BlassoModel,
    solution: *const BlassoSolution,
    y: *const f64,
    n: usize,
    lambda: f64,
    out: *mut BlassoDofReport,
) -> BlassoStatus {
    guard(|| {
        let model = model_ref(model)?;
        let s = solution_ref(solution)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = observation(y, n, model)?;
        let r = dof_report(model, &s.measure, &y, lambda)?;
        *out = BlassoDofReport {
            k: r.k,
            d: r.d,
            p: r.p,
            rank_gamma: r.rank_gamma,
            sigma_min_gamma: r.sigma_min_gamma,
            divergence: r.divergence,
            nu: r.nu.unwrap_or(f64::NAN),
            support_class: match r.support_class {
                SupportClass::Empty => BlassoSupportClass::Empty,
                SupportClass::FullDomain => BlassoSupportClass::FullDomain,
                SupportClass::Discrete => BlassoSupportClass::Discrete,
            },
            m_min_eigenvalue: r.m_min_eigenvalue,
            condition_m: r.condition_m,
        };
        Ok(())
    })
}

/// `SURE = -n sigma^2 + |y - mu_hat|^2 + 2 sigma^2 divergence`.
///
/// # Safety
/// `y` and `mu_hat` must hold `n` doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blasso_sure(
    y: *const f64,
    mu_hat: *const f64,
    n: usize,
    divergence: f64,
    sigma: f64,
    out: *mut f64,
) -> BlassoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(sigma > 0.0) {
            return Err(Failure(BlassoStatus::InvalidArgument, format!("sigma must be positive, got {sigma}")));
        }
        let y = DVector::from_column_slice(slice(y, n, "y")?);
        let mu = DVector::from_column_slice(slice(mu_hat, n, "mu_hat")?);
        *out = sure_value(&y, &mu, divergence, sigma);
        Ok(())
    })
}
