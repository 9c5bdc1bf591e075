//! C ABI over the matrix scaling solvers: opaque handles, status codes,
//! and plain-old-data accessors. The header is generated by cbindgen into
//! include/rcscale.h at build time.

use rcscale::cli::{run, Method, RunConfig};
use rcscale::problem::{check_asymptotic_scalability, Feasibility, ScalingInstance};
use rcscale::sparse::CsrMatrix;
use rcscale::trace::SolveStatus;
use rcscale::ScaleError;
use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleStatus {
    Ok = 0,
    InvalidArgument = 1,
    Infeasible = 2,
    IterationCapReached = 3,
    NumericalError = 4,
    InternalPanic = 5,
}

/// Solver selector mirroring the CLI methods.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMethod {
    Ras = 0,
    Scaling0 = 1,
    Scaling1 = 2,
    Scaling2 = 3,
    Scaling3 = 4,
    Auto = 5,
}

/// Opaque validated problem instance.
pub struct ScaleInstanceHandle {
    inner: ScalingInstance,
}

/// Opaque solve result.
pub struct ScaleSolutionHandle {
    x: Vec<f64>,
    f: f64,
    potential: f64,
    row_err: f64,
    iterations: usize,
    converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg.into());
}

fn status_of(err: &ScaleError) -> ScaleStatus {
    match err {
        ScaleError::Infeasible => ScaleStatus::Infeasible,
        ScaleError::NotConverged(_) => ScaleStatus::NumericalError,
        ScaleError::NonFinite(_) => ScaleStatus::NumericalError,
        _ => ScaleStatus::InvalidArgument,
    }
}

/// Copy the last error message (NUL-terminated, truncated to `cap`).
/// Returns the full length of the message in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (then only the
/// length is returned).
#[no_mangle]
pub unsafe extern "C" fn rcscale_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Build an instance from triplet data (0-based indices). `r` has length
/// `d`, `c` length `n`; rows are normalized internally.
///
/// # Safety
/// All pointers must be valid for the stated lengths; `out` must be a
/// valid location for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rcscale_instance_new(
    d: usize,
    n: usize,
    nnz: usize,
    row_idx: *const usize,
    col_idx: *const usize,
    values: *const f64,
    r: *const u64,
    c: *const u64,
    out: *mut *mut ScaleInstanceHandle,
) -> ScaleStatus {
    if out.is_null()
        || row_idx.is_null()
        || col_idx.is_null()
        || values.is_null()
        || r.is_null()
        || c.is_null()
    {
        set_error("null pointer argument");
        return ScaleStatus::InvalidArgument;
    }
    let rows = std::slice::from_raw_parts(row_idx, nnz);
    let cols = std::slice::from_raw_parts(col_idx, nnz);
    let vals = std::slice::from_raw_parts(values, nnz);
    let r = std::slice::from_raw_parts(r, d).to_vec();
    let c = std::slice::from_raw_parts(c, n).to_vec();
    let triplets: Vec<(usize, usize, f64)> =
        rows.iter().zip(cols).zip(vals).map(|((&i, &j), &v)| (i, j, v)).collect();
    let built = catch_unwind(AssertUnwindSafe(|| {
        let a = CsrMatrix::from_triplets(d, n, triplets)?;
        ScalingInstance::from_raw(a, r, c).map(|(inst, _)| inst)
    }));
    match built {
        Ok(Ok(inner)) => {
            *out = Box::into_raw(Box::new(ScaleInstanceHandle { inner }));
            ScaleStatus::Ok
        }
        Ok(Err(err)) => {
            set_error(err.to_string());
            status_of(&err)
        }
        Err(_) => {
            set_error("internal panic");
            ScaleStatus::InternalPanic
        }
    }
}

/// # Safety
/// `handle` must come from `rcscale_instance_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rcscale_instance_free(handle: *mut ScaleInstanceHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Asymptotic (r,c)-scalability; writes 1 or 0 into `out_scalable`.
///
/// # Safety
/// `handle` and `out_scalable` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rcscale_check_feasible(
    handle: *const ScaleInstanceHandle,
    out_scalable: *mut i32,
) -> ScaleStatus {
    if handle.is_null() || out_scalable.is_null() {
        set_error("null pointer argument");
        return ScaleStatus::InvalidArgument;
    }
    let verdict = check_asymptotic_scalability(&(*handle).inner);
    *out_scalable = matches!(verdict.status, Feasibility::AsymptoticallyScalable) as i32;
    ScaleStatus::Ok
}

/// Solve to accuracy `eps` with the chosen method. `n_bound <= 0` selects
/// the automatic diameter bound.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solve(
    handle: *const ScaleInstanceHandle,
    method: ScaleMethod,
    eps: f64,
    n_bound: f64,
    out: *mut *mut ScaleSolutionHandle,
) -> ScaleStatus {
    if handle.is_null() || out.is_null() {
        set_error("null pointer argument");
        return ScaleStatus::InvalidArgument;
    }
    if !(eps > 0.0 && eps.is_finite()) {
        set_error("eps must be positive and finite");
        return ScaleStatus::InvalidArgument;
    }
    let inst = &(*handle).inner;
    let mut config = RunConfig::new(
        match method {
            ScaleMethod::Ras => Method::Ras,
            ScaleMethod::Scaling0 => Method::S0,
            ScaleMethod::Scaling1 => Method::S1,
            ScaleMethod::Scaling2 => Method::S2,
            ScaleMethod::Scaling3 => Method::S3,
            ScaleMethod::Auto => Method::Auto,
        },
        eps,
    );
    if n_bound > 0.0 {
        config.n_override = Some(n_bound);
    }
    let outcome = catch_unwind(AssertUnwindSafe(|| run(inst, &config)));
    match outcome {
        Ok(Ok(res)) => {
            let sol = ScaleSolutionHandle {
                f: res.final_f,
                potential: res.report.col_potential,
                row_err: res.report.row_err,
                iterations: res.trace.iterations(),
                converged: res.status == SolveStatus::Converged,
                x: res.x,
            };
            *out = Box::into_raw(Box::new(sol));
            ScaleStatus::Ok
        }
        Ok(Err(err)) => {
            set_error(err.to_string());
            status_of(&err)
        }
        Err(_) => {
            set_error("internal panic");
            ScaleStatus::InternalPanic
        }
    }
}

/// # Safety
/// `sol` must come from `rcscale_solve` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_free(sol: *mut ScaleSolutionHandle) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Length of the scaling vector x.
///
/// # Safety
/// `sol` must be a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_dim(sol: *const ScaleSolutionHandle) -> usize {
    if sol.is_null() {
        return 0;
    }
    (*sol).x.len()
}

/// Copy the log-domain column scaling vector into `buf`.
///
/// # Safety
/// `buf` must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_x(
    sol: *const ScaleSolutionHandle,
    buf: *mut f64,
    len: usize,
) -> ScaleStatus {
    if sol.is_null() || buf.is_null() || len < (*sol).x.len() {
        set_error("bad buffer for solution vector");
        return ScaleStatus::InvalidArgument;
    }
    std::ptr::copy_nonoverlapping((*sol).x.as_ptr(), buf, (*sol).x.len());
    ScaleStatus::Ok
}

/// # Safety
/// `sol` must be a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_objective(sol: *const ScaleSolutionHandle) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).f
}

/// Gradient potential ||grad f||^2_{c^-1} at the solution.
///
/// # Safety
/// `sol` must be a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_potential(sol: *const ScaleSolutionHandle) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).potential
}

/// Maximum row-sum error of the scaled matrix.
///
/// # Safety
/// `sol` must be a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_row_err(sol: *const ScaleSolutionHandle) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).row_err
}

/// # Safety
/// `sol` must be a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_iterations(sol: *const ScaleSolutionHandle) -> usize {
    if sol.is_null() {
        return 0;
    }
    (*sol).iterations
}

/// 1 when the run met its potential threshold.
///
/// # Safety
/// `sol` must be a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn rcscale_solution_converged(sol: *const ScaleSolutionHandle) -> i32 {
    if sol.is_null() {
        return 0;
    }
    (*sol).converged as i32
}
