//! C ABI over the task suite, trained flow checkpoints and C2ST.
//!
//! Every function returns an [`SbiStatus`]; on failure the message is kept
//! per thread and read with [`sbi_last_error_message`]. Matrices are dense
//! row-major `double` buffers whose sizes the caller provides. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use sbi_forge::diagnostics::{c2st, C2stConfig};
use sbi_forge::flow::FlowModel;
use sbi_forge::summary::Container;
use sbi_forge::tasks::{make_reference_observations, sample_prior, simulate, NUM_REFERENCE_OBSERVATIONS};
use sbi_forge::{Error, Matrix, TaskSpec};

/// Number of fixed reference observations per task.
pub const SBI_NUM_REFERENCE_OBSERVATIONS: usize = 10;
const _: () = assert!(SBI_NUM_REFERENCE_OBSERVATIONS == NUM_REFERENCE_OBSERVATIONS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownTask = 3,
    Io = 4,
    /// Malformed container, manifest, JSON or CSV.
    Format = 5,
    /// Simulator fault, empty posterior or diverged training.
    Numerical = 6,
    /// A panic was caught at the boundary.
    Internal = 7,
}

impl From<&Error> for SbiStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::InsufficientSamples { .. } => SbiStatus::InvalidArgument,
            Error::UnknownTask(_) => SbiStatus::UnknownTask,
            Error::Io(_) | Error::MissingEmbeddings { .. } => SbiStatus::Io,
            Error::BadMagic(_) | Error::TruncatedPayload { .. } | Error::OffsetMismatch(_) | Error::Manifest(_) | Error::Json(_) | Error::Csv(_) => {
                SbiStatus::Format
            }
            Error::SimulatorFault { .. } | Error::EmptyPosterior | Error::TrainingDivergence { .. } => SbiStatus::Numerical,
        }
    }
}

/// A task from the suite.
pub struct SbiTask {
    spec: TaskSpec,
}

/// A trained conditional flow loaded from a checkpoint.
pub struct SbiFlow {
    model: FlowModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SbiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SbiStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SbiStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SbiStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording the message of any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SbiStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_default();
        Err(Failure(SbiStatus::Internal, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SbiStatus::Ok
        }
        Err(Failure(status, msg)) => {
            set_error(msg);
            status
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// `rows * cols`, rejecting sizes that overflow.
fn extent(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols).ok_or_else(|| invalid(format!("buffer of {rows} x {cols} overflows")))
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> Result<Matrix, Failure> {
    Ok(Matrix::from_vec(rows, cols, data.to_vec())?)
}

/// Message of the last failed call on this thread, or null after a
/// successful one. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sbi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Looks up a task by name, e.g. `"ar1_ts_t50"` or
/// `"gaussian_linear_distractors"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sbi_task_new(name: *const c_char, out: *mut *mut SbiTask) -> SbiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = TaskSpec::by_name(str_arg(name, "name")?)?;
        *out = Box::into_raw(Box::new(SbiTask { spec }));
        Ok(())
    })
}

/// # Safety
/// `task` must come from [`sbi_task_new`] and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn sbi_task_free(task: *mut SbiTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// # Safety
/// `task` must be a live handle; `theta_dim` and `x_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn sbi_task_dims(task: *const SbiTask, theta_dim: *mut usize, x_dim: *mut usize) -> SbiStatus {
    guard(|| {
        let t = handle(task, "task")?;
        if theta_dim.is_null() || x_dim.is_null() {
            return Err(null("dimension output"));
        }
        *theta_dim = t.spec.theta_dim;
        *x_dim = t.spec.x_dim;
        Ok(())
    })
}

/// Draws `n` prior samples into `out` (`n * theta_dim`).
///
/// # Safety
/// `task` must be a live handle and `out` hold `n * theta_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sbi_sample_prior(task: *const SbiTask, n: usize, seed: u64, out: *mut f64) -> SbiStatus {
    guard(|| {
        let t = handle(task, "task")?;
        let out = out_slice(out, extent(n, t.spec.theta_dim)?, "out")?;
        out.copy_from_slice(sample_prior(&t.spec, n, seed)?.as_slice());
        Ok(())
    })
}

/// Simulates one observation per row of `theta` (`n * theta_dim`) into `out`
/// (`n * x_dim`).
///
/// # Safety
/// `task` must be a live handle and the buffers sized as described.
#[no_mangle]
pub unsafe extern "C" fn sbi_simulate(task: *const SbiTask, theta: *const f64, n: usize, seed: u64, out: *mut f64) -> SbiStatus {
    guard(|| {
        let t = handle(task, "task")?;
        let th = matrix(n, t.spec.theta_dim, slice_arg(theta, extent(n, t.spec.theta_dim)?, "theta")?)?;
        let out = out_slice(out, extent(n, t.spec.x_dim)?, "out")?;
        out.copy_from_slice(simulate(&t.spec, &th, seed)?.as_slice());
        Ok(())
    })
}

/// Writes reference observation `k` (below [`SBI_NUM_REFERENCE_OBSERVATIONS`])
/// into `theta_out` (`theta_dim`) and `x_out` (`x_dim`).
///
/// # Safety
/// `task` must be a live handle and the buffers sized as described.
#[no_mangle]
pub unsafe extern "C" fn sbi_reference_observations(task: *const SbiTask, k: usize, theta_out: *mut f64, x_out: *mut f64) -> SbiStatus {
    guard(|| {
        let t = handle(task, "task")?;
        if k >= SBI_NUM_REFERENCE_OBSERVATIONS {
            return Err(invalid(format!("observation index {k} out of range")));
        }
        let theta_out = out_slice(theta_out, t.spec.theta_dim, "theta_out")?;
        let x_out = out_slice(x_out, t.spec.x_dim, "x_out")?;
        let obs = make_reference_observations(&t.spec)?;
        theta_out.copy_from_slice(obs.theta.row(k));
        x_out.copy_from_slice(obs.x.row(k));
        Ok(())
    })
}

/// Loads a flow checkpoint (`flow.sbe` or `flow_<i>.sbe` written by the CLI).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sbi_flow_load(path: *const c_char, out: *mut *mut SbiFlow) -> SbiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = Container::read(Path::new(str_arg(path, "path")?))?;
        let model = FlowModel::from_container(&c)?;
        *out = Box::into_raw(Box::new(SbiFlow { model }));
        Ok(())
    })
}

/// # Safety
/// `flow` must come from [`sbi_flow_load`] and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn sbi_flow_free(flow: *mut SbiFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// # Safety
/// `flow` must be a live handle; `theta_dim` and `context_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn sbi_flow_dims(flow: *const SbiFlow, theta_dim: *mut usize, context_dim: *mut usize) -> SbiStatus {
    guard(|| {
        let f = handle(flow, "flow")?;
        if theta_dim.is_null() || context_dim.is_null() {
            return Err(null("dimension output"));
        }
        *theta_dim = f.model.theta_dim();
        *context_dim = f.model.context_dim();
        Ok(())
    })
}

/// Log density of `n` parameter rows (`n * theta_dim`) under one context
/// (`context_dim`), written to `out` (`n`).
///
/// # Safety
/// `flow` must be a live handle and the buffers sized as described.
#[no_mangle]
pub unsafe extern "C" fn sbi_flow_log_prob(flow: *const SbiFlow, theta: *const f64, n: usize, context: *const f64, out: *mut f64) -> SbiStatus {
    guard(|| {
        let f = handle(flow, "flow")?;
        let (d, cd) = (f.model.theta_dim(), f.model.context_dim());
        let th = matrix(n, d, slice_arg(theta, extent(n, d)?, "theta")?)?;
        let ctx = slice_arg(context, cd, "context")?;
        let out = out_slice(out, n, "out")?;
        out.copy_from_slice(&f.model.log_prob_at(&th, ctx)?);
        Ok(())
    })
}

/// Draws `n` samples given one context (`context_dim`) into `out`
/// (`n * theta_dim`).
///
/// # Safety
/// `flow` must be a live handle and the buffers sized as described.
#[no_mangle]
pub unsafe extern "C" fn sbi_flow_sample(flow: *const SbiFlow, context: *const f64, n: usize, seed: u64, out: *mut f64) -> SbiStatus {
    guard(|| {
        let f = handle(flow, "flow")?;
        let ctx = slice_arg(context, f.model.context_dim(), "context")?;
        let out = out_slice(out, extent(n, f.model.theta_dim())?, "out")?;
        out.copy_from_slice(f.model.sample(ctx, n, seed)?.as_slice());
        Ok(())
    })
}

/// Classifier two-sample test accuracy between `p` (`n_p * dim`) and `q`
/// (`n_q * dim`) with the default classifier settings.
///
/// # Safety
/// The input buffers must be sized as described and `accuracy` writable.
#[no_mangle]
pub unsafe extern "C" fn sbi_c2st(p: *const f64, n_p: usize, q: *const f64, n_q: usize, dim: usize, seed: u64, accuracy: *mut f64) -> SbiStatus {
    guard(|| {
        if accuracy.is_null() {
            return Err(null("accuracy"));
        }
        let pm = matrix(n_p, dim, slice_arg(p, extent(n_p, dim)?, "p")?)?;
        let qm = matrix(n_q, dim, slice_arg(q, extent(n_q, dim)?, "q")?)?;
        *accuracy = c2st(&pm, &qm, &C2stConfig { seed, ..C2stConfig::default() })?;
        Ok(())
    })
}
