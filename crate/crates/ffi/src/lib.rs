//! C interface to `smoothopt`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` functions
//! and released by the matching `*_free`. Every fallible function returns a
//! [`SmoothoptStatus`]; on failure a description is available from
//! [`smoothopt_last_error`] on the same thread.
//!
//! Pointers passed in must be valid for the stated lengths. Objective
//! callbacks are invoked only from the thread that called the minimizer.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use smoothopt::continuation::{successive_smoothing, ContinuationResult, SmoothingPlan};
use smoothopt::harness::registry::{instance, Instance};
use smoothopt::harness::run::{execute, load};
use smoothopt::harness::HarnessError;
use smoothopt::penalty::{FeasibleSet, PenaltyKind, PenaltySpec, Penalized};
use smoothopt::problems::DiameterPenalty;
use smoothopt::smoothing::KernelKind;
use smoothopt::{Error, Objective};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// The objective returned NaN or an infinity.
    Evaluation = 4,
    /// A projection produced an infeasible point.
    ContractViolation = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Smoothing kernel selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothoptKernel {
    Ball = 0,
    Gaussian = 1,
}

/// Geometric smoothing plan: `stages` widths from `h0` with ratio `decay`,
/// `iterations` steps of batch `batch` per stage.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothoptPlanParams {
    pub h0: f64,
    pub decay: f64,
    pub stages: usize,
    pub iterations: usize,
    pub batch: usize,
    /// Ravine extrapolation coefficient.
    pub beta: f64,
    pub kernel: SmoothoptKernel,
    /// Step rule constants; zero means the diameter of the region and 1.
    pub d: f64,
    pub l: f64,
}

/// Objective callback: value at `x[0..n]`.
pub type SmoothoptObjective = Option<unsafe extern "C" fn(x: *const f64, n: usize, user: *mut c_void) -> f64>;

/// A feasible set (box, ball or box cut by a half-space).
pub struct SmoothoptSet {
    inner: FeasibleSet,
}

/// A registered problem.
pub struct SmoothoptProblem {
    inner: Instance,
}

/// Outcome of a minimization.
pub struct SmoothoptResult {
    inner: ContinuationResult,
    /// Best value in the problem's own sense.
    natural_best: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn lib_status(e: &Error) -> SmoothoptStatus {
    if e.is_evaluation() {
        return SmoothoptStatus::Evaluation;
    }
    let mut e = e;
    while let Error::AtStage { source, .. } | Error::AtIteration { source, .. } = e {
        e = source;
    }
    match e {
        Error::Config(_) => SmoothoptStatus::Config,
        Error::ContractViolation { .. } => SmoothoptStatus::ContractViolation,
        _ => SmoothoptStatus::InvalidArgument,
    }
}

fn fail(status: SmoothoptStatus, msg: impl Into<String>) -> SmoothoptStatus {
    set_error(msg);
    status
}

fn from_lib(e: Error) -> SmoothoptStatus {
    fail(lib_status(&e), e.to_string())
}

/// Runs `body`, turning panics into [`SmoothoptStatus::Panic`].
fn guard(body: impl FnOnce() -> SmoothoptStatus) -> SmoothoptStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SmoothoptStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Option<&'a [f64]> {
    if p.is_null() {
        (n == 0).then_some(&[])
    } else {
        Some(std::slice::from_raw_parts(p, n))
    }
}

macro_rules! nonnull {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(SmoothoptStatus::NullPointer, concat!("null pointer: ", stringify!($p)));
        })+
    };
}

/// Description of the last failure on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn smoothopt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smoothopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn boxed_out<T>(out: *mut *mut T, value: T) -> SmoothoptStatus {
    // SAFETY: callers check `out` for null first
    unsafe { *out = Box::into_raw(Box::new(value)) };
    SmoothoptStatus::Ok
}

/// Axis-aligned box `[lower, upper]` of dimension `dim`.
///
/// # Safety
/// `lower` and `upper` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_set_box(
    dim: usize,
    lower: *const f64,
    upper: *const f64,
    out: *mut *mut SmoothoptSet,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(lower, upper, out);
        let (l, u) = (slice(lower, dim).unwrap().to_vec(), slice(upper, dim).unwrap().to_vec());
        match FeasibleSet::boxed(l, u) {
            Ok(inner) => boxed_out(out, SmoothoptSet { inner }),
            Err(e) => from_lib(e),
        }
    })
}

/// Euclidean ball of dimension `dim`.
///
/// # Safety
/// `center` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_set_ball(
    dim: usize,
    center: *const f64,
    radius: f64,
    out: *mut *mut SmoothoptSet,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(center, out);
        match FeasibleSet::ball(slice(center, dim).unwrap().to_vec(), radius) {
            Ok(inner) => boxed_out(out, SmoothoptSet { inner }),
            Err(e) => from_lib(e),
        }
    })
}

/// Box intersected with the half-space `normal · x ≤ offset`.
///
/// # Safety
/// `lower`, `upper` and `normal` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_set_box_halfspace(
    dim: usize,
    lower: *const f64,
    upper: *const f64,
    normal: *const f64,
    offset: f64,
    out: *mut *mut SmoothoptSet,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(lower, upper, normal, out);
        let v = |p| slice(p, dim).unwrap().to_vec();
        match FeasibleSet::box_halfspace(v(lower), v(upper), v(normal), offset) {
            Ok(inner) => boxed_out(out, SmoothoptSet { inner }),
            Err(e) => from_lib(e),
        }
    })
}

/// # Safety
/// `set` must come from a `smoothopt_set_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_set_free(set: *mut SmoothoptSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Dimension of `set`, or 0 for null.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_set_dim(set: *const SmoothoptSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.dim())
}

/// Euclidean projection of `x` onto `set`, written to `out`.
///
/// # Safety
/// `x` and `out` must point to `dim` doubles; `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_set_project(
    set: *const SmoothoptSet,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(set, x, out);
        let set = &(*set).inner;
        if dim != set.dim() {
            return fail(SmoothoptStatus::InvalidArgument, format!("expected {} coordinates, got {dim}", set.dim()));
        }
        match set.project(slice(x, dim).unwrap()) {
            Ok(p) => {
                std::slice::from_raw_parts_mut(out, dim).copy_from_slice(&p);
                SmoothoptStatus::Ok
            }
            Err(e) => from_lib(e),
        }
    })
}

/// Looks up a registered problem: `polygon` (with `n` vertices) or a
/// calibration function (`l1-norm`, `max-coordinate`, `two-well-1d`,
/// `lsc-step-1d`) of dimension `n`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_problem_new(
    name: *const c_char,
    n: usize,
    out: *mut *mut SmoothoptProblem,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(name, out);
        let Ok(name) = CStr::from_ptr(name).to_str() else {
            return fail(SmoothoptStatus::InvalidArgument, "problem name is not UTF-8");
        };
        match instance(name, n, DiameterPenalty::default(), None, None, None) {
            Ok(inner) => boxed_out(out, SmoothoptProblem { inner }),
            Err(e) => fail(SmoothoptStatus::InvalidArgument, e.message),
        }
    })
}

/// # Safety
/// `problem` must come from [`smoothopt_problem_new`], or be null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_problem_free(problem: *mut SmoothoptProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Length of the problem's decision vector, or 0 for null.
///
/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_problem_dim(problem: *const SmoothoptProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.dim())
}

/// Objective value at `x` in the problem's own sense (the polygon's
/// penalized area, the calibration value otherwise).
///
/// # Safety
/// `x` must point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_problem_eval(
    problem: *const SmoothoptProblem,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(problem, x, out);
        let p = &(*problem).inner;
        if dim != p.dim() {
            return fail(SmoothoptStatus::InvalidArgument, format!("expected {} coordinates, got {dim}", p.dim()));
        }
        *out = p.natural(p.objective.eval(slice(x, dim).unwrap()));
        SmoothoptStatus::Ok
    })
}

/// Defaults: 11 halving stages from `h0 = 1`, 1000 iterations of batch 4,
/// ravine coefficient 1, ball kernel.
#[no_mangle]
pub extern "C" fn smoothopt_plan_default() -> SmoothoptPlanParams {
    SmoothoptPlanParams {
        h0: 1.0,
        decay: 0.5,
        stages: 11,
        iterations: 1000,
        batch: 4,
        beta: 1.0,
        kernel: SmoothoptKernel::Ball,
        d: 0.0,
        l: 0.0,
    }
}

fn plan(params: &SmoothoptPlanParams, region: &FeasibleSet) -> smoothopt::Result<SmoothingPlan> {
    use smoothopt::continuation::StepScaling;
    use smoothopt::optimizer::StepRule;
    if !(params.decay > 0.0 && params.decay < 1.0) {
        return Err(Error::InvalidArgument(format!("decay must lie in (0, 1), got {}", params.decay)));
    }
    let mut plan = SmoothingPlan::geometric(params.h0, params.decay, params.stages, params.iterations, params.batch)?;
    plan.beta = params.beta;
    plan.stage.kernel = match params.kernel {
        SmoothoptKernel::Ball => KernelKind::Ball,
        SmoothoptKernel::Gaussian => KernelKind::Gaussian,
    };
    plan.stage.step_scaling = StepScaling::None;
    let diameter = region.diameter().unwrap_or(2.0 * params.h0);
    if let StepRule::T2Decaying { params: ref mut rate } = plan.stage.step {
        rate.d = if params.d > 0.0 { params.d } else { diameter };
        rate.l = if params.l > 0.0 { params.l } else { 1.0 };
    }
    plan.validate()?;
    Ok(plan)
}

struct Callback {
    f: unsafe extern "C" fn(*const f64, usize, *mut c_void) -> f64,
    user: *mut c_void,
}

// SAFETY: plans built here run serially, so the callback only ever runs on
// the thread that called the minimizer.
unsafe impl Sync for Callback {}

impl Objective for Callback {
    fn eval(&self, x: &[f64]) -> f64 {
        unsafe { (self.f)(x.as_ptr(), x.len(), self.user) }
    }
}

/// Minimizes a C callback over `region` (a box or a ball), starting from
/// `start`. If `constraint` is non-null the callback is only evaluated on
/// it, through the distance penalty with multiplier `multiplier`.
///
/// # Safety
/// `start` must point to `dim` doubles, handles must be live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_minimize(
    objective: SmoothoptObjective,
    user: *mut c_void,
    region: *const SmoothoptSet,
    constraint: *const SmoothoptSet,
    multiplier: f64,
    start: *const f64,
    dim: usize,
    params: *const SmoothoptPlanParams,
    seed: u64,
    out: *mut *mut SmoothoptResult,
) -> SmoothoptStatus {
    guard(|| {
        let Some(f) = objective else {
            return fail(SmoothoptStatus::NullPointer, "null pointer: objective");
        };
        nonnull!(region, start, params, out);
        let region = &(*region).inner;
        if region.dim() != dim || region.bounding_box().is_none() || matches!(region, FeasibleSet::Custom(_)) {
            return fail(SmoothoptStatus::InvalidArgument, "region must be a box or ball of the start's dimension");
        }
        let plan = match plan(&*params, region) {
            Ok(p) => p,
            Err(e) => return from_lib(e),
        };
        let start = slice(start, dim).unwrap();
        let cb = Callback { f, user };
        let result = match constraint.as_ref() {
            None => successive_smoothing(&cb, region, start, &plan, seed),
            Some(c) => match Penalized::new(cb, c.inner.clone(), PenaltySpec::new(PenaltyKind::Distance, multiplier)) {
                Ok(p) => successive_smoothing(&p, region, start, &plan, seed),
                Err(e) => Err(e),
            },
        };
        match result {
            Ok(inner) => {
                let natural_best = inner.best_value;
                boxed_out(out, SmoothoptResult { inner, natural_best })
            }
            Err(e) => from_lib(e),
        }
    })
}

/// Minimizes (or, for the polygon, maximizes) a registered problem over its
/// default region from its default start.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_minimize_problem(
    problem: *const SmoothoptProblem,
    params: *const SmoothoptPlanParams,
    seed: u64,
    out: *mut *mut SmoothoptResult,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(problem, params, out);
        let p = &(*problem).inner;
        let mut params = *params;
        if params.l <= 0.0 {
            params.l = p.lipschitz.unwrap_or(1.0);
        }
        let plan = match plan(&params, &p.region) {
            Ok(plan) => plan,
            Err(e) => return from_lib(e),
        };
        match successive_smoothing(&*p.objective, &p.region, &p.start, &plan, seed) {
            Ok(inner) => {
                let natural_best = p.natural(inner.best_value);
                boxed_out(out, SmoothoptResult { inner, natural_best })
            }
            Err(e) => from_lib(e),
        }
    })
}

/// # Safety
/// `result` must come from a minimizer, or be null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_result_free(result: *mut SmoothoptResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Best value found, in the problem's own sense; NaN for null.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_result_best_value(result: *const SmoothoptResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.natural_best)
}

/// Objective evaluations spent; 0 for null.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_result_evaluations(result: *const SmoothoptResult) -> u64 {
    result.as_ref().map_or(0, |r| r.inner.evaluations)
}

/// Length of the best point; 0 for null.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_result_dim(result: *const SmoothoptResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.best_point.len())
}

/// Copies the best point into `out`, which holds `len` doubles.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_result_best_point(
    result: *const SmoothoptResult,
    out: *mut f64,
    len: usize,
) -> SmoothoptStatus {
    guard(|| {
        nonnull!(result, out);
        let p = &(*result).inner.best_point;
        if len < p.len() {
            return fail(SmoothoptStatus::InvalidArgument, format!("buffer holds {len} values, need {}", p.len()));
        }
        std::slice::from_raw_parts_mut(out, p.len()).copy_from_slice(p);
        SmoothoptStatus::Ok
    })
}

/// Executes a run configuration file, writing its summary and run records.
/// `threads` of 0 uses every core (still capped by `SMOOTHOPT_THREADS`).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn smoothopt_run_config(path: *const c_char, threads: usize) -> SmoothoptStatus {
    guard(|| {
        nonnull!(path);
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(SmoothoptStatus::InvalidArgument, "path is not UTF-8");
        };
        let result = load(Path::new(path)).and_then(|p| execute(&p, (threads > 0).then_some(threads)));
        match result {
            Ok(_) => SmoothoptStatus::Ok,
            Err(e) => {
                let status = match &e {
                    HarnessError::Config { .. } | HarnessError::InvalidParameters(_) => SmoothoptStatus::Config,
                    HarnessError::Evaluation { .. } => SmoothoptStatus::Evaluation,
                    HarnessError::Io { .. } => SmoothoptStatus::Io,
                    HarnessError::Run { source, .. } => lib_status(source),
                    HarnessError::ChecksFailed { .. } => SmoothoptStatus::InvalidArgument,
                };
                fail(status, e.to_string())
            }
        }
    })
}
