//! C ABI for the fbrrt solver.
//!
//! Problems and solutions are opaque handles created by `fbrrt_problem_new` and
//! `fbrrt_solve` and released with the matching `_free` function. Every fallible call
//! returns an [`FbrrtStatus`]; on failure `fbrrt_last_error` gives a message for the
//! calling thread. Panics are caught at the boundary and reported as
//! `FBRRT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fbrrt::backward::BackwardConfig;
use fbrrt::config::{
    problem_defaults, DEFAULT_EPS_OPT, DEFAULT_EPS_RRT, DEFAULT_ITERATIONS, DEFAULT_PARTICLES,
};
use fbrrt::forward::{ForwardConfig, Roi, SamplingMode};
use fbrrt::problem::{make_problem, SocProblem};
use fbrrt::solver::{ModelPolicy, Policy, Solution, SolverConfig, DEFAULT_ROLLOUTS};
use fbrrt::Error;
use nalgebra::DVector;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbrrtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownProblem = 3,
    Solver = 4,
    Panic = 5,
}

/// Sampling mode of the forward pass.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbrrtMode {
    Rrt = 0,
    Parallel = 1,
}

/// Solver settings. Fill with `fbrrt_params_default` and adjust.
///
/// `roi_min`/`roi_max` may be null to use the problem's default region; otherwise
/// both must point to `state_dim` values that stay valid during `fbrrt_solve`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FbrrtParams {
    pub particles: usize,
    pub erode_width: usize,
    pub steps: usize,
    pub iterations: usize,
    pub rollouts: usize,
    pub seed: u64,
    pub eps_rrt: f64,
    pub eps_opt: f64,
    pub lambda: f64,
    /// Ridge used when an unregularised fit is rank deficient.
    pub ridge: f64,
    pub mode: FbrrtMode,
    pub roi_min: *const f64,
    pub roi_max: *const f64,
}

/// One row of the per-iteration report.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FbrrtReport {
    pub iteration: usize,
    pub policy_cost: f64,
    pub std_error: f64,
    pub best_cost: f64,
    pub lambda: f64,
    pub wall_time: f64,
    pub excluded_rollouts: usize,
    pub regularized_steps: usize,
}

/// Opaque problem handle.
pub struct FbrrtProblem {
    inner: SocProblem,
}

/// Opaque solution handle.
pub struct FbrrtSolution {
    problem: SocProblem,
    inner: Solution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FbrrtStatus, msg: impl Into<String>) -> FbrrtStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> FbrrtStatus {
    let status = match e {
        Error::UnknownProblem(_) => FbrrtStatus::UnknownProblem,
        Error::Config(_) | Error::Dimension { .. } => FbrrtStatus::InvalidArgument,
        _ => FbrrtStatus::Solver,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> FbrrtStatus) -> FbrrtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == FbrrtStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(FbrrtStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn name_arg<'a>(name: *const c_char) -> Result<&'a str, FbrrtStatus> {
    if name.is_null() {
        return Err(fail(FbrrtStatus::NullPointer, "problem name is null"));
    }
    CStr::from_ptr(name)
        .to_str()
        .map_err(|_| fail(FbrrtStatus::InvalidArgument, "problem name is not UTF-8"))
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], FbrrtStatus> {
    if ptr.is_null() {
        return Err(fail(FbrrtStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Message of the last failed call on this thread, or null. The pointer stays valid
/// until the next fbrrt call on the same thread.
#[no_mangle]
pub extern "C" fn fbrrt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn fbrrt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build one of the benchmark problems: `lqr1d`, `double_integrator`,
/// `double_pendulum` or `quadcopter`.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_problem_new(
    name: *const c_char,
    out: *mut *mut FbrrtProblem,
) -> FbrrtStatus {
    guard(|| {
        if out.is_null() {
            return fail(FbrrtStatus::NullPointer, "out is null");
        }
        let name = match name_arg(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match make_problem(name) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(FbrrtProblem { inner: p }));
                FbrrtStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `problem` must come from `fbrrt_problem_new` and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_problem_free(problem: *mut FbrrtProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_problem_state_dim(problem: *const FbrrtProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.state_dim())
}

/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_problem_control_dim(problem: *const FbrrtProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.control_dim())
}

/// Default settings for the named problem.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_params_default(
    name: *const c_char,
    out: *mut FbrrtParams,
) -> FbrrtStatus {
    guard(|| {
        if out.is_null() {
            return fail(FbrrtStatus::NullPointer, "out is null");
        }
        let name = match name_arg(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let d = match problem_defaults(name) {
            Ok(d) => d,
            Err(e) => return from_error(&e),
        };
        let particles = DEFAULT_PARTICLES;
        *out = FbrrtParams {
            particles,
            erode_width: (particles as f64 * d.erode_fraction).round() as usize,
            steps: d.steps,
            iterations: DEFAULT_ITERATIONS,
            rollouts: DEFAULT_ROLLOUTS,
            seed: 0,
            eps_rrt: DEFAULT_EPS_RRT,
            eps_opt: DEFAULT_EPS_OPT,
            lambda: d.lambda,
            ridge: BackwardConfig::for_particles(particles).ridge,
            mode: FbrrtMode::Rrt,
            roi_min: ptr::null(),
            roi_max: ptr::null(),
        };
        FbrrtStatus::Ok
    })
}

unsafe fn solver_config(
    problem: &SocProblem,
    params: &FbrrtParams,
) -> Result<SolverConfig, FbrrtStatus> {
    let n = problem.state_dim();
    let roi = match (params.roi_min.is_null(), params.roi_max.is_null()) {
        (true, true) => {
            let d = problem_defaults(problem.name()).map_err(|e| from_error(&e))?;
            Roi::new(DVector::from_vec(d.roi_min), DVector::from_vec(d.roi_max))
        }
        (false, false) => {
            let lo = slice_arg(params.roi_min, n, "roi_min")?;
            let hi = slice_arg(params.roi_max, n, "roi_max")?;
            Roi::new(
                DVector::from_column_slice(lo),
                DVector::from_column_slice(hi),
            )
        }
        _ => {
            return Err(fail(
                FbrrtStatus::InvalidArgument,
                "set both roi_min and roi_max or neither",
            ))
        }
    }
    .map_err(|e| from_error(&e))?;
    Ok(SolverConfig {
        particles: params.particles,
        erode_width: params.erode_width,
        steps: params.steps,
        iterations: params.iterations,
        rollouts: params.rollouts,
        seed: params.seed,
        forward: ForwardConfig {
            eps_rrt: params.eps_rrt,
            eps_opt: params.eps_opt,
            roi,
            mode: match params.mode {
                FbrrtMode::Rrt => SamplingMode::Rrt,
                FbrrtMode::Parallel => SamplingMode::Parallel,
            },
        },
        backward: BackwardConfig {
            lambda: params.lambda,
            lambda_grid: None,
            ridge: params.ridge,
        },
    })
}

/// Run the solver. On success `*out` receives a solution handle.
///
/// # Safety
/// `problem` must be a live handle, `params` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solve(
    problem: *const FbrrtProblem,
    params: *const FbrrtParams,
    out: *mut *mut FbrrtSolution,
) -> FbrrtStatus {
    guard(|| {
        let (Some(problem), Some(params)) = (problem.as_ref(), params.as_ref()) else {
            return fail(FbrrtStatus::NullPointer, "problem or params is null");
        };
        if out.is_null() {
            return fail(FbrrtStatus::NullPointer, "out is null");
        }
        let config = match solver_config(&problem.inner, params) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match fbrrt::solve(&problem.inner, &config) {
            Ok(sol) => {
                *out = Box::into_raw(Box::new(FbrrtSolution {
                    problem: problem.inner.clone(),
                    inner: sol,
                }));
                FbrrtStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `solution` must come from `fbrrt_solve` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solution_free(solution: *mut FbrrtSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of iterations in the report, or 0 for null.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solution_iterations(solution: *const FbrrtSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.inner.reports.len())
}

/// Iteration (1-based) whose model is used by the value and policy queries.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solution_best_iteration(solution: *const FbrrtSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.inner.best_iteration)
}

/// Report of iteration `index` (0-based).
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solution_report(
    solution: *const FbrrtSolution,
    index: usize,
    out: *mut FbrrtReport,
) -> FbrrtStatus {
    guard(|| {
        let Some(solution) = solution.as_ref() else {
            return fail(FbrrtStatus::NullPointer, "solution is null");
        };
        if out.is_null() {
            return fail(FbrrtStatus::NullPointer, "out is null");
        }
        let Some(r) = solution.inner.reports.get(index) else {
            return fail(
                FbrrtStatus::InvalidArgument,
                format!(
                    "report index {index} out of range (have {})",
                    solution.inner.reports.len()
                ),
            );
        };
        *out = FbrrtReport {
            iteration: r.iteration,
            policy_cost: r.policy_cost,
            std_error: r.std_error,
            best_cost: r.best_cost,
            lambda: r.lambda,
            wall_time: r.wall_time,
            excluded_rollouts: r.excluded_rollouts,
            regularized_steps: r.regularized_steps,
        };
        FbrrtStatus::Ok
    })
}

unsafe fn state_arg(
    solution: &FbrrtSolution,
    x: *const f64,
    len: usize,
) -> Result<DVector<f64>, FbrrtStatus> {
    let n = solution.problem.state_dim();
    if len != n {
        return Err(fail(
            FbrrtStatus::InvalidArgument,
            format!("state has {len} entries, problem has {n}"),
        ));
    }
    slice_arg(x, len, "x").map(DVector::from_column_slice)
}

/// Best-model value `V_i(x)` at time index `time_index` in `0..=steps`.
///
/// # Safety
/// `solution` must be a live handle, `x` must point to `len` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solution_value(
    solution: *const FbrrtSolution,
    time_index: usize,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> FbrrtStatus {
    guard(|| {
        let Some(solution) = solution.as_ref() else {
            return fail(FbrrtStatus::NullPointer, "solution is null");
        };
        if out.is_null() {
            return fail(FbrrtStatus::NullPointer, "out is null");
        }
        let x = match state_arg(solution, x, len) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match solution.inner.best_model.value(time_index, &x) {
            Ok(v) => {
                *out = v;
                FbrrtStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Best-model gradient at time index `time_index`, written to `out[0..len]`.
///
/// # Safety
/// `x` and `out` must each point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solution_gradient(
    solution: *const FbrrtSolution,
    time_index: usize,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> FbrrtStatus {
    guard(|| {
        let Some(solution) = solution.as_ref() else {
            return fail(FbrrtStatus::NullPointer, "solution is null");
        };
        if out.is_null() {
            return fail(FbrrtStatus::NullPointer, "out is null");
        }
        let x = match state_arg(solution, x, len) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match solution.inner.best_model.gradient(time_index, &x) {
            Ok(g) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(g.as_slice());
                FbrrtStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Feedback control of the best model at step `step` in `0..steps`, written to
/// `u[0..u_len]`; `u_len` must equal the control dimension.
///
/// # Safety
/// `x` must point to `x_len` values and `u` to `u_len` values.
#[no_mangle]
pub unsafe extern "C" fn fbrrt_solution_policy(
    solution: *const FbrrtSolution,
    step: usize,
    x: *const f64,
    x_len: usize,
    u: *mut f64,
    u_len: usize,
) -> FbrrtStatus {
    guard(|| {
        let Some(solution) = solution.as_ref() else {
            return fail(FbrrtStatus::NullPointer, "solution is null");
        };
        if u.is_null() {
            return fail(FbrrtStatus::NullPointer, "u is null");
        }
        let m = solution.problem.control_dim();
        if u_len != m {
            return fail(
                FbrrtStatus::InvalidArgument,
                format!("control buffer has {u_len} entries, problem has {m}"),
            );
        }
        let x = match state_arg(solution, x, x_len) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let steps = solution.inner.best_model.steps();
        let t = step as f64 * solution.problem.horizon() / steps as f64;
        match ModelPolicy(&solution.inner.best_model).control(&solution.problem, step, t, &x) {
            Ok(c) => {
                std::slice::from_raw_parts_mut(u, u_len).copy_from_slice(c.as_slice());
                FbrrtStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}
