//! C ABI for the wolfront free-boundary solver.
//!
//! Conventions:
//! - Every fallible call returns a [`WfStatus`]; outputs go through pointer
//!   arguments and are written only on `WF_STATUS_OK`.
//! - Handles (`WfModel`, `WfRun`) are opaque; create/free in matched pairs.
//!   Passing NULL to a `_free` function is a no-op.
//! - After a non-OK status, `wf_last_error_message` returns a heap-allocated
//!   description of the failure on the calling thread; release it with
//!   `wf_string_free`.
//! - No call unwinds across the boundary: a Rust panic is caught and
//!   reported as `WF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use wolfront::eigen::{principal_lambda, EigenError, EigenProblem};
use wolfront::model::{self, InitialData, ModelError, ModelParams};
use wolfront::pde::{self, Classification, Grid, PdeError, RunOptions, RunResult};
use wolfront::semiwave::{solve_beta0, SemiWaveError, SemiWaveProblem};

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WfStatus {
    /// Success; output arguments are valid.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Invalid configuration or argument values.
    InvalidInput = 2,
    /// The solver failed on a valid configuration.
    Numerical = 3,
    /// Internal error (caught panic); outputs untouched.
    Panic = 4,
}

/// Verdict of a free-boundary run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WfClassification {
    Spreading = 0,
    Vanishing = 1,
    Undecided = 2,
}

/// Column selector for `wf_run_series_column`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WfSeriesColumn {
    /// Sample time t.
    Time = 0,
    /// Front position h(t).
    Front = 1,
    /// Front speed h'(t).
    FrontSpeed = 2,
    /// sup of the invading density u.
    SupU = 3,
    /// sup of the resident density v.
    SupV = 4,
    /// ∫ u dx over [0, h(t)].
    MassU = 5,
}

/// Opaque: model parameters plus birth-rate fields.
pub struct WfModel {
    params: ModelParams,
}

/// Opaque: completed simulation (series + verdict).
pub struct WfRun {
    result: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let cstring = CString::new(msg.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

trait IntoStatus {
    fn status(&self) -> WfStatus;
}

impl IntoStatus for ModelError {
    fn status(&self) -> WfStatus {
        WfStatus::InvalidInput
    }
}

impl IntoStatus for PdeError {
    fn status(&self) -> WfStatus {
        match self {
            PdeError::Model(_) => WfStatus::InvalidInput,
            _ => WfStatus::Numerical,
        }
    }
}

impl IntoStatus for EigenError {
    fn status(&self) -> WfStatus {
        match self {
            EigenError::Model(_) => WfStatus::InvalidInput,
            _ => WfStatus::Numerical,
        }
    }
}

impl IntoStatus for SemiWaveError {
    fn status(&self) -> WfStatus {
        match self {
            SemiWaveError::Model(_) => WfStatus::InvalidInput,
            _ => WfStatus::Numerical,
        }
    }
}

/// Runs `body` with panic containment and last-error bookkeeping.
fn guarded<F>(body: F) -> WfStatus
where
    F: FnOnce() -> WfStatus,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal panic: {msg}"));
            WfStatus::Panic
        }
    }
}

fn fail<E: IntoStatus + std::fmt::Display>(e: E) -> WfStatus {
    set_error(e.to_string());
    e.status()
}

fn invalid(msg: &str) -> WfStatus {
    set_error(msg.to_string());
    WfStatus::InvalidInput
}

fn null_arg(name: &str) -> WfStatus {
    set_error(format!("argument {name} must not be NULL"));
    WfStatus::NullPointer
}

// ---------------------------------------------------------------------------
// Library metadata and error retrieval

/// Identifier of the numerical scheme, e.g. for manifest comparisons.
/// The returned pointer is static; do not free it.
#[no_mangle]
pub extern "C" fn wf_scheme_version() -> *const c_char {
    static VERSION: &[u8] = b"wolfront/fd-1.0.0\0";
    VERSION.as_ptr().cast()
}

/// Returns the error message of the most recent failed call on this thread,
/// or NULL if the last call succeeded. The caller owns the string and must
/// release it with `wf_string_free`.
#[no_mangle]
pub extern "C" fn wf_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be a pointer previously returned by `wf_last_error_message`
/// (or NULL) and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Model handles

/// Builds a model from a JSON document with keys
/// `d1, d2, delta1, delta2, mu, h0, b1, b2`, where the birth rates are
/// `{"kind": "constant", "value": ...}`, `{"kind": "expression", ...}`, or
/// `{"kind": "tabulated", ...}`. On success writes a handle to `out`.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to writable memory.
#[no_mangle]
pub unsafe extern "C" fn wf_model_new_json(
    json: *const c_char,
    out: *mut *mut WfModel,
) -> WfStatus {
    if json.is_null() {
        return null_arg("json");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let text = match std::ffi::CStr::from_ptr(json).to_str() {
        Ok(t) => t.to_owned(),
        Err(_) => return invalid("config is not valid UTF-8"),
    };
    guarded(|| {
        let params: ModelParams = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return invalid(&format!("config parse error: {e}")),
        };
        if let Err(e) = params.validate(4.0 * params.h0) {
            return fail(e);
        }
        *out = Box::into_raw(Box::new(WfModel { params }));
        WfStatus::Ok
    })
}

/// Builds a model with constant birth rates from scalar parameters.
///
/// # Safety
/// `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn wf_model_new(
    d1: f64,
    d2: f64,
    delta1: f64,
    delta2: f64,
    mu: f64,
    h0: f64,
    b1: f64,
    b2: f64,
    out: *mut *mut WfModel,
) -> WfStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let (b1, b2) = match (
            model::BirthRateField::constant(b1),
            model::BirthRateField::constant(b2),
        ) {
            (Ok(b1), Ok(b2)) => (b1, b2),
            (Err(e), _) | (_, Err(e)) => return fail(e),
        };
        let params = ModelParams {
            d1,
            d2,
            delta1,
            delta2,
            mu,
            h0,
            b1,
            b2,
        };
        if let Err(e) = params.validate(4.0 * params.h0) {
            return fail(e);
        }
        *out = Box::into_raw(Box::new(WfModel { params }));
        WfStatus::Ok
    })
}

/// Releases a model handle. NULL is a no-op.
///
/// # Safety
/// `model` must come from `wf_model_new`/`wf_model_new_json` and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wf_model_free(model: *mut WfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Critical initial front position h0*: fronts released at h0 ≥ h0* always
/// spread (constant birth rates, fitness-benefit regime).
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wf_model_critical_h0(model: *const WfModel, out: *mut f64) -> WfStatus {
    if model.is_null() {
        return null_arg("model");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let model = &*model;
    guarded(|| match model::critical_h0_star(&model.params) {
        Ok(h) => {
            *out = h;
            WfStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Principal eigenvalue of `-d1 φ'' − b1(x) φ` on `[0, h]` with a Neumann
/// condition at 0 and a Dirichlet condition at `h`, discretized with `n`
/// cells (`n = 0` selects 2048). Negative values indicate net growth.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wf_model_lambda1(
    model: *const WfModel,
    h: f64,
    n: usize,
    out: *mut f64,
) -> WfStatus {
    if model.is_null() {
        return null_arg("model");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let model = &*model;
    guarded(|| {
        let problem = EigenProblem {
            d: model.params.d1,
            b: model.params.b1.clone(),
            h0: h,
            n: if n == 0 { 2048 } else { n },
        };
        match principal_lambda(&problem) {
            Ok(lambda) => {
                *out = lambda;
                WfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Stand-alone kernels

/// Principal eigenvalue for a constant birth rate `b`, matching the closed
/// form `d (π/(2 h0))² − b` as the grid refines. `n = 0` selects 2048 cells.
///
/// # Safety
/// `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn wf_eigen_lambda1(
    d: f64,
    b: f64,
    h0: f64,
    n: usize,
    out: *mut f64,
) -> WfStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let field = match model::BirthRateField::constant(b) {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        let problem = EigenProblem {
            d,
            b: field,
            h0,
            n: if n == 0 { 2048 } else { n },
        };
        match principal_lambda(&problem) {
            Ok(lambda) => {
                *out = lambda;
                WfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Semi-wave spreading speed β0 for `d U'' − β U' + U(a − δ U) = 0` with the
/// free-boundary closure `β = μ U'(0)`. Writes the speed and, when the
/// remaining pointers are non-NULL, the boundary slope `U'(0)` and the
/// defect of the closure at the returned speed.
///
/// # Safety
/// `out_beta0` must be valid; `out_uprime0`/`out_residual` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn wf_semiwave_beta0(
    d: f64,
    a: f64,
    delta: f64,
    mu: f64,
    out_beta0: *mut f64,
    out_uprime0: *mut f64,
    out_residual: *mut f64,
) -> WfStatus {
    if out_beta0.is_null() {
        return null_arg("out_beta0");
    }
    guarded(|| {
        let problem = SemiWaveProblem { d, a, delta, mu };
        match solve_beta0(&problem) {
            Ok(result) => {
                *out_beta0 = result.beta0;
                if !out_uprime0.is_null() {
                    *out_uprime0 = result.uprime0;
                }
                if !out_residual.is_null() {
                    *out_residual = result.residual;
                }
                WfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Simulation runs

/// Integrates the free-boundary system up to `horizon` and returns a run
/// handle. Zero grid arguments select defaults (`n_u = 256`, `n_v = 1024`,
/// `xmax = 4 h0`); the time step adapts to the stability limits. Initial
/// data is the default compatible hump for u and the fitted equilibrium
/// level for v.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wf_simulate(
    model: *const WfModel,
    n_u: usize,
    n_v: usize,
    xmax: f64,
    horizon: f64,
    out: *mut *mut WfRun,
) -> WfStatus {
    if model.is_null() {
        return null_arg("model");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let model = &*model;
    guarded(|| {
        let defaults = Grid::default_for(&model.params);
        let grid = Grid {
            n_u: if n_u == 0 { defaults.n_u } else { n_u },
            n_v: if n_v == 0 { defaults.n_v } else { n_v },
            xmax: if xmax > 0.0 { xmax } else { defaults.xmax },
            dt_policy: defaults.dt_policy,
        };
        let init = InitialData::default_for(&model.params, grid.xmax);
        match pde::run(&model.params, &init, &grid, RunOptions::new(horizon)) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(WfRun { result }));
                WfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a run handle. NULL is a no-op.
///
/// # Safety
/// `run` must come from `wf_simulate` and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wf_run_free(run: *mut WfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Verdict of the run: did the front escape, stall, or remain undecided
/// within the horizon?
///
/// # Safety
/// `run` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wf_run_classification(
    run: *const WfRun,
    out: *mut WfClassification,
) -> WfStatus {
    if run.is_null() {
        return null_arg("run");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let run = &*run;
    *out = match run.result.classification {
        Classification::Spreading => WfClassification::Spreading,
        Classification::Vanishing => WfClassification::Vanishing,
        Classification::Undecided => WfClassification::Undecided,
    };
    WfStatus::Ok
}

/// Front position at the end of the run.
///
/// # Safety
/// `run` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wf_run_h_final(run: *const WfRun, out: *mut f64) -> WfStatus {
    if run.is_null() {
        return null_arg("run");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*run).result.final_state.h;
    WfStatus::Ok
}

/// Number of samples in the recorded time series.
///
/// # Safety
/// `run` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wf_run_series_len(run: *const WfRun, out: *mut usize) -> WfStatus {
    if run.is_null() {
        return null_arg("run");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*run).result.series.len();
    WfStatus::Ok
}

/// Copies one column of the time series into `buf`, which must hold exactly
/// `wf_run_series_len` elements (pass that value as `len`).
///
/// # Safety
/// `run` must be valid and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wf_run_series_column(
    run: *const WfRun,
    column: WfSeriesColumn,
    buf: *mut f64,
    len: usize,
) -> WfStatus {
    if run.is_null() {
        return null_arg("run");
    }
    if buf.is_null() {
        return null_arg("buf");
    }
    let series = &(*run).result.series;
    if len != series.len() {
        return invalid(&format!(
            "buffer length {len} does not match series length {}",
            series.len()
        ));
    }
    let out = std::slice::from_raw_parts_mut(buf, len);
    for (slot, sample) in out.iter_mut().zip(series) {
        *slot = match column {
            WfSeriesColumn::Time => sample.t,
            WfSeriesColumn::Front => sample.h,
            WfSeriesColumn::FrontSpeed => sample.dhdt,
            WfSeriesColumn::SupU => sample.sup_u,
            WfSeriesColumn::SupV => sample.sup_v,
            WfSeriesColumn::MassU => sample.mass_u,
        };
    }
    WfStatus::Ok
}
