//! C ABI over `cmdp-irl`.
//!
//! Models, datasets and recovery results cross the boundary as opaque
//! handles that the caller releases with the matching `*_free` function.
//! Every fallible call returns a [`CmdpStatus`]; on failure the message is
//! available from [`cmdp_last_error`] on the same thread. Output arguments
//! are written only on success, except where a function says otherwise.
//! Panics never unwind into C: they are caught and reported as
//! `CMDP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;
use std::slice;

use cmdp_irl::{self as core, Error, FeatureKind, SolveStatus, WeightPair};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    DimensionMismatch = 4,
    Infeasible = 5,
    HorizonMismatch = 6,
    Parse = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

pub struct CmdpModel(core::CmdpModel);

pub struct CmdpDataset(core::Dataset);

pub struct CmdpIrlResult(core::IrlResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CmdpDims {
    pub n_states: usize,
    pub n_actions: usize,
    pub reward_dim: usize,
    pub constraint_dim: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CmdpSolution {
    pub lambda: f64,
    pub reward_value: f64,
    pub cost_value: f64,
    pub feasible: bool,
}

/// Recovery settings. A negative `lambda_floor` disables the floor.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CmdpIrlOptions {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub lambda_floor: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CmdpIrlSummary {
    pub lambda: f64,
    pub cost_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CmdpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidModel(_) | Error::InvalidPolicy(_) => CmdpStatus::InvalidModel,
            Error::DimensionMismatch { .. } => CmdpStatus::DimensionMismatch,
            Error::Infeasible { .. } | Error::ProjectionInfeasible { .. } => CmdpStatus::Infeasible,
            Error::HorizonMismatch { .. } => CmdpStatus::HorizonMismatch,
            Error::DatasetParse { .. } | Error::Json(_) => CmdpStatus::Parse,
            Error::Io(_) => CmdpStatus::Io,
            Error::InvalidArgument(_) | Error::EnumerationCap { .. } => CmdpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(CmdpStatus::Parse, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CmdpStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<CmdpStatus, Failure>) -> CmdpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CmdpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| {
        Failure(
            CmdpStatus::InvalidArgument,
            format!("{what} is not UTF-8: {e}"),
        )
    })
}

unsafe fn output(src: &[f64], dst: *mut f64, len: usize, what: &str) -> Result<(), Failure> {
    if len < src.len() {
        return Err(Failure(
            CmdpStatus::BufferTooSmall,
            format!("{what} needs {} entries, buffer holds {len}", src.len()),
        ));
    }
    if dst.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<CmdpStatus, Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(CmdpStatus::Ok)
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<CmdpStatus, Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|e| Failure(CmdpStatus::InvalidArgument, e.to_string()))?;
    *out = c.into_raw();
    Ok(CmdpStatus::Ok)
}

unsafe fn weights(
    w_r: *const f64,
    w_r_len: usize,
    w_c: *const f64,
    w_c_len: usize,
) -> Result<WeightPair, Failure> {
    Ok(WeightPair::new(
        input(w_r, w_r_len, "w_r")?.to_vec(),
        input(w_c, w_c_len, "w_c")?.to_vec(),
    ))
}

unsafe fn policy(
    model: &core::CmdpModel,
    probs: *const f64,
    len: usize,
) -> Result<core::Policy, Failure> {
    let (ns, na) = (model.n_states(), model.n_actions());
    if len != ns * na {
        return Err(Error::DimensionMismatch {
            context: "policy buffer",
            expected: ns * na,
            actual: len,
        }
        .into());
    }
    let flat = input(probs, len, "policy")?;
    Ok(core::Policy::new(
        flat.chunks(na).map(<[f64]>::to_vec).collect(),
    )?)
}

fn flatten(p: &core::Policy) -> Vec<f64> {
    p.rows().concat()
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library and valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cmdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn cmdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a model from its JSON form (`n_states`, `n_actions`,
/// `transition[s][a][s']`, `p0`, `gamma`, `phi_r`, `phi_c`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_from_json(
    json: *const c_char,
    out: *mut *mut CmdpModel,
) -> CmdpStatus {
    guard(|| {
        let raw: core::model::ModelJson = serde_json::from_str(text(json, "json")?)?;
        put(out, CmdpModel(raw.try_into()?), "out")
    })
}

/// Serializes a model; free the result with [`cmdp_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_to_json(
    model: *const CmdpModel,
    out: *mut *mut c_char,
) -> CmdpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        put_string(out, serde_json::to_string(&m.0.to_json())?)
    })
}

/// Builds the random 5x5 hill gridworld for `seed` with discount `gamma`.
/// The simplex-normalized ground truth is written to `w_r` (2 entries) and
/// `w_c` (4 entries) when those are non-null.
///
/// # Safety
/// `out` must be writable; non-null weight buffers must hold `*_len` entries.
#[no_mangle]
pub unsafe extern "C" fn cmdp_gridworld_new(
    seed: u64,
    gamma: f64,
    out: *mut *mut CmdpModel,
    w_r: *mut f64,
    w_r_len: usize,
    w_c: *mut f64,
    w_c_len: usize,
) -> CmdpStatus {
    guard(|| {
        let params = core::GridworldParams {
            gamma,
            ..core::sample_experiment(seed)
        };
        let (model, truth) = core::build_gridworld(&params)?;
        let truth = core::gridworld::simplex_normalized(&truth);
        if !w_r.is_null() {
            output(&truth.w_r, w_r, w_r_len, "w_r")?;
        }
        if !w_c.is_null() {
            output(&truth.w_c, w_c, w_c_len, "w_c")?;
        }
        put(out, CmdpModel(model), "out")
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_dims(
    model: *const CmdpModel,
    out: *mut CmdpDims,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CmdpDims {
            n_states: m.n_states(),
            n_actions: m.n_actions(),
            reward_dim: m.feature_dim(FeatureKind::Reward),
            constraint_dim: m.feature_dim(FeatureKind::Constraint),
        };
        Ok(CmdpStatus::Ok)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_free(model: *mut CmdpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves the constrained problem for the given weights. `policy_out` is a
/// row-major `n_states x n_actions` buffer. When the budget cannot be met
/// the call returns `CMDP_STATUS_INFEASIBLE` but still fills both outputs
/// with the minimum-cost policy.
///
/// # Safety
/// `model` must be a live handle; weight buffers must hold `*_len` entries;
/// `solution` must be writable and `policy_out` must hold `policy_len`.
#[no_mangle]
pub unsafe extern "C" fn cmdp_solve(
    model: *const CmdpModel,
    w_r: *const f64,
    w_r_len: usize,
    w_c: *const f64,
    w_c_len: usize,
    solution: *mut CmdpSolution,
    policy_out: *mut f64,
    policy_len: usize,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if solution.is_null() {
            return Err(null("solution"));
        }
        let sol = core::solve_cmdp(m, &weights(w_r, w_r_len, w_c, w_c_len)?)?;
        output(&flatten(&sol.policy), policy_out, policy_len, "policy")?;
        let feasible = sol.status == SolveStatus::Optimal;
        *solution = CmdpSolution {
            lambda: sol.lambda,
            reward_value: sol.reward_value,
            cost_value: sol.cost_value,
            feasible,
        };
        if feasible {
            Ok(CmdpStatus::Ok)
        } else {
            set_error(format!(
                "budget infeasible: minimal achievable cost {:.6} exceeds 1",
                sol.cost_value
            ));
            Ok(CmdpStatus::Infeasible)
        }
    })
}

/// Samples `count` trajectories of length `horizon` under a row-major policy.
///
/// # Safety
/// `model` must be a live handle; `policy` must hold `policy_len` entries;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_dataset_generate(
    model: *const CmdpModel,
    policy: *const f64,
    policy_len: usize,
    horizon: usize,
    count: usize,
    seed: u64,
    out: *mut *mut CmdpDataset,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let pi = self::policy(m, policy, policy_len)?;
        let data = core::generate_dataset(m, &pi, horizon, count, seed)?;
        put(out, CmdpDataset(data), "out")
    })
}

/// Parses the line-oriented dataset text format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_dataset_parse(
    source: *const c_char,
    out: *mut *mut CmdpDataset,
) -> CmdpStatus {
    guard(|| {
        let data = core::Dataset::parse(text(source, "text")?)?;
        put(out, CmdpDataset(data), "out")
    })
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_dataset_to_text(
    dataset: *const CmdpDataset,
    out: *mut *mut c_char,
) -> CmdpStatus {
    guard(|| put_string(out, deref(dataset, "dataset")?.0.to_text()))
}

/// Number of trajectories; 0 for null.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cmdp_dataset_len(dataset: *const CmdpDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Trajectory length; 0 for null.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cmdp_dataset_horizon(dataset: *const CmdpDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.horizon)
}

/// # Safety
/// `dataset` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmdp_dataset_free(dataset: *mut CmdpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub extern "C" fn cmdp_irl_default_options() -> CmdpIrlOptions {
    let d = core::IrlConfig::new(1);
    CmdpIrlOptions {
        learning_rate: d.learning_rate,
        max_iters: d.max_iters,
        tol: d.tol,
        lambda_floor: d.lambda_floor.unwrap_or(-1.0),
        seed: d.seed,
    }
}

/// Recovers reward and constraint weights from `dataset`. Null `options`
/// means [`cmdp_irl_default_options`]. The horizon is taken from the dataset.
///
/// # Safety
/// `model` and `dataset` must be live handles; `options` must be null or
/// valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_irl_run(
    model: *const CmdpModel,
    dataset: *const CmdpDataset,
    options: *const CmdpIrlOptions,
    out: *mut *mut CmdpIrlResult,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        let data = &deref(dataset, "dataset")?.0;
        let o = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| cmdp_irl_default_options());
        let config = core::IrlConfig {
            learning_rate: o.learning_rate,
            max_iters: o.max_iters,
            tol: o.tol,
            horizon: data.horizon,
            seed: o.seed,
            lambda_floor: (o.lambda_floor >= 0.0).then_some(o.lambda_floor),
        };
        put(out, CmdpIrlResult(core::run_irl(m, data, &config)?), "out")
    })
}

/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_irl_result_summary(
    result: *const CmdpIrlResult,
    out: *mut CmdpIrlSummary,
) -> CmdpStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CmdpIrlSummary {
            lambda: r.lambda,
            cost_value: r.cost_value,
            iterations: r.iterations,
            converged: r.converged,
        };
        Ok(CmdpStatus::Ok)
    })
}

/// Copies the recovered weights into caller buffers.
///
/// # Safety
/// `result` must be a live handle; buffers must hold `*_len` entries.
#[no_mangle]
pub unsafe extern "C" fn cmdp_irl_result_weights(
    result: *const CmdpIrlResult,
    w_r: *mut f64,
    w_r_len: usize,
    w_c: *mut f64,
    w_c_len: usize,
) -> CmdpStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        output(&r.weights.w_r, w_r, w_r_len, "w_r")?;
        output(&r.weights.w_c, w_c, w_c_len, "w_c")?;
        Ok(CmdpStatus::Ok)
    })
}

/// Copies the final policy, row-major.
///
/// # Safety
/// `result` must be a live handle; `policy_out` must hold `policy_len`.
#[no_mangle]
pub unsafe extern "C" fn cmdp_irl_result_policy(
    result: *const CmdpIrlResult,
    policy_out: *mut f64,
    policy_len: usize,
) -> CmdpStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        output(&flatten(&r.policy), policy_out, policy_len, "policy")?;
        Ok(CmdpStatus::Ok)
    })
}

/// Full result including the per-iteration history, as JSON.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cmdp_irl_result_to_json(
    result: *const CmdpIrlResult,
    out: *mut *mut c_char,
) -> CmdpStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        put_string(out, serde_json::to_string(&r.to_json())?)
    })
}

/// # Safety
/// `result` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmdp_irl_result_free(result: *mut CmdpIrlResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
