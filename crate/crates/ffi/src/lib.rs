//! C interface to the mpfj engines.
//!
//! Every fallible call returns an [`MpfjStatus`]; on failure a description is
//! available from [`mpfj_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use mpfj::scenario::analytic_summary;
use mpfj::sim::{simulate_system, SimParams, DEFAULT_LEVELS};
use mpfj::stats::{percentile, MetricSummary};
use mpfj::{AnalysisError, Error, GridSpec, QueueCap, SystemConfig};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpfjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    InvalidArgument = 3,
    /// Unbounded queues with `μ_j τ ≤ 1` have no stationary law.
    Unstable = 4,
    AnalysisFailed = 5,
    SimulationFailed = 6,
    /// The requested metric is not available for this result.
    Unavailable = 7,
    Panic = 8,
}

/// System configuration handle.
pub struct MpfjConfig {
    inner: SystemConfig,
}

/// Metrics produced by [`mpfj_analyze`] or [`mpfj_simulate`].
pub struct MpfjResult {
    inner: MetricSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: MpfjStatus, msg: impl Into<String>) -> MpfjStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> MpfjStatus {
    match e {
        Error::Config(_) => MpfjStatus::InvalidConfig,
        Error::Analysis(AnalysisError::Unstable { .. }) => MpfjStatus::Unstable,
        Error::Analysis(_) => MpfjStatus::AnalysisFailed,
        _ => MpfjStatus::SimulationFailed,
    }
}

fn guarded(f: impl FnOnce() -> MpfjStatus) -> MpfjStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(MpfjStatus::Panic, "internal panic"),
    }
}

fn leak<T>(value: T, out: *mut *mut T) -> MpfjStatus {
    // SAFETY: callers check `out` for null before reaching this point.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    MpfjStatus::Ok
}

/// Message of the last failed call on this thread, or an empty string.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mpfj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mpfj_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Creates a configuration with `n_paths` paths, code dimension `k_data`,
/// buffer size `queue_cap` (0 means unbounded) and inter-arrival time `tau`.
/// `service_rates` and `erasure_probs` each point to `n_paths` values.
///
/// # Safety
/// The rate arrays must hold `n_paths` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpfj_config_new(
    n_paths: usize,
    k_data: usize,
    queue_cap: usize,
    tau: f64,
    service_rates: *const f64,
    erasure_probs: *const f64,
    out: *mut *mut MpfjConfig,
) -> MpfjStatus {
    guarded(|| {
        if out.is_null() || service_rates.is_null() || erasure_probs.is_null() {
            return fail(MpfjStatus::NullPointer, "null pointer argument");
        }
        let mu = slice::from_raw_parts(service_rates, n_paths).to_vec();
        let eps = slice::from_raw_parts(erasure_probs, n_paths).to_vec();
        let cap = if queue_cap == 0 { QueueCap::Unbounded } else { QueueCap::Finite(queue_cap) };
        match SystemConfig::new(n_paths, k_data, cap, tau, mu, eps) {
            Ok(inner) => leak(MpfjConfig { inner }, out),
            Err(e) => fail(MpfjStatus::InvalidConfig, e.to_string()),
        }
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must come from [`mpfj_config_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mpfj_config_free(cfg: *mut MpfjConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the analytic engine. `cells_per_period` sets the integration grid
/// (0 selects the default of 400).
///
/// # Safety
/// `cfg` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpfj_analyze(
    cfg: *const MpfjConfig,
    cells_per_period: usize,
    out: *mut *mut MpfjResult,
) -> MpfjStatus {
    guarded(|| {
        let (Some(cfg), false) = (cfg.as_ref(), out.is_null()) else {
            return fail(MpfjStatus::NullPointer, "null pointer argument");
        };
        let spec = if cells_per_period == 0 { GridSpec::default() } else { GridSpec::new(cells_per_period) };
        match analytic_summary(&cfg.inner, spec, &DEFAULT_LEVELS) {
            Ok((inner, _)) => leak(MpfjResult { inner }, out),
            Err(e) => {
                let e = Error::from(e);
                fail(status_of(&e), e.to_string())
            }
        }
    })
}

/// Runs the Monte Carlo engine for `n_blocks` blocks, discarding the first
/// `warmup_blocks`.
///
/// # Safety
/// `cfg` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpfj_simulate(
    cfg: *const MpfjConfig,
    n_blocks: usize,
    warmup_blocks: usize,
    seed: u64,
    out: *mut *mut MpfjResult,
) -> MpfjStatus {
    guarded(|| {
        let (Some(cfg), false) = (cfg.as_ref(), out.is_null()) else {
            return fail(MpfjStatus::NullPointer, "null pointer argument");
        };
        let params = SimParams { n_blocks, warmup_blocks, rng_seed: seed, record_traces: false };
        if let Err(e) = params.validate() {
            return fail(MpfjStatus::InvalidArgument, e.to_string());
        }
        match simulate_system(&cfg.inner, &params) {
            Ok(o) => leak(MpfjResult { inner: o.summary }, out),
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `res` must come from [`mpfj_analyze`] or [`mpfj_simulate`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mpfj_result_free(res: *mut MpfjResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

unsafe fn with_result(
    res: *const MpfjResult,
    out: *mut f64,
    f: impl FnOnce(&MetricSummary) -> Result<f64, (MpfjStatus, String)>,
) -> MpfjStatus {
    guarded(|| {
        let (Some(res), false) = (res.as_ref(), out.is_null()) else {
            return fail(MpfjStatus::NullPointer, "null pointer argument");
        };
        match f(&res.inner) {
            Ok(v) => {
                *out = v;
                MpfjStatus::Ok
            }
            Err((s, msg)) => fail(s, msg),
        }
    })
}

/// Block decoding probability.
///
/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpfj_result_success_prob(res: *const MpfjResult, out: *mut f64) -> MpfjStatus {
    with_result(res, out, |m| Ok(m.success_prob))
}

/// Latency CDF at `t` seconds (improper: tends to the success probability).
///
/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpfj_result_latency_cdf(res: *const MpfjResult, t: f64, out: *mut f64) -> MpfjStatus {
    with_result(res, out, |m| Ok(m.latency_cdf.as_cdf().cdf(t)))
}

/// PAoI CDF at `t` seconds; `Unavailable` when the engine produced no PAoI law.
///
/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpfj_result_paoi_cdf(res: *const MpfjResult, t: f64, out: *mut f64) -> MpfjStatus {
    with_result(res, out, |m| match &m.paoi_cdf {
        Some(p) => Ok(p.as_cdf().cdf(t)),
        None => Err((MpfjStatus::Unavailable, "no PAoI law for this result".into())),
    })
}

/// PAoI percentile at `level ∈ (0, 1)`; `+inf` when the level is never reached.
///
/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpfj_result_paoi_percentile(res: *const MpfjResult, level: f64, out: *mut f64) -> MpfjStatus {
    with_result(res, out, |m| {
        let p = m
            .paoi_cdf
            .as_ref()
            .ok_or((MpfjStatus::Unavailable, "no PAoI law for this result".to_string()))?;
        percentile(p.as_cdf(), level).map_err(|e| (MpfjStatus::InvalidArgument, e.to_string()))
    })
}
