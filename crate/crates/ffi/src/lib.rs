//! C ABI over the `impsim` library.
//!
//! Every fallible call returns an [`ImpsimStatus`]; on failure the message is
//! kept per thread and readable through [`impsim_last_error_message`].
//! Objects are opaque handles created by `*_new`/`*_from_*`/`*_run_*`
//! functions and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use impsim::pilots::{imp_all_pilot_collision_exact, imp_pairwise_collision_probability, tsp_collision_probability};
use impsim::sim::{run_campaign, write_results, MetricsRow, SimConfig};
use impsim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    IllPosed = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Opaque campaign configuration.
pub struct ImpsimConfig(SimConfig);

/// Opaque list of result rows.
pub struct ImpsimResults(Vec<MetricsRow>);

/// One result row. `scheme` is 0 for single-pilot, 1 for multi-pilot.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImpsimRow {
    pub scheme: u32,
    pub w: u32,
    pub snr_db: f64,
    pub n_ue: u32,
    pub bler: f64,
    pub bler_ci95: f64,
    pub avg_attempts_per_ue: f64,
    pub collision_rate: f64,
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    pub n_drops: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: ImpsimStatus, msg: impl Into<String>) -> ImpsimStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> ImpsimStatus {
    let status = match &e {
        Error::InvalidArgument(_) => ImpsimStatus::InvalidArgument,
        Error::IllPosed(_) => ImpsimStatus::IllPosed,
        Error::Config { .. } => ImpsimStatus::Config,
        Error::Io { .. } | Error::Csv { .. } => ImpsimStatus::Io,
    };
    fail(status, e.to_string())
}

/// Clears the last error, runs `f` and turns panics into `Panic`.
fn guard(f: impl FnOnce() -> ImpsimStatus) -> ImpsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ImpsimStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, ImpsimStatus> {
    if ptr.is_null() {
        return Err(fail(ImpsimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(ImpsimStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn emit<T>(out: *mut *mut T, value: T) -> ImpsimStatus {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    ImpsimStatus::Ok
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(ImpsimStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn impsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn impsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration holding the desk preset.
#[no_mangle]
pub extern "C" fn impsim_config_new(out: *mut *mut ImpsimConfig) -> ImpsimStatus {
    guard(|| {
        non_null!(out);
        emit(out, ImpsimConfig(SimConfig::desk_preset()))
    })
}

/// Parses configuration text in the `key = value` format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn impsim_config_parse(text: *const c_char, out: *mut *mut ImpsimConfig) -> ImpsimStatus {
    guard(|| {
        non_null!(out);
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match SimConfig::parse(text) {
            Ok(c) => emit(out, ImpsimConfig(c)),
            Err(e) => from_error(e),
        }
    })
}

/// Loads a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn impsim_config_from_file(path: *const c_char, out: *mut *mut ImpsimConfig) -> ImpsimStatus {
    guard(|| {
        non_null!(out);
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match SimConfig::from_file(Path::new(path)) {
            Ok(c) => emit(out, ImpsimConfig(c)),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn impsim_config_set_seed(config: *mut ImpsimConfig, seed: u64) -> ImpsimStatus {
    guard(|| {
        non_null!(config);
        (*config).0.base_seed = seed;
        ImpsimStatus::Ok
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn impsim_config_set_drops(config: *mut ImpsimConfig, n_drops: u64) -> ImpsimStatus {
    guard(|| {
        non_null!(config);
        if n_drops == 0 {
            return fail(ImpsimStatus::InvalidArgument, "n_drops must be at least 1");
        }
        (*config).0.n_drops = n_drops as usize;
        ImpsimStatus::Ok
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impsim_config_free(config: *mut ImpsimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the full campaign. `threads == 0` uses all cores.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn impsim_run_campaign(
    config: *const ImpsimConfig,
    threads: u32,
    out: *mut *mut ImpsimResults,
) -> ImpsimStatus {
    guard(|| {
        non_null!(config, out);
        let threads = (threads > 0).then_some(threads as usize);
        match run_campaign(&(*config).0, threads) {
            Ok(rows) => emit(out, ImpsimResults(rows)),
            Err(e) => from_error(e),
        }
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn impsim_results_len(results: *const ImpsimResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.len())
}

/// Copies row `index` into `row`.
///
/// # Safety
/// `results` must be a live handle; `row` must be writable.
#[no_mangle]
pub unsafe extern "C" fn impsim_results_get(
    results: *const ImpsimResults,
    index: usize,
    row: *mut ImpsimRow,
) -> ImpsimStatus {
    guard(|| {
        non_null!(results, row);
        let rows = &(*results).0;
        let Some(r) = rows.get(index) else {
            return fail(ImpsimStatus::OutOfRange, format!("row {index} out of range"));
        };
        *row = ImpsimRow {
            scheme: u32::from(r.scheme == "imp"),
            w: r.w as u32,
            snr_db: r.snr_db,
            n_ue: r.n_ue as u32,
            bler: r.bler,
            bler_ci95: r.bler_ci95,
            avg_attempts_per_ue: r.avg_attempts_per_ue,
            collision_rate: r.collision_rate,
            miss_rate: r.miss_rate,
            false_alarm_rate: r.false_alarm_rate,
            n_drops: r.n_drops as u64,
        };
        ImpsimStatus::Ok
    })
}

/// Writes the rows as CSV, same format as the command-line tool.
///
/// # Safety
/// `results` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn impsim_results_write_csv(results: *const ImpsimResults, path: *const c_char) -> ImpsimStatus {
    guard(|| {
        non_null!(results);
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_results(&(*results).0, Path::new(path)) {
            Ok(()) => ImpsimStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `results` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impsim_results_free(results: *mut ImpsimResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Probability that at least two of `n_users` share a pilot from a pool of
/// `pool_size`.
#[no_mangle]
pub extern "C" fn impsim_tsp_collision_probability(pool_size: u32, n_users: u32) -> f64 {
    tsp_collision_probability(pool_size as usize, n_users as usize)
}

/// Union-bound probability that some pair collides on all `w` pilots.
#[no_mangle]
pub extern "C" fn impsim_imp_collision_probability(pool_size: u32, w: u32, n_users: u32) -> f64 {
    imp_pairwise_collision_probability(pool_size as usize, w as usize, n_users as usize)
}

/// Exact counterpart of [`impsim_imp_collision_probability`].
#[no_mangle]
pub extern "C" fn impsim_imp_collision_probability_exact(pool_size: u32, w: u32, n_users: u32) -> f64 {
    imp_all_pilot_collision_exact(pool_size as usize, w as usize, n_users as usize)
}
