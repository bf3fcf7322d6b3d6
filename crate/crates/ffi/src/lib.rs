//! C interface to `esc-core`.
//!
//! Configs and trajectory records are opaque handles owned by the caller
//! and released with the matching `_free` function. Every fallible call
//! returns an [`EscStatus`]; on failure the message is available from
//! [`esc_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use esc_core::cli::execute;
use esc_core::config::Config;
use esc_core::gekf::MeasurementModel;
use esc_core::io::emit_csv;
use esc_core::metrics::{MetricsOptions, RunMetrics};
use esc_core::sim::{Scenario, TrajectoryRecord, COLUMNS};
use esc_core::Error;

/// Status codes. Values 0 to 2 match the exit codes of the `esc` binary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscStatus {
    Ok = 0,
    ConfigError = 1,
    NumericalAbort = 2,
    InvalidArgument = 3,
    IoError = 4,
    Panic = 5,
}

/// Measurement model override for filter-driven scenarios.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscMeasurementModel {
    Derived = 0,
    PaperLiteral = 1,
}

/// Parsed and validated set of scenarios.
pub struct EscConfig {
    config: Config,
    names: Vec<CString>,
}

/// Trajectory of one run, complete or cut short by a numerical abort.
pub struct EscRecord {
    record: TrajectoryRecord,
    scenario: Scenario,
    metrics: MetricsOptions,
}

/// Number of values in one trajectory row.
pub const ESC_COLUMNS: usize = 18;

const _: () = assert!(COLUMNS.len() == ESC_COLUMNS);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (EscStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn classify(e: &Error) -> EscStatus {
    match e {
        Error::Io { .. } => EscStatus::IoError,
        Error::NonFinite { .. } | Error::NotPositiveSemiDefinite { .. } => {
            EscStatus::NumericalAbort
        }
        _ => EscStatus::ConfigError,
    }
}

fn fail(e: Error) -> Failure {
    (classify(&e), e.to_string())
}

fn invalid(msg: &str) -> Failure {
    (EscStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<EscStatus, Failure>) -> EscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EscStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(&format!("{what} is null")))
}

fn wrap_config(config: Config) -> *mut EscConfig {
    let names = config
        .scenarios
        .keys()
        .map(|n| CString::new(n.as_str()).unwrap_or_default())
        .collect();
    Box::into_raw(Box::new(EscConfig { config, names }))
}

unsafe fn load_config(
    out: *mut *mut EscConfig,
    load: impl FnOnce() -> Result<Config, Failure>,
) -> EscStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        *slot = wrap_config(load()?);
        Ok(EscStatus::Ok)
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn esc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn esc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a TOML config file. With `force`, invalid scenarios are kept.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn esc_config_from_path(
    path: *const c_char,
    force: bool,
    out: *mut *mut EscConfig,
) -> EscStatus {
    load_config(out, || {
        let path = str_arg(path, "path")?;
        Config::load(Path::new(path), force).map_err(fail)
    })
}

/// Parses a TOML config held in memory.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn esc_config_from_str(
    text: *const c_char,
    force: bool,
    out: *mut *mut EscConfig,
) -> EscStatus {
    load_config(out, || {
        let text = str_arg(text, "text")?;
        Config::parse(text, force).map_err(fail)
    })
}

/// Loads one of the bundled configs by name.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn esc_config_from_preset(
    name: *const c_char,
    out: *mut *mut EscConfig,
) -> EscStatus {
    load_config(out, || {
        let name = str_arg(name, "name")?;
        Config::preset(name).map_err(fail)
    })
}

/// # Safety
/// `config` must come from an `esc_config_from_*` call, or be null.
#[no_mangle]
pub unsafe extern "C" fn esc_config_free(config: *mut EscConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Number of scenarios in `config`, 0 if it is null.
///
/// # Safety
/// `config` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn esc_config_scenario_count(config: *const EscConfig) -> usize {
    config.as_ref().map_or(0, |c| c.names.len())
}

/// Name of scenario `index` in sorted order, or null when out of range.
/// Owned by the config.
///
/// # Safety
/// `config` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn esc_config_scenario_name(
    config: *const EscConfig,
    index: usize,
) -> *const c_char {
    config
        .as_ref()
        .and_then(|c| c.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Replaces the seed of every scenario.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn esc_config_set_seed(config: *mut EscConfig, seed: u64) -> EscStatus {
    guard(|| {
        out_arg(config, "config")?.config.override_seed(seed);
        Ok(EscStatus::Ok)
    })
}

/// Replaces the measurement model of every filter-driven scenario.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn esc_config_set_measurement_model(
    config: *mut EscConfig,
    model: EscMeasurementModel,
) -> EscStatus {
    guard(|| {
        let model = match model {
            EscMeasurementModel::Derived => MeasurementModel::Derived,
            EscMeasurementModel::PaperLiteral => MeasurementModel::PaperLiteral,
        };
        out_arg(config, "config")?.config.override_measurement_model(model);
        Ok(EscStatus::Ok)
    })
}

/// Runs scenario `name`. On a numerical abort the partial record is still
/// returned through `out` together with `EscStatus::NumericalAbort`.
///
/// # Safety
/// `config` must be a live handle, `name` a nul-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn esc_run(
    config: *const EscConfig,
    name: *const c_char,
    out: *mut *mut EscRecord,
) -> EscStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let cfg = &ref_arg(config, "config")?.config;
        let scenario = cfg.scenario(str_arg(name, "name")?).map_err(fail)?;
        let ex = execute(scenario, cfg.forced).map_err(fail)?;
        *slot = Box::into_raw(Box::new(EscRecord {
            record: ex.record,
            scenario: scenario.clone(),
            metrics: cfg.metrics,
        }));
        match ex.error {
            None => Ok(EscStatus::Ok),
            Some(e) => Err((EscStatus::NumericalAbort, e.to_string())),
        }
    })
}

/// # Safety
/// `record` must come from [`esc_run`], or be null.
#[no_mangle]
pub unsafe extern "C" fn esc_record_free(record: *mut EscRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Number of rows in `record`, 0 if it is null.
///
/// # Safety
/// `record` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn esc_record_len(record: *const EscRecord) -> usize {
    record.as_ref().map_or(0, |r| r.record.samples.len())
}

/// Header name of column `index`, or null when out of range.
#[no_mangle]
pub extern "C" fn esc_column_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        COLUMNS.iter().map(|n| CString::new(*n).expect("plain ascii")).collect()
    });
    names.get(index).map_or(ptr::null(), |n| n.as_ptr())
}

/// Copies row `index` into `buf`, which must hold `ESC_COLUMNS` values.
/// Missing filter quantities are NaN.
///
/// # Safety
/// `record` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn esc_record_row(
    record: *const EscRecord,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> EscStatus {
    guard(|| {
        let r = ref_arg(record, "record")?;
        if buf.is_null() || len < ESC_COLUMNS {
            return Err(invalid("row buffer is null or shorter than ESC_COLUMNS"));
        }
        let s = r
            .record
            .samples
            .get(index)
            .ok_or_else(|| invalid(&format!("row {index} out of range")))?;
        std::slice::from_raw_parts_mut(buf, ESC_COLUMNS).copy_from_slice(&s.to_row());
        Ok(EscStatus::Ok)
    })
}

/// Copies column `column` into `buf`, which must hold `esc_record_len`
/// values.
///
/// # Safety
/// `record` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn esc_record_column(
    record: *const EscRecord,
    column: usize,
    buf: *mut f64,
    len: usize,
) -> EscStatus {
    guard(|| {
        let r = ref_arg(record, "record")?;
        let n = r.record.samples.len();
        if column >= ESC_COLUMNS {
            return Err(invalid(&format!("column {column} out of range")));
        }
        if n == 0 {
            return Ok(EscStatus::Ok);
        }
        if buf.is_null() || len < n {
            return Err(invalid("column buffer is null or shorter than the record"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, n);
        for (d, s) in dst.iter_mut().zip(&r.record.samples) {
            *d = s.to_row()[column];
        }
        Ok(EscStatus::Ok)
    })
}

/// Writes the record as a trajectory CSV.
///
/// # Safety
/// `record` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn esc_record_write_csv(
    record: *const EscRecord,
    path: *const c_char,
) -> EscStatus {
    guard(|| {
        let r = ref_arg(record, "record")?;
        let path = str_arg(path, "path")?;
        emit_csv(&r.record, Path::new(path)).map_err(fail)?;
        Ok(EscStatus::Ok)
    })
}

/// Run metrics as a JSON object. The string is written to `out` and must
/// be released with [`esc_string_free`].
///
/// # Safety
/// `record` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn esc_record_metrics_json(
    record: *const EscRecord,
    out: *mut *mut c_char,
) -> EscStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let r = ref_arg(record, "record")?;
        let m = RunMetrics::compute(&r.record, &r.scenario, &r.metrics).map_err(fail)?;
        let text = serde_json::to_string(&m).map_err(|e| invalid(&e.to_string()))?;
        *slot = CString::new(text).expect("json has no nul bytes").into_raw();
        Ok(EscStatus::Ok)
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn esc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
