//! C ABI over the questline pipeline: opaque config handles, status codes,
//! and JSON strings across the boundary.
//!
//! Ownership rules: every `char*` returned through an out-parameter must be
//! released with [`ql_string_free`]; every handle from [`ql_config_new`]
//! must be released with [`ql_config_free`]. All functions tolerate null
//! pointers and report `QL_STATUS_INVALID_ARG` instead of crashing.

// Every raw pointer is null-checked before any dereference; callers own the
// usual C-side validity obligations documented above.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use questline::evalkit::{self, PoolingMode};
use questline::pipeline::{self, PipelineError, RunConfig};
use questline::provider::ScriptedProvider;
use questline::store::RunStore;

/// Status codes returned by every fallible entry point. The run-outcome
/// values mirror the CLI exit codes (halted = 2, completed with skips = 3,
/// configuration error = 4).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QlStatus {
    Ok = 0,
    InvalidArg = 1,
    Halted = 2,
    CompletedWithSkips = 3,
    ConfigError = 4,
    IoError = 5,
    ParseError = 6,
    LintErrors = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<Vec<u8>>) {
    let text = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

/// Opaque pipeline configuration handle.
pub struct QlConfig {
    run: RunConfig,
    out_dir: PathBuf,
}

fn to_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().ok()
}

fn emit(out: *mut *mut c_char, text: String) -> bool {
    if out.is_null() {
        return true;
    }
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            true
        }
        Err(_) => {
            set_last_error("output contained an interior NUL byte");
            false
        }
    }
}

/// Create a configuration with library defaults and a fresh run id.
/// Never returns null.
#[no_mangle]
pub extern "C" fn ql_config_new() -> *mut QlConfig {
    Box::into_raw(Box::new(QlConfig {
        run: RunConfig::new(pipeline::generate_run_id()),
        out_dir: PathBuf::from("out"),
    }))
}

/// Release a configuration handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn ql_config_free(config: *mut QlConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Set the run identifier.
#[no_mangle]
pub extern "C" fn ql_config_set_run_id(config: *mut QlConfig, run_id: *const c_char) -> QlStatus {
    let (Some(config), Some(run_id)) = (unsafe { config.as_mut() }, to_str(run_id)) else {
        set_last_error("null or non-UTF-8 argument");
        return QlStatus::InvalidArg;
    };
    config.run.run_id = run_id.to_string();
    QlStatus::Ok
}

/// Set the artifact store root directory.
#[no_mangle]
pub extern "C" fn ql_config_set_out_dir(config: *mut QlConfig, out_dir: *const c_char) -> QlStatus {
    let (Some(config), Some(out_dir)) = (unsafe { config.as_mut() }, to_str(out_dir)) else {
        set_last_error("null or non-UTF-8 argument");
        return QlStatus::InvalidArg;
    };
    config.out_dir = PathBuf::from(out_dir);
    QlStatus::Ok
}

/// Set requested roster and quest-set sizes.
#[no_mangle]
pub extern "C" fn ql_config_set_counts(
    config: *mut QlConfig,
    npcs: usize,
    quests: usize,
) -> QlStatus {
    let Some(config) = (unsafe { config.as_mut() }) else {
        set_last_error("null config");
        return QlStatus::InvalidArg;
    };
    config.run.counts.npcs = npcs;
    config.run.counts.quests = quests;
    QlStatus::Ok
}

/// Set content retries per stage (attempts = retries + 1).
#[no_mangle]
pub extern "C" fn ql_config_set_retries(config: *mut QlConfig, retries: u32) -> QlStatus {
    let Some(config) = (unsafe { config.as_mut() }) else {
        set_last_error("null config");
        return QlStatus::InvalidArg;
    };
    config.run.retries_per_stage = retries;
    QlStatus::Ok
}

/// Escalate roster/quest-set count mismatches from warning to error.
#[no_mangle]
pub extern "C" fn ql_config_set_strict_counts(config: *mut QlConfig, strict: bool) -> QlStatus {
    let Some(config) = (unsafe { config.as_mut() }) else {
        set_last_error("null config");
        return QlStatus::InvalidArg;
    };
    config.run.strict_counts = strict;
    QlStatus::Ok
}

/// Execute a full pipeline run against a scripted fixture file. On return,
/// `*manifest_json` (when non-null) holds the run manifest as JSON; release
/// it with [`ql_string_free`]. Returns `QL_STATUS_OK`, `_HALTED`,
/// `_COMPLETED_WITH_SKIPS`, or an error status.
#[no_mangle]
pub extern "C" fn ql_run_fixture(
    config: *const QlConfig,
    fixture_path: *const c_char,
    manifest_json: *mut *mut c_char,
) -> QlStatus {
    let (Some(config), Some(fixture_path)) = (unsafe { config.as_ref() }, to_str(fixture_path))
    else {
        set_last_error("null or non-UTF-8 argument");
        return QlStatus::InvalidArg;
    };
    let provider = match ScriptedProvider::from_path(Path::new(fixture_path)) {
        Ok(provider) => provider,
        Err(e) => {
            set_last_error(e.to_string());
            return QlStatus::ParseError;
        }
    };
    let store = RunStore::new(&config.out_dir);
    let (manifest, status) = match pipeline::execute_run(&config.run, &provider, &store) {
        Ok(manifest) => {
            let status = match manifest.status {
                pipeline::RunStatus::Complete => QlStatus::Ok,
                pipeline::RunStatus::CompleteWithSkips => QlStatus::CompletedWithSkips,
                pipeline::RunStatus::Halted(_) => QlStatus::Halted,
            };
            (manifest, status)
        }
        Err(PipelineError::Halted {
            manifest, cause, ..
        }) => {
            set_last_error(cause);
            (*manifest, QlStatus::Halted)
        }
        Err(PipelineError::Config(message)) => {
            set_last_error(message);
            return QlStatus::ConfigError;
        }
        Err(other) => {
            set_last_error(other.to_string());
            return QlStatus::IoError;
        }
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if !emit(manifest_json, json) {
        return QlStatus::InvalidArg;
    }
    status
}

/// Lint a persisted run. `*findings_json` receives the findings array as
/// JSON. Returns `QL_STATUS_LINT_ERRORS` when any error-severity finding
/// exists, `QL_STATUS_OK` when clean.
#[no_mangle]
pub extern "C" fn ql_lint_run(
    out_dir: *const c_char,
    run_id: *const c_char,
    findings_json: *mut *mut c_char,
) -> QlStatus {
    let (Some(out_dir), Some(run_id)) = (to_str(out_dir), to_str(run_id)) else {
        set_last_error("null or non-UTF-8 argument");
        return QlStatus::InvalidArg;
    };
    let store = RunStore::new(out_dir);
    let (state, manifest) = match store.load_run(run_id) {
        Ok(loaded) => loaded,
        Err(e) => {
            set_last_error(e.to_string());
            return QlStatus::IoError;
        }
    };
    let findings = questline::consistency::lint_run(&state, Some(manifest.config.counts));
    let has_errors = findings
        .iter()
        .any(|f| f.severity == questline::schema::Severity::Error);
    let json = serde_json::to_string_pretty(&findings).expect("findings serialize");
    if !emit(findings_json, json) {
        return QlStatus::InvalidArg;
    }
    if has_errors {
        QlStatus::LintErrors
    } else {
        QlStatus::Ok
    }
}

/// Aggregate a Likert score file (.csv or .jsonl) into the category table.
/// `*table_json` receives the table as JSON.
#[no_mangle]
pub extern "C" fn ql_eval_scores(
    scores_path: *const c_char,
    table_json: *mut *mut c_char,
) -> QlStatus {
    let Some(scores_path) = to_str(scores_path) else {
        set_last_error("null or non-UTF-8 argument");
        return QlStatus::InvalidArg;
    };
    let records = match evalkit::ingest_scores(Path::new(scores_path)) {
        Ok(records) => records,
        Err(e) => {
            set_last_error(e.to_string());
            return QlStatus::ParseError;
        }
    };
    let table = match evalkit::aggregate(&records, PoolingMode::Pooled, &[]) {
        Ok(table) => table,
        Err(e) => {
            set_last_error(e.to_string());
            return QlStatus::ParseError;
        }
    };
    let json =
        serde_json::to_string_pretty(&evalkit::table_json(&table)).expect("table serializes");
    if !emit(table_json, json) {
        return QlStatus::InvalidArg;
    }
    QlStatus::Ok
}

/// The last error message recorded on this thread, or null. The returned
/// string must be released with [`ql_string_free`].
#[no_mangle]
pub extern "C" fn ql_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.clone().into_raw())
            .unwrap_or(std::ptr::null_mut())
    })
}

/// Release a string returned by this library. Null is a no-op.
#[no_mangle]
pub extern "C" fn ql_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(unsafe { CString::from_raw(text) });
    }
}
