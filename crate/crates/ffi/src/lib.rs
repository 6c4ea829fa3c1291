//! C interface to the radiocast simulator.
//!
//! Experiments go in as JSON configs and results come out as JSON or CSV
//! strings. Handles are opaque and owned by the caller until passed to the
//! matching `*_free` function. Every fallible call returns an [`RcStatus`];
//! on failure [`rc_last_error`] describes what went wrong on this thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use radiocast::harness::{run_experiment, ExperimentConfig, HarnessError, SweepResult};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Io = 4,
    /// A run finished but at least one row failed its correctness check.
    Incorrect = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A validated experiment config.
pub struct RcExperiment(ExperimentConfig);

/// Rows of a finished sweep.
pub struct RcResult(SweepResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: RcStatus, msg: impl Into<String>) -> RcStatus {
    set_error(msg);
    status
}

fn harness_status(e: &HarnessError) -> RcStatus {
    match e {
        HarnessError::Io(_) | HarnessError::Csv(_) => RcStatus::Io,
        _ => RcStatus::InvalidConfig,
    }
}

fn guard(f: impl FnOnce() -> RcStatus) -> RcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RcStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, RcStatus> {
    if s.is_null() {
        return Err(fail(RcStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(RcStatus::InvalidUtf8, e.to_string()))
}

fn give_string(s: String, out: *mut *mut c_char) -> RcStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: callers check `out` for null first.
            unsafe { *out = c.into_raw() };
            RcStatus::Ok
        }
        Err(e) => fail(RcStatus::InvalidUtf8, e.to_string()),
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON experiment config.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_experiment_from_json(
    json: *const c_char,
    out: *mut *mut RcExperiment,
) -> RcStatus {
    guard(|| {
        if out.is_null() {
            return fail(RcStatus::NullPointer, "null out pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_json(text).and_then(|c| c.validate().map(|()| c)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(RcExperiment(cfg)));
                RcStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// Runs the experiment. On `Ok` and on `Incorrect` a result handle is
/// written to `out`.
///
/// # Safety
/// `exp` must come from [`rc_experiment_from_json`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_experiment_run(
    exp: *const RcExperiment,
    out: *mut *mut RcResult,
) -> RcStatus {
    guard(|| {
        if exp.is_null() || out.is_null() {
            return fail(RcStatus::NullPointer, "null handle");
        }
        match run_experiment(&(*exp).0) {
            Ok(res) => {
                let correct = res.all_correct();
                *out = Box::into_raw(Box::new(RcResult(res)));
                if correct {
                    RcStatus::Ok
                } else {
                    fail(RcStatus::Incorrect, "some runs were incorrect")
                }
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `exp` must come from [`rc_experiment_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rc_experiment_free(exp: *mut RcExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `res` must come from [`rc_experiment_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rc_result_len(res: *const RcResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.rows.len())
}

/// Termination round count and correctness of row `index`.
///
/// # Safety
/// `res` must come from [`rc_experiment_run`]; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_result_row(
    res: *const RcResult,
    index: usize,
    rounds: *mut u64,
    correct: *mut bool,
) -> RcStatus {
    guard(|| {
        if res.is_null() || rounds.is_null() || correct.is_null() {
            return fail(RcStatus::NullPointer, "null pointer");
        }
        let rows = &(*res).0.rows;
        let Some(row) = rows.get(index) else {
            return fail(RcStatus::OutOfRange, format!("row {index} out of range"));
        };
        *rounds = row.rounds;
        *correct = row.correct;
        RcStatus::Ok
    })
}

/// Writes the result as a JSON string; free it with [`rc_string_free`].
///
/// # Safety
/// `res` must come from [`rc_experiment_run`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_result_to_json(
    res: *const RcResult,
    out: *mut *mut c_char,
) -> RcStatus {
    guard(|| match (res.as_ref(), out.is_null()) {
        (Some(r), false) => give_string(r.0.to_json(), out),
        _ => fail(RcStatus::NullPointer, "null pointer"),
    })
}

/// Writes the result as CSV; free it with [`rc_string_free`].
///
/// # Safety
/// `res` must come from [`rc_experiment_run`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_result_to_csv(res: *const RcResult, out: *mut *mut c_char) -> RcStatus {
    guard(|| match (res.as_ref(), out.is_null()) {
        (Some(r), false) => give_string(r.0.to_csv(), out),
        _ => fail(RcStatus::NullPointer, "null pointer"),
    })
}

/// # Safety
/// `res` must come from [`rc_experiment_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rc_result_free(res: *mut RcResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn rc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
