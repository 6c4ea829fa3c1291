use std::ffi::{c_char, CStr, CString};
use std::ptr;

use radiocast_ffi::*;

fn config(json: &str) -> (RcStatus, *mut RcExperiment) {
    let text = CString::new(json).unwrap();
    let mut exp = ptr::null_mut();
    let status = unsafe { rc_experiment_from_json(text.as_ptr(), &mut exp) };
    (status, exp)
}

fn last_error() -> String {
    let p = rc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { rc_string_free(p) };
    s
}

#[test]
fn runs_a_sweep_end_to_end() {
    let (status, exp) = config(
        r#"{"protocol":"ack-broadcast","seeds":[0,1],
            "topology":{"from":"generated","shape":"directed_cycle","n":3,"sizes":[3,4]}}"#,
    );
    assert_eq!(status, RcStatus::Ok);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { rc_experiment_run(exp, &mut res) }, RcStatus::Ok);
    assert_eq!(unsafe { rc_result_len(res) }, 4);
    let (mut rounds, mut correct) = (0u64, false);
    assert_eq!(
        unsafe { rc_result_row(res, 3, &mut rounds, &mut correct) },
        RcStatus::Ok
    );
    assert!(correct && rounds > 0);
    assert_eq!(
        unsafe { rc_result_row(res, 4, &mut rounds, &mut correct) },
        RcStatus::OutOfRange
    );
    assert!(last_error().contains("out of range"));

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rc_result_to_csv(res, &mut s) }, RcStatus::Ok);
    let csv = take(s);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("n,seed,topology,"));
    assert_eq!(unsafe { rc_result_to_json(res, &mut s) }, RcStatus::Ok);
    assert!(take(s).contains("\"rows\""));

    unsafe {
        rc_result_free(res);
        rc_experiment_free(exp);
    }
}

#[test]
fn bad_configs_report_errors() {
    let (status, exp) = config("{not json");
    assert_eq!(status, RcStatus::InvalidConfig);
    assert!(exp.is_null());
    assert!(!last_error().is_empty());

    let (status, _) = config(
        r#"{"protocol":"ack-gossip-cd","channel":"nocd",
            "topology":{"from":"generated","shape":"clique","n":3}}"#,
    );
    assert_eq!(status, RcStatus::InvalidConfig);
    assert!(last_error().contains("channel"));
}

#[test]
fn missing_file_is_an_io_error() {
    let (status, exp) = config(
        r#"{"protocol":"ack-broadcast","topology":{"from":"file","path":"/nonexistent/t.json"}}"#,
    );
    assert_eq!(status, RcStatus::Ok);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { rc_experiment_run(exp, &mut res) }, RcStatus::Io);
    assert!(res.is_null());
    unsafe { rc_experiment_free(exp) };
}

#[test]
fn null_pointers_are_rejected() {
    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { rc_experiment_from_json(ptr::null(), &mut exp) },
        RcStatus::NullPointer
    );
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { rc_experiment_run(ptr::null(), &mut res) },
        RcStatus::NullPointer
    );
    assert_eq!(unsafe { rc_result_len(ptr::null()) }, 0);
    unsafe {
        rc_result_free(ptr::null_mut());
        rc_experiment_free(ptr::null_mut());
        rc_string_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(rc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/radiocast.h"))
            .unwrap();
    for name in [
        "typedef struct RcExperiment RcExperiment",
        "typedef struct RcResult RcResult",
        "RC_STATUS_OK = 0",
        "rc_experiment_from_json",
        "rc_experiment_run",
        "rc_result_to_csv",
        "rc_string_free",
        "rc_last_error",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
