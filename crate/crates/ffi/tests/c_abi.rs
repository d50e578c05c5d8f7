use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use fairlink_ffi::*;

fn last_error() -> String {
    let p = fl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { fl_string_free(p) };
    s
}

fn synth() -> *mut FlDataset {
    let mut ds = ptr::null_mut();
    let st = unsafe { fl_dataset_synth(40, 2, 0.4, 0.05, 3, &mut ds) };
    assert_eq!(st, FlStatus::Ok);
    ds
}

#[test]
fn train_query_and_roundtrip() {
    let ds = synth();
    unsafe {
        assert_eq!(fl_dataset_node_count(ds), 40);
        assert_eq!(fl_dataset_group_count(ds), 2);
        assert!(fl_dataset_edge_count(ds) > 0);

        let cfg = CString::new(r#"{"model":"dot","dim":4,"epochs":5,"criterion":"dp","gamma":10}"#).unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(fl_train(ds, cfg.as_ptr(), &mut model), FlStatus::Ok);
        assert_eq!(fl_model_node_count(model), 40);

        let mut p = 0.0;
        assert_eq!(fl_model_probability(model, 0, 1, &mut p), FlStatus::Ok);
        assert!(p > 0.0 && p < 1.0);

        let mut json = ptr::null_mut();
        assert_eq!(fl_model_to_json(model, &mut json), FlStatus::Ok);
        let text = CString::new(take_string(json)).unwrap();
        let mut restored = ptr::null_mut();
        assert_eq!(fl_model_from_json(text.as_ptr(), &mut restored), FlStatus::Ok);
        let mut q = 0.0;
        assert_eq!(fl_model_probability(restored, 0, 1, &mut q), FlStatus::Ok);
        assert_eq!(p, q);

        let crit = CString::new("dp").unwrap();
        let mut proj = ptr::null_mut();
        assert_eq!(fl_model_projection(model, ds, crit.as_ptr(), &mut proj), FlStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(proj)).unwrap();
        assert!(v["kl"].as_f64().unwrap() >= 0.0);
        assert_eq!(v["lambda"].as_array().unwrap().len(), 3);
        assert_eq!(v["converged"], true);

        fl_model_free(restored);
        fl_model_free(model);
        fl_dataset_free(ds);
    }
}

#[test]
fn evaluate_returns_report() {
    let ds = synth();
    unsafe {
        let cfg = CString::new(r#"{"model":"maxent"}"#).unwrap();
        let mut json = ptr::null_mut();
        assert_eq!(fl_evaluate(ds, cfg.as_ptr(), 0.2, 1, &mut json), FlStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        let auc = v["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert!(v["rb"].is_null());
        fl_dataset_free(ds);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(fl_dataset_synth(10, 2, 0.1, 0.5, 0, &mut ds), FlStatus::Config);
        assert!(last_error().contains("p_inter"));
        assert!(ds.is_null());

        let missing = CString::new("/nonexistent/edges.txt").unwrap();
        assert_eq!(fl_dataset_load(missing.as_ptr(), missing.as_ptr(), false, &mut ds), FlStatus::Io);

        assert_eq!(
            fl_dataset_load(ptr::null(), missing.as_ptr(), false, &mut ds),
            FlStatus::NullPointer
        );

        let ds = synth();
        let bad = CString::new(r#"{"epochs":0}"#).unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(fl_train(ds, bad.as_ptr(), &mut model), FlStatus::Config);
        let garbage = CString::new("{not json").unwrap();
        assert_eq!(fl_train(ds, garbage.as_ptr(), &mut model), FlStatus::Json);

        let cfg = CString::new(r#"{"model":"maxent"}"#).unwrap();
        assert_eq!(fl_train(ds, cfg.as_ptr(), &mut model), FlStatus::Ok);
        let mut p = 0.0;
        assert_eq!(fl_model_probability(model, 0, 40, &mut p), FlStatus::InvalidArgument);
        let none = CString::new("none").unwrap();
        let mut json = ptr::null_mut();
        assert_eq!(fl_model_projection(model, ds, none.as_ptr(), &mut json), FlStatus::InvalidArgument);

        fl_model_free(model);
        fl_dataset_free(ds);
        fl_dataset_free(ptr::null_mut());
        fl_string_free(ptr::null_mut());
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fairlink.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["fl_dataset_load", "fl_train", "fl_model_projection", "fl_last_error", "FL_STATUS_PANIC"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax-check with a C compiler when one is installed.
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
