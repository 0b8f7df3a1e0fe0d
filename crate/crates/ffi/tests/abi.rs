use std::ffi::{c_char, CStr, CString};
use std::ptr;

use dwellcast::learners::{train, Dataset, HyperParams};
use dwellcast_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { dc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    if n == 0 {
        return String::new();
    }
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(dc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn impact_bounds_and_range_error() {
    let mut out = 0.0;
    assert_eq!(unsafe { dc_impact_estimate(0.75, 0.51, 0.40, 0.20, &mut out) }, DcStatus::Ok);
    assert!((out - 0.2265).abs() < 1e-12);
    assert_eq!(last_error(), "");
    assert_eq!(unsafe { dc_impact_estimate(1.5, 0.51, 0.40, 0.20, &mut out) }, DcStatus::InvalidArgument);
    assert!(last_error().contains("alpha"));
    assert_eq!(unsafe { dc_impact_estimate(0.75, 0.51, 0.40, 0.20, ptr::null_mut()) }, DcStatus::NullPointer);
}

#[test]
fn error_message_truncates_and_reports_length() {
    let mut out = 0.0;
    unsafe { dc_trigram_similarity(ptr::null(), ptr::null(), &mut out) };
    let full = unsafe { dc_last_error_message(ptr::null_mut(), 0) };
    assert!(full > 4);
    let mut small = [1 as c_char; 4];
    assert_eq!(unsafe { dc_last_error_message(small.as_mut_ptr(), 4) }, full);
    assert_eq!(small[3], 0);
}

#[test]
fn similarity_roc_and_ranking() {
    let a = CString::new("ACME LOGISTICS").unwrap();
    let mut s = 0.0;
    assert_eq!(unsafe { dc_trigram_similarity(a.as_ptr(), a.as_ptr(), &mut s) }, DcStatus::Ok);
    assert_eq!(s, 1.0);

    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut auc = 0.0;
    assert_eq!(unsafe { dc_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc) }, DcStatus::Ok);
    assert!((auc - 0.75).abs() < 1e-12);
    let mut thr = 0.0;
    assert_eq!(unsafe { dc_youden_threshold(scores.as_ptr(), labels.as_ptr(), 4, &mut thr) }, DcStatus::Ok);
    assert!(thr < 0.8 && thr >= 0.1);
    let one_class = [1u8; 4];
    assert_eq!(unsafe { dc_auc(scores.as_ptr(), one_class.as_ptr(), 4, &mut auc) }, DcStatus::InvalidArgument);

    let mut idx = [0usize; 3];
    let mut n = 0;
    let tied = [0.5, 0.9, 0.5, 0.1];
    assert_eq!(unsafe { dc_rank_topk(tied.as_ptr(), 4, 3, idx.as_mut_ptr(), &mut n) }, DcStatus::Ok);
    assert_eq!((n, idx), (3, [1, 0, 2]));
    assert_eq!(unsafe { dc_rank_topk(tied.as_ptr(), 4, 0, idx.as_mut_ptr(), &mut n) }, DcStatus::InvalidArgument);
}

#[test]
fn model_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..40).flat_map(|i| [i as f64, (i % 3) as f64]).collect();
    let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
    let data = Dataset::new(x.clone(), 2, y, "schema").unwrap();
    let model = train(&data, &HyperParams::decision_tree(3, 2)).unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut h: *mut DcModel = ptr::null_mut();
    assert_eq!(unsafe { dc_model_load(cpath.as_ptr(), &mut h) }, DcStatus::Ok);
    assert_eq!(unsafe { dc_model_n_features(h) }, 2);
    let mut out = vec![0.0; 40];
    assert_eq!(unsafe { dc_model_predict(h, x.as_ptr(), 40, 2, out.as_mut_ptr()) }, DcStatus::Ok);
    assert_eq!(out, model.predict_rows(&x).unwrap());
    assert_eq!(unsafe { dc_model_predict(h, x.as_ptr(), 20, 4, out.as_mut_ptr()) }, DcStatus::InvalidArgument);
    unsafe { dc_model_free(h) };

    let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dc_model_load(missing.as_ptr(), &mut h) }, DcStatus::Io);
    assert!(h.is_null());
    std::fs::write(dir.path().join("bad.json"), "{").unwrap();
    let bad = CString::new(dir.path().join("bad.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dc_model_load(bad.as_ptr(), &mut h) }, DcStatus::Format);
    unsafe { dc_model_free(ptr::null_mut()) };
}

#[test]
fn store_handle_errors_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let c = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut h: *mut DcStore = ptr::null_mut();
    assert_ne!(unsafe { dc_store_load(c.as_ptr(), &mut h) }, DcStatus::Ok);
    assert!(h.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { dc_store_len(h) }, 0);
    unsafe { dc_store_free(h) };
}

#[test]
fn cli_entry_returns_exit_codes() {
    let args: Vec<CString> = ["dwellcast", "no-such-stage"].iter().map(|s| CString::new(*s).unwrap()).collect();
    let ptrs: Vec<*const c_char> = args.iter().map(|a| a.as_ptr()).collect();
    assert_eq!(unsafe { dc_cli_run(ptrs.len() as i32, ptrs.as_ptr()) }, 2);
}

#[test]
fn header_is_valid_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dwellcast.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["dc_model_predict", "dc_last_error_message", "DC_STATUS_OK", "typedef struct DcModel DcModel"] {
        assert!(text.contains(sym), "{sym}");
    }
    let Ok(status) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() else {
        return; // no C compiler on this host
    };
    assert!(status.success());
}
