//! C ABI over the dwellcast pipeline.
//!
//! Every fallible call returns a [`DcStatus`]; on failure the message is kept
//! per thread and read back with [`dc_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dwellcast::evaluation::{impact_estimate, ImpactParams};
use dwellcast::learners::{auc, youden_threshold, TrainedModel};
use dwellcast::linkage::trigram_similarity;
use dwellcast::ontology::OntologyStore;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Panic = 5,
}

/// A loaded ontology store.
pub struct DcStore {
    inner: OntologyStore,
}

/// A trained model loaded from the registry.
pub struct DcModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), (DcStatus, String)>) -> DcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DcStatus::Panic
        }
    }
}

fn null(what: &str) -> (DcStatus, String) {
    (DcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (DcStatus, String) {
    (DcStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, (DcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (DcStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the NUL, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Runs the command-line interface with `argv` (including the program name)
/// and returns its exit code.
///
/// # Safety
/// `argv` must point to `argc` valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn dc_cli_run(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args = Vec::new();
    let mut code = 0;
    let status = guard(|| {
        let ptrs = slice_arg(argv, argc.max(0) as usize, "argv")?;
        for (i, &p) in ptrs.iter().enumerate() {
            args.push(str_arg(p, &format!("argv[{i}]"))?.to_string());
        }
        code = dwellcast::cli::run(&args);
        Ok(())
    });
    if status == DcStatus::Ok {
        code
    } else {
        2
    }
}

/// Loads a store directory written by the `ingest`, `link` or `classify` stage.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_store_load(dir: *const c_char, out: *mut *mut DcStore) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dir = path_arg(dir, "dir")?;
        let inner = OntologyStore::load(dir).map_err(|e| (DcStatus::Format, e.to_string()))?;
        *out = Box::into_raw(Box::new(DcStore { inner }));
        Ok(())
    })
}

/// Number of containers in the store, or 0 for a null handle.
///
/// # Safety
/// `store` must be null or a live handle from [`dc_store_load`].
#[no_mangle]
pub unsafe extern "C" fn dc_store_len(store: *const DcStore) -> usize {
    store.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `store` must be null or a handle from [`dc_store_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dc_store_free(store: *mut DcStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Loads a model file from a registry's `models/` directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_model_load(path: *const c_char, out: *mut *mut DcModel) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let inner = TrainedModel::load(path).map_err(|e| match e {
            dwellcast::learners::LearnError::Io(_) => (DcStatus::Io, e.to_string()),
            _ => (DcStatus::Format, e.to_string()),
        })?;
        *out = Box::into_raw(Box::new(DcModel { inner }));
        Ok(())
    })
}

/// Feature count the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_model_n_features(model: *const DcModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_features)
}

/// Scores `n_rows` rows of row-major `x` (`n_rows * n_cols` values) into `out`.
///
/// # Safety
/// `x` must hold `n_rows * n_cols` doubles and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn dc_model_predict(
    model: *const DcModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> DcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if n_cols != m.inner.n_features {
            return Err(invalid(format!("expected {} columns, got {n_cols}", m.inner.n_features)));
        }
        let len = n_rows.checked_mul(n_cols).ok_or_else(|| invalid("size overflow"))?;
        let x = slice_arg(x, len, "x")?;
        if out.is_null() && n_rows > 0 {
            return Err(null("out"));
        }
        let scores = m.inner.predict_rows(x).map_err(|e| invalid(e.to_string()))?;
        if n_rows > 0 {
            ptr::copy_nonoverlapping(scores.as_ptr(), out, n_rows);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`dc_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dc_model_free(model: *mut DcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Handling-reduction bound `alpha*beta*delta_s + alpha*(1-beta)*delta_d`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_impact_estimate(alpha: f64, beta: f64, delta_s: f64, delta_d: f64, out: *mut f64) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = ImpactParams { alpha, beta, delta_s, delta_d };
        *out = impact_estimate(&p).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Jaccard similarity of the character-trigram sets of two names.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trigram_similarity(a: *const c_char, b: *const c_char, out: *mut f64) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = trigram_similarity(str_arg(a, "a")?, str_arg(b, "b")?);
        Ok(())
    })
}

unsafe fn scored<'a>(scores: *const f64, labels: *const u8, n: usize) -> Result<(&'a [f64], Vec<bool>), (DcStatus, String)> {
    let s = slice_arg(scores, n, "scores")?;
    let l = slice_arg(labels, n, "labels")?;
    Ok((s, l.iter().map(|&v| v != 0).collect()))
}

/// Area under the ROC curve. `labels` are 0/1 bytes.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (s, l) = scored(scores, labels, n)?;
        *out = auc(s, &l).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Threshold maximising TPR - FPR; a score is positive when strictly above it.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_youden_threshold(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (s, l) = scored(scores, labels, n)?;
        *out = youden_threshold(s, &l).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    })
}

/// Writes the indices of the `min(k, n)` highest scores to `out_idx`, best
/// first, ties by lower index. `*written` receives the count.
///
/// # Safety
/// `scores` must hold `n` values, `out_idx` room for `min(k, n)`.
#[no_mangle]
pub unsafe extern "C" fn dc_rank_topk(scores: *const f64, n: usize, k: usize, out_idx: *mut usize, written: *mut usize) -> DcStatus {
    guard(|| {
        if out_idx.is_null() || written.is_null() {
            return Err(null("out_idx/written"));
        }
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        let s = slice_arg(scores, n, "scores")?;
        if s.is_empty() {
            return Err(invalid("empty score set"));
        }
        if let Some(i) = s.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("score {i} is not finite")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        let m = k.min(n);
        ptr::copy_nonoverlapping(order.as_ptr(), out_idx, m);
        *written = m;
        Ok(())
    })
}
