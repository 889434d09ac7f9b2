//! C ABI for the windvol library: opaque handles, integer error codes, and
//! a thread-local last-error message. All functions are panic-safe; a panic
//! inside the library surfaces as `WV_ERR_INTERNAL` instead of unwinding
//! across the FFI boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use windvol::ingest::{self, Panel, Variable};
use windvol::preprocess;
use windvol::stgarch;
use windvol::unigarch;
use windvol::weights::{self, WeightMatrix};
use windvol::WindvolError;

/// Success.
pub const WV_OK: i32 = 0;
/// A pointer argument was null or an index out of range.
pub const WV_ERR_ARGUMENT: i32 = 1;
/// Invalid configuration or parameters.
pub const WV_ERR_CONFIG: i32 = 2;
/// Data could not be loaded or failed validation.
pub const WV_ERR_DATA: i32 = 3;
/// A numerical routine failed (non-convergence, singularity, degeneracy).
pub const WV_ERR_NUMERIC: i32 = 4;
/// A panic was caught inside the library.
pub const WV_ERR_INTERNAL: i32 = 5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_for(err: &WindvolError) -> i32 {
    match err {
        WindvolError::ConfigInvalid(_)
        | WindvolError::BadLambda(_)
        | WindvolError::InvalidParams(_) => WV_ERR_CONFIG,
        WindvolError::Io(_)
        | WindvolError::Csv(_)
        | WindvolError::MissingCell { .. }
        | WindvolError::DuplicateRow { .. }
        | WindvolError::NonDailySpacing { .. }
        | WindvolError::UnparseableValue { .. }
        | WindvolError::EmptyPanel
        | WindvolError::BoundaryOutsideRange(_)
        | WindvolError::MissingUpstream(_)
        | WindvolError::DataUnavailable(_) => WV_ERR_DATA,
        WindvolError::Station { source, .. } => code_for(source),
        _ => WV_ERR_NUMERIC,
    }
}

fn guard<F: FnOnce() -> Result<(), (i32, String)>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WV_OK,
        Ok(Err((code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            WV_ERR_INTERNAL
        }
    }
}

fn from_windvol(e: WindvolError) -> (i32, String) {
    (code_for(&e), e.to_string())
}

/// Copy the message for the most recent error on this thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full message length.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes, or be null (the call
/// then only reports the length).
#[no_mangle]
pub unsafe extern "C" fn wv_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let borrow = e.borrow();
        let Some(msg) = borrow.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always terminate
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

// ---------------------------------------------------------------------------
// Panels
// ---------------------------------------------------------------------------

/// Opaque station panel handle.
pub struct WvPanel {
    inner: Panel,
}

/// Load a panel from a CSV file with columns date, station_id, lon, lat,
/// value. `variable` is "ws10" or "ws100". On success `*out` owns the handle;
/// release it with `wv_panel_free`.
///
/// # Safety
/// `path` and `variable` must be valid NUL-terminated strings; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wv_panel_load(
    path: *const c_char,
    variable: *const c_char,
    out: *mut *mut WvPanel,
) -> i32 {
    guard(|| {
        if path.is_null() || variable.is_null() || out.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|e| (WV_ERR_ARGUMENT, e.to_string()))?;
        let var: Variable = unsafe { CStr::from_ptr(variable) }
            .to_str()
            .map_err(|e| (WV_ERR_ARGUMENT, e.to_string()))?
            .parse()
            .map_err(from_windvol)?;
        let panel = ingest::load_panel(Path::new(path), var).map_err(from_windvol)?;
        unsafe { *out = Box::into_raw(Box::new(WvPanel { inner: panel })) };
        Ok(())
    })
}

/// Release a panel handle. Null is ignored.
///
/// # Safety
/// `panel` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wv_panel_free(panel: *mut WvPanel) {
    if !panel.is_null() {
        drop(unsafe { Box::from_raw(panel) });
    }
}

/// Number of days and stations in the panel.
///
/// # Safety
/// `panel` must be a live handle; `t_out` and `n_out` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn wv_panel_dims(
    panel: *const WvPanel,
    t_out: *mut usize,
    n_out: *mut usize,
) -> i32 {
    guard(|| {
        if panel.is_null() {
            return Err((WV_ERR_ARGUMENT, "null panel".into()));
        }
        let p = unsafe { &(*panel).inner };
        if !t_out.is_null() {
            unsafe { *t_out = p.n_days() };
        }
        if !n_out.is_null() {
            unsafe { *n_out = p.n_stations() };
        }
        Ok(())
    })
}

/// Copy the panel values (row-major T x N) into `buf`.
///
/// # Safety
/// `buf` must point to at least T*N doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_panel_values(
    panel: *const WvPanel,
    buf: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        if panel.is_null() || buf.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let p = unsafe { &(*panel).inner };
        let need = p.n_days() * p.n_stations();
        if len < need {
            return Err((WV_ERR_ARGUMENT, format!("buffer holds {len}, need {need}")));
        }
        unsafe { std::ptr::copy_nonoverlapping(p.values.as_ptr(), buf, need) };
        Ok(())
    })
}

/// Pooled descriptive statistics, written as
/// [median, mean, iqr, sd, min, max] into a 6-slot buffer.
///
/// # Safety
/// `stats6` must point to 6 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_panel_stats(panel: *const WvPanel, stats6: *mut f64) -> i32 {
    guard(|| {
        if panel.is_null() || stats6.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let p = unsafe { &(*panel).inner };
        let s = ingest::descriptive_stats(p).map_err(from_windvol)?;
        let vals = [s.median, s.mean, s.iqr, s.sd, s.min, s.max];
        unsafe { std::ptr::copy_nonoverlapping(vals.as_ptr(), stats6, 6) };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Opaque residual-panel handle (seasonal decomposition + AR(1) filter).
pub struct WvResiduals {
    inner: preprocess::ResidualPanel,
}

/// Decompose and filter every station series; `period` is the seasonal
/// cycle length in days (365 for daily data).
///
/// # Safety
/// `panel` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wv_preprocess(
    panel: *const WvPanel,
    period: usize,
    out: *mut *mut WvResiduals,
) -> i32 {
    guard(|| {
        if panel.is_null() || out.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let p = unsafe { &(*panel).inner };
        let rp = preprocess::preprocess_panel(p, period).map_err(from_windvol)?;
        unsafe { *out = Box::into_raw(Box::new(WvResiduals { inner: rp })) };
        Ok(())
    })
}

/// Release a residual-panel handle. Null is ignored.
///
/// # Safety
/// `res` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wv_residuals_free(res: *mut WvResiduals) {
    if !res.is_null() {
        drop(unsafe { Box::from_raw(res) });
    }
}

/// Dimensions of the residual matrix ((T-1) rows by N stations).
///
/// # Safety
/// `res` must be a live handle; outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn wv_residuals_dims(
    res: *const WvResiduals,
    rows_out: *mut usize,
    n_out: *mut usize,
) -> i32 {
    guard(|| {
        if res.is_null() {
            return Err((WV_ERR_ARGUMENT, "null residuals".into()));
        }
        let r = unsafe { &(*res).inner };
        if !rows_out.is_null() {
            unsafe { *rows_out = r.n_rows() };
        }
        if !n_out.is_null() {
            unsafe { *n_out = r.n_stations() };
        }
        Ok(())
    })
}

/// Copy the residual matrix (row-major) into `buf`.
///
/// # Safety
/// `buf` must point to at least rows*N doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_residuals_values(
    res: *const WvResiduals,
    buf: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        if res.is_null() || buf.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let r = unsafe { &(*res).inner };
        let need = r.residuals.len();
        if len < need {
            return Err((WV_ERR_ARGUMENT, format!("buffer holds {len}, need {need}")));
        }
        unsafe { std::ptr::copy_nonoverlapping(r.residuals.as_ptr(), buf, need) };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Weight matrices
// ---------------------------------------------------------------------------

/// Opaque spatial weight matrix handle.
pub struct WvWeights {
    inner: WeightMatrix,
}

/// k-nearest-neighbour weights over the panel's projected coordinates.
///
/// # Safety
/// `panel` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wv_weights_knn(
    panel: *const WvPanel,
    k: usize,
    out: *mut *mut WvWeights,
) -> i32 {
    guard(|| {
        if panel.is_null() || out.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let p = unsafe { &(*panel).inner };
        let w = weights::knn_weights(&p.stations, k).map_err(from_windvol)?;
        unsafe { *out = Box::into_raw(Box::new(WvWeights { inner: w })) };
        Ok(())
    })
}

/// Distance-band weights: all stations within `radius_m` metres.
///
/// # Safety
/// `panel` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wv_weights_distance_band(
    panel: *const WvPanel,
    radius_m: f64,
    out: *mut *mut WvWeights,
) -> i32 {
    guard(|| {
        if panel.is_null() || out.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let p = unsafe { &(*panel).inner };
        let w = weights::distance_band_weights(&p.stations, radius_m);
        unsafe { *out = Box::into_raw(Box::new(WvWeights { inner: w })) };
        Ok(())
    })
}

/// Release a weight-matrix handle. Null is ignored.
///
/// # Safety
/// `w` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wv_weights_free(w: *mut WvWeights) {
    if !w.is_null() {
        drop(unsafe { Box::from_raw(w) });
    }
}

/// Single weight entry W[i][j] (0 when not neighbours).
///
/// # Safety
/// `w` must be a live handle and `value_out` valid.
#[no_mangle]
pub unsafe extern "C" fn wv_weights_get(
    w: *const WvWeights,
    i: usize,
    j: usize,
    value_out: *mut f64,
) -> i32 {
    guard(|| {
        if w.is_null() || value_out.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let m = unsafe { &(*w).inner };
        if i >= m.n || j >= m.n {
            return Err((WV_ERR_ARGUMENT, format!("index ({i},{j}) out of range for n={}", m.n)));
        }
        unsafe { *value_out = m.get(i, j) };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Model fits
// ---------------------------------------------------------------------------

/// GARCH(1,1) maximum-likelihood fit of a single residual series. Outputs
/// are written as [omega, alpha, beta, loglik] into a 4-slot buffer.
///
/// # Safety
/// `e` must point to `len` doubles, `out4` to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_fit_garch(e: *const f64, len: usize, out4: *mut f64) -> i32 {
    guard(|| {
        if e.is_null() || out4.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let series = unsafe { std::slice::from_raw_parts(e, len) };
        let fit = unigarch::fit_garch(series).map_err(from_windvol)?;
        let vals = [fit.omega, fit.alpha, fit.beta, fit.loglik];
        unsafe { std::ptr::copy_nonoverlapping(vals.as_ptr(), out4, 4) };
        Ok(())
    })
}

/// EGARCH(1,1) fit. Outputs [omega, alpha, gamma, beta, loglik] into a
/// 5-slot buffer.
///
/// # Safety
/// `e` must point to `len` doubles, `out5` to 5 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_fit_egarch(e: *const f64, len: usize, out5: *mut f64) -> i32 {
    guard(|| {
        if e.is_null() || out5.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let series = unsafe { std::slice::from_raw_parts(e, len) };
        let fit = unigarch::fit_egarch(series).map_err(from_windvol)?;
        let vals = [fit.omega, fit.alpha, fit.gamma, fit.beta, fit.loglik];
        unsafe { std::ptr::copy_nonoverlapping(vals.as_ptr(), out5, 5) };
        Ok(())
    })
}

/// Joint spatiotemporal ARMA-GARCH fit of a row-major T x N residual panel.
/// Outputs [mu, phi, theta, omega, alpha, beta, loglik] into a 7-slot
/// buffer.
///
/// # Safety
/// `e` must point to `len` doubles (len = T*N for the weight matrix's N),
/// `out7` to 7 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_fit_st(
    e: *const f64,
    len: usize,
    w: *const WvWeights,
    out7: *mut f64,
) -> i32 {
    guard(|| {
        if e.is_null() || w.is_null() || out7.is_null() {
            return Err((WV_ERR_ARGUMENT, "null argument".into()));
        }
        let series = unsafe { std::slice::from_raw_parts(e, len) };
        let m = unsafe { &(*w).inner };
        let fit = stgarch::fit_st(series, m).map_err(from_windvol)?;
        let p = fit.params;
        let vals = [p.mu, p.phi, p.theta, p.omega, p.alpha, p.beta, fit.loglik];
        unsafe { std::ptr::copy_nonoverlapping(vals.as_ptr(), out7, 7) };
        Ok(())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn wv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
