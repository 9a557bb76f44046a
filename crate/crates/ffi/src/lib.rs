//! C ABI for the mrcast forecaster.
//!
//! Every function returns an [`MrcastStatus`]; on failure a message is
//! available from [`mrcast_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.
//! Buffers are caller-owned; lengths are in elements, not bytes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mrcast::dedup::SimHasher;
use mrcast::eval::compute_metrics;
use mrcast::io::load_checkpoint;
use mrcast::model::{ModelConfig, ModelParams};
use mrcast::series::{MultiResWindow, WindowMeta};
use mrcast::{decode, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrcastStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    BufferTooSmall = 3,
    DataError = 4,
    NumericError = 5,
    IoError = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> MrcastStatus {
    match err {
        Error::InvalidArgument(_) => MrcastStatus::InvalidArgument,
        Error::Io(_) => MrcastStatus::IoError,
        _ if err.exit_code() == 4 => MrcastStatus::NumericError,
        _ => MrcastStatus::DataError,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MrcastStatus, String)>) -> MrcastStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrcastStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MrcastStatus::Panic
        }
    }
}

fn lib<T>(r: mrcast::Result<T>) -> Result<T, (MrcastStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (MrcastStatus, String) {
    (MrcastStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], (MrcastStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], (MrcastStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, (MrcastStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| (MrcastStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn mrcast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mrcast_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A forecaster: configuration plus parameters.
pub struct MrcastModel {
    config: ModelConfig,
    params: ModelParams,
}

/// Loads a checkpoint directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrcast_model_load(path: *const c_char, out: *mut *mut MrcastModel) -> MrcastStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { string(path, "path") }?;
        let ck = lib(load_checkpoint(Path::new(path)))?;
        unsafe { *out = Box::into_raw(Box::new(MrcastModel { config: ck.config, params: ck.params })) };
        Ok(())
    })
}

/// Creates a freshly initialized model from a JSON model configuration.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrcast_model_init(config_json: *const c_char, seed: u64, out: *mut *mut MrcastModel) -> MrcastStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = unsafe { string(config_json, "config_json") }?;
        let config: ModelConfig = serde_json::from_str(json).map_err(|e| (MrcastStatus::InvalidArgument, format!("model config: {e}")))?;
        lib(config.validate())?;
        let params = ModelParams::init(&config, seed);
        unsafe { *out = Box::into_raw(Box::new(MrcastModel { config, params })) };
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `mrcast_model_load` or `mrcast_model_init` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mrcast_model_free(model: *mut MrcastModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Geometry of a model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MrcastModelInfo {
    pub context_len: usize,
    pub input_patch_len: usize,
    pub output_patch_len: usize,
    pub num_quantiles: usize,
    pub num_parameters: usize,
}

/// # Safety
/// `model` must be a live handle and `info` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrcast_model_info(model: *const MrcastModel, info: *mut MrcastModelInfo) -> MrcastStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let info = unsafe { info.as_mut() }.ok_or_else(|| null("info"))?;
        *info = MrcastModelInfo {
            context_len: m.config.context_len,
            input_patch_len: m.config.input_patch_len,
            output_patch_len: m.config.output_patch_len,
            num_quantiles: m.config.quantiles.len(),
            num_parameters: m.params.num_parameters(),
        };
        Ok(())
    })
}

/// Writes the quantile levels of `model` into `levels` (`capacity` entries).
///
/// # Safety
/// `model` must be a live handle; `levels` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn mrcast_model_quantile_levels(model: *const MrcastModel, levels: *mut f64, capacity: usize) -> MrcastStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let q = &m.config.quantiles;
        if capacity < q.len() {
            return Err((MrcastStatus::BufferTooSmall, format!("need {} levels, buffer holds {capacity}", q.len())));
        }
        unsafe { slice_mut(levels, q.len(), "levels") }?.copy_from_slice(q);
        Ok(())
    })
}

/// Input window for [`mrcast_forecast`]. Each context holds `context_len`
/// values; masks use 1 for padded entries and padding must be a prefix.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MrcastWindow {
    pub coarse: *const f64,
    pub coarse_mask: *const u8,
    pub fine: *const f64,
    pub fine_mask: *const u8,
    pub context_len: usize,
    /// Fine points per coarse point.
    pub ratio: usize,
}

/// Decodes `steps` output patches. `mean` receives `steps * output_patch_len`
/// values; `quantiles` receives `num_quantiles` rows of that length, row-major.
///
/// # Safety
/// All pointers must be valid for the lengths described above.
#[no_mangle]
pub unsafe extern "C" fn mrcast_forecast(
    model: *const MrcastModel,
    window: *const MrcastWindow,
    steps: usize,
    mean: *mut f64,
    quantiles: *mut f64,
    capacity: usize,
) -> MrcastStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let w = unsafe { window.as_ref() }.ok_or_else(|| null("window"))?;
        let c = w.context_len;
        let mrw = MultiResWindow {
            meta: WindowMeta { id: "ffi".into(), ..Default::default() },
            coarse: unsafe { slice(w.coarse, c, "coarse") }?.to_vec(),
            coarse_mask: unsafe { slice(w.coarse_mask, c, "coarse_mask") }?.to_vec(),
            fine: unsafe { slice(w.fine, c, "fine") }?.to_vec(),
            fine_mask: unsafe { slice(w.fine_mask, c, "fine_mask") }?.to_vec(),
            horizon: Vec::new(),
            ratio: w.ratio,
        };
        let n = steps.saturating_mul(m.config.output_patch_len);
        if capacity < n {
            return Err((MrcastStatus::BufferTooSmall, format!("forecast needs {n} points per path, buffer holds {capacity}")));
        }
        let bundle = lib(decode::decode(&mrw, &m.params, &m.config, steps))?;
        unsafe { slice_mut(mean, n, "mean") }?.copy_from_slice(&bundle.mean);
        let out = unsafe { slice_mut(quantiles, n * bundle.quantiles.len(), "quantiles") }?;
        for (row, q) in out.chunks_mut(n).zip(&bundle.quantiles) {
            row.copy_from_slice(q);
        }
        Ok(())
    })
}

/// Raw metrics of one horizon. Undefined scaled metrics are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MrcastMetrics {
    pub mse: f64,
    pub mae: f64,
    pub mase: f64,
    pub smape: f64,
    pub msis: f64,
    pub crps: f64,
    pub ncrps: f64,
}

/// Scores a forecast. `quantiles` holds `num_levels` rows of `horizon` values.
///
/// # Safety
/// All pointers must be valid for the stated lengths; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mrcast_compute_metrics(
    mean: *const f64,
    quantiles: *const f64,
    levels: *const f64,
    num_levels: usize,
    actual: *const f64,
    horizon: usize,
    context: *const f64,
    context_len: usize,
    season: usize,
    out: *mut MrcastMetrics,
) -> MrcastStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let q = unsafe { slice(quantiles, num_levels * horizon, "quantiles") }?;
        let bundle = decode::ForecastBundle {
            mean: unsafe { slice(mean, horizon, "mean") }?.to_vec(),
            levels: unsafe { slice(levels, num_levels, "levels") }?.to_vec(),
            quantiles: q.chunks(horizon.max(1)).map(|c| c.to_vec()).collect(),
        };
        let actual = unsafe { slice(actual, horizon, "actual") }?;
        let context = unsafe { slice(context, context_len, "context") }?;
        let m = lib(compute_metrics(&bundle, actual, context, season))?;
        *out = MrcastMetrics {
            mse: m.mse,
            mae: m.mae,
            mase: m.mase.unwrap_or(f64::NAN),
            smape: m.smape,
            msis: m.msis.unwrap_or(f64::NAN),
            crps: m.crps,
            ncrps: m.ncrps.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Random-hyperplane hasher over fixed-length feature vectors.
pub struct MrcastSimHasher {
    inner: SimHasher,
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrcast_simhash_new(bits: usize, dim: usize, seed: u64, out: *mut *mut MrcastSimHasher) -> MrcastStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if bits == 0 || dim == 0 {
            return Err((MrcastStatus::InvalidArgument, "bits and dim must be positive".into()));
        }
        unsafe { *out = Box::into_raw(Box::new(MrcastSimHasher { inner: SimHasher::new(bits, dim, seed) })) };
        Ok(())
    })
}

/// # Safety
/// `hasher` must come from `mrcast_simhash_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mrcast_simhash_free(hasher: *mut MrcastSimHasher) {
    if !hasher.is_null() {
        drop(unsafe { Box::from_raw(hasher) });
    }
}

/// Hashes `feature` (`dim` values) into `ceil(bits / 64)` little-endian words;
/// bit `b` lives in word `b / 64` at position `b % 64`.
///
/// # Safety
/// `feature` must hold `dim` doubles and `words` `capacity` u64 slots.
#[no_mangle]
pub unsafe extern "C" fn mrcast_simhash_code(
    hasher: *const MrcastSimHasher,
    feature: *const f64,
    dim: usize,
    words: *mut u64,
    capacity: usize,
) -> MrcastStatus {
    guard(|| {
        let h = unsafe { hasher.as_ref() }.ok_or_else(|| null("hasher"))?;
        let feature = unsafe { slice(feature, dim, "feature") }?;
        let code = lib(h.inner.code(feature))?;
        if capacity < code.words.len() {
            return Err((MrcastStatus::BufferTooSmall, format!("code needs {} words, buffer holds {capacity}", code.words.len())));
        }
        unsafe { slice_mut(words, code.words.len(), "words") }?.copy_from_slice(&code.words);
        Ok(())
    })
}
