//! C ABI over the change-detection engine.
//!
//! Objects cross the boundary as opaque pointers created by `*_new`/`*_load`
//! and released by the matching `*_free`. Every fallible call returns a
//! [`DmcdStatus`]; on failure [`dmcd_last_error`] describes the cause until
//! the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dmcd::engine::{run, EngineConfig, RunResult};
use dmcd::io::{load_config_file, load_raster, set_config_value, write_outputs, RasterSpec, RunReport};
use dmcd::metrics::{mann_whitney_auc, roc_auc, DEFAULT_THRESHOLDS};
use dmcd::preprocess::MultiBandImage;
use dmcd::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DmcdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Contract = 3,
    Registration = 4,
    InsufficientSamples = 5,
    Degenerate = 6,
    Archive = 7,
    Format = 8,
    Config = 9,
    Io = 10,
    NonFiniteLoss = 11,
    UndefinedAuc = 12,
    Panic = 13,
}

/// Engine configuration; starts at the defaults.
pub struct DmcdConfig {
    inner: EngineConfig,
}

/// Multi-band image with values in `[0, 1]`.
pub struct DmcdImage {
    inner: MultiBandImage,
    checksum: Option<String>,
}

/// Output of [`dmcd_run`].
pub struct DmcdResult {
    inner: RunResult,
    mask: Vec<u8>,
    config: EngineConfig,
    checksums: Vec<(String, String)>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DmcdStatus {
    match e {
        Error::Contract(_) => DmcdStatus::Contract,
        Error::Registration { .. } => DmcdStatus::Registration,
        Error::InsufficientSamples { .. } => DmcdStatus::InsufficientSamples,
        Error::Degenerate(_) => DmcdStatus::Degenerate,
        Error::Archive(_) => DmcdStatus::Archive,
        Error::Format(_) => DmcdStatus::Format,
        Error::Config(_) => DmcdStatus::Config,
        Error::Io { .. } => DmcdStatus::Io,
        Error::NonFiniteLoss { .. } => DmcdStatus::NonFiniteLoss,
        Error::UndefinedAuc => DmcdStatus::UndefinedAuc,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

/// Runs `body`, converting errors and panics into a status and last-error text.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DmcdStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DmcdStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(&format!("{name} is null"));
            DmcdStatus::NullArgument
        }
        Ok(Err(Failure::Invalid(message))) => {
            set_last_error(&message);
            DmcdStatus::InvalidArgument
        }
        Ok(Err(Failure::Engine(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            DmcdStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(ptr: *const T, name: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(name))
}

unsafe fn deref_mut<'a, T>(ptr: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(name))
}

unsafe fn string<'a>(ptr: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Text of the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dmcd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dmcd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes a new configuration holding the defaults to `*out`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dmcd_config_new(out: *mut *mut DmcdConfig) -> DmcdStatus {
    guard(|| {
        put(
            out,
            DmcdConfig {
                inner: EngineConfig::default(),
            },
        )
    })
}

/// # Safety
/// `config` must be null or a pointer from [`dmcd_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dmcd_config_free(config: *mut DmcdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets one `key=value` configuration entry, using the keys of the
/// configuration file format.
///
/// # Safety
/// `config` must be live; `key` and `value` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn dmcd_config_set(
    config: *mut DmcdConfig,
    key: *const c_char,
    value: *const c_char,
) -> DmcdStatus {
    guard(|| {
        let config = deref_mut(config, "config")?;
        let (key, value) = (string(key, "key")?, string(value, "value")?);
        let mut updated = config.inner.clone();
        set_config_value(&mut updated, key, value)?;
        config.inner = updated;
        Ok(())
    })
}

/// Applies a file of `key=value` lines.
///
/// # Safety
/// `config` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dmcd_config_load(config: *mut DmcdConfig, path: *const c_char) -> DmcdStatus {
    guard(|| {
        let config = deref_mut(config, "config")?;
        let path = PathBuf::from(string(path, "path")?);
        let mut updated = config.inner.clone();
        load_config_file(&path, &mut updated)?;
        config.inner = updated;
        Ok(())
    })
}

/// Copies `height * width * bands` pixel-interleaved values in `[0, 1]`.
///
/// # Safety
/// `values` must point to that many floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dmcd_image_new(
    height: usize,
    width: usize,
    bands: usize,
    values: *const f32,
    out: *mut *mut DmcdImage,
) -> DmcdStatus {
    guard(|| {
        let n = height
            .checked_mul(width)
            .and_then(|p| p.checked_mul(bands))
            .ok_or_else(|| Failure::Invalid("image extents overflow".into()))?;
        let values = slice(values, n, "values")?;
        let inner = MultiBandImage::new(height, width, bands, values.to_vec())?;
        put(out, DmcdImage { inner, checksum: None })
    })
}

/// Loads a PNG or raw raster with its default normalization.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dmcd_image_load(path: *const c_char, out: *mut *mut DmcdImage) -> DmcdStatus {
    guard(|| {
        let path = string(path, "path")?;
        let loaded = load_raster(&RasterSpec::new(path))?;
        put(
            out,
            DmcdImage {
                inner: loaded.image,
                checksum: Some(loaded.checksum),
            },
        )
    })
}

/// # Safety
/// `image` must be null or a live image pointer.
#[no_mangle]
pub unsafe extern "C" fn dmcd_image_free(image: *mut DmcdImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// # Safety
/// `image` must be live; the out pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn dmcd_image_dims(
    image: *const DmcdImage,
    height: *mut usize,
    width: *mut usize,
    bands: *mut usize,
) -> DmcdStatus {
    guard(|| {
        let img = &deref(image, "image")?.inner;
        for (ptr, v) in [(height, img.height()), (width, img.width()), (bands, img.bands())] {
            if let Some(slot) = ptr.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// Runs the full optimization for one pair.
///
/// # Safety
/// `config`, `pre` and `post` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dmcd_run(
    config: *const DmcdConfig,
    pre: *const DmcdImage,
    post: *const DmcdImage,
    out: *mut *mut DmcdResult,
) -> DmcdStatus {
    guard(|| {
        let config = &deref(config, "config")?.inner;
        let (pre, post) = (deref(pre, "pre")?, deref(post, "post")?);
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let inner = run(&pre.inner, &post.inner, config, None)?;
        let mask = inner.mask.iter().map(|&m| u8::from(m)).collect();
        let checksums = [("pre", &pre.checksum), ("post", &post.checksum)]
            .into_iter()
            .filter_map(|(k, c)| c.clone().map(|c| (k.to_string(), c)))
            .collect();
        put(
            out,
            DmcdResult {
                inner,
                mask,
                config: config.clone(),
                checksums,
            },
        )
    })
}

/// # Safety
/// `result` must be null or a live result pointer.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_free(result: *mut DmcdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be live; the out pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_dims(result: *const DmcdResult, height: *mut usize, width: *mut usize) -> DmcdStatus {
    guard(|| {
        let r = &deref(result, "result")?.inner;
        if let Some(h) = height.as_mut() {
            *h = r.height;
        }
        if let Some(w) = width.as_mut() {
            *w = r.width;
        }
        Ok(())
    })
}

/// Row-major change probabilities, `height * width` floats owned by `result`.
///
/// # Safety
/// `result` must be live; null yields null.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_probability(result: *const DmcdResult) -> *const f32 {
    result.as_ref().map_or(std::ptr::null(), |r| r.inner.probability.as_ptr())
}

/// Row-major thresholded map, 1 for change and 0 otherwise, owned by `result`.
///
/// # Safety
/// `result` must be live; null yields null.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_mask(result: *const DmcdResult) -> *const u8 {
    result.as_ref().map_or(std::ptr::null(), |r| r.mask.as_ptr())
}

/// Number of completed iterations.
///
/// # Safety
/// `result` must be live; null yields 0.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_iterations(result: *const DmcdResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.loss_history.len())
}

/// Loss terms of iteration `t` (0-based) as `img, feat, ctx, sparse, total`.
///
/// # Safety
/// `result` must be live; `out` must point to 5 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_loss(result: *const DmcdResult, t: usize, out: *mut f64) -> DmcdStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let b = r
            .inner
            .loss_history
            .get(t)
            .ok_or_else(|| Failure::Invalid(format!("iteration {t} of {}", r.inner.loss_history.len())))?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        std::slice::from_raw_parts_mut(out, 5).copy_from_slice(&[b.img, b.feat, b.ctx, b.sparse, b.total]);
        Ok(())
    })
}

unsafe fn reference_mask(result: &DmcdResult, reference: *const u8) -> Result<Vec<bool>, Failure> {
    let n = result.inner.probability.len();
    Ok(slice(reference, n, "reference")?.iter().map(|&v| v != 0).collect())
}

/// Area under the ROC curve against a `height * width` reference mask
/// (nonzero = change), from a 256-threshold sweep, or the exact pairwise
/// count when `exact` is nonzero.
///
/// # Safety
/// `result` must be live; `reference` must point to `height * width` bytes.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_auc(
    result: *const DmcdResult,
    reference: *const u8,
    exact: i32,
    auc: *mut f64,
) -> DmcdStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let mask = reference_mask(r, reference)?;
        let value = if exact != 0 {
            mann_whitney_auc(&r.inner.probability, &mask)?
        } else {
            roc_auc(&r.inner.probability, &mask, DEFAULT_THRESHOLDS)?.auc
        };
        *deref_mut(auc, "auc")? = value;
        Ok(())
    })
}

/// Writes the output files into `dir`; `reference` may be null.
///
/// # Safety
/// `result` must be live; `dir` must be a NUL-terminated string; a non-null
/// `reference` must point to `height * width` bytes.
#[no_mangle]
pub unsafe extern "C" fn dmcd_result_write(result: *const DmcdResult, dir: *const c_char, reference: *const u8) -> DmcdStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let dir = PathBuf::from(string(dir, "dir")?);
        let mask = if reference.is_null() {
            None
        } else {
            Some(reference_mask(r, reference)?)
        };
        let report = RunReport::from_run(&r.config, &r.inner, mask.as_deref(), r.checksums.clone())?;
        write_outputs(&dir, &r.inner, mask.as_deref(), &report)?;
        Ok(())
    })
}
