//! C ABI for the crowd density estimator.
//!
//! Conventions:
//! - Handles (`CtnModel`, `CtnDensity`) are opaque; free them with the
//!   matching `*_free` function exactly once.
//! - Every fallible call returns a [`CtnStatus`]; on failure,
//!   [`ctn_last_error_message`] returns a thread-local description valid
//!   until the next failing call on the same thread.
//! - Handles are not synchronized. Using one handle from multiple threads
//!   concurrently requires external locking; distinct handles are
//!   independent.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, c_double};

use ctn_core::config::RunConfig;
use ctn_core::density::DensityMap;
use ctn_core::image::Image;
use ctn_core::model::{CtnModel as CoreModel, InitScheme, ModelConfig, Variant};
use ctn_core::tiling::tile_predict;

/// Opaque model handle.
pub struct CtnModel {
    inner: CoreModel,
}

/// Opaque density-map handle.
pub struct CtnDensity {
    inner: DensityMap,
    count: f64,
}

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CtnStatus {
    CtnOk = 0,
    /// A required pointer argument was null.
    CtnNullArgument = 1,
    /// An argument value violates the documented contract.
    CtnInvalidArgument = 2,
    CtnIoError = 3,
    CtnParseError = 4,
    /// A panic was caught at the boundary; the handle state is unchanged.
    CtnPanic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &ctn_core::Error) -> CtnStatus {
    match err {
        ctn_core::Error::Io { .. } => CtnStatus::CtnIoError,
        ctn_core::Error::Parse { .. } => CtnStatus::CtnParseError,
        ctn_core::Error::Config(_) | ctn_core::Error::Contract(_) => CtnStatus::CtnInvalidArgument,
    }
}

/// Runs `body` with panics converted to `CtnPanic`.
fn guarded(body: impl FnOnce() -> CtnStatus) -> CtnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&msg);
            CtnStatus::CtnPanic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, CtnStatus> {
    if ptr.is_null() {
        set_error(&format!("{name} is null"));
        return Err(CtnStatus::CtnNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        CtnStatus::CtnInvalidArgument
    })
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn ctn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ctn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a freshly initialized model.
///
/// `variant` is one of `full`, `local`, `nonlocal`, `mha`. `width` must be
/// divisible by `heads`; `input` is the nominal training size (multiple of
/// 8). Pass 0 for `width`, `heads`, or `input` to take the defaults
/// (240 / 12 / 384). On success writes a handle to `out`.
///
/// # Safety
/// `variant` must be a valid NUL-terminated string and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ctn_model_create(
    variant: *const c_char,
    width: u32,
    heads: u32,
    context_m: u32,
    input: u32,
    seed: u64,
    out: *mut *mut CtnModel,
) -> CtnStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return CtnStatus::CtnNullArgument;
        }
        let variant = match cstr_arg(variant, "variant") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let variant = match Variant::parse(variant) {
            Ok(v) => v,
            Err(e) => {
                set_error(&e.to_string());
                return CtnStatus::CtnInvalidArgument;
            }
        };
        let defaults = RunConfig::default();
        let cfg = ModelConfig {
            input_h: if input == 0 { defaults.crop } else { input as usize },
            input_w: if input == 0 { defaults.crop } else { input as usize },
            width: if width == 0 { defaults.width } else { width as usize },
            heads: if heads == 0 { defaults.heads } else { heads as usize },
            context_m: context_m as usize,
            variant,
            scale_scores: false,
        };
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        match CoreModel::new(cfg, InitScheme::He, &mut rng) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CtnModel { inner }));
                CtnStatus::CtnOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Loads a model from a checkpoint file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctn_model_load(path: *const c_char, out: *mut *mut CtnModel) -> CtnStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return CtnStatus::CtnNullArgument;
        }
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ctn_core::checkpoint::load(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CtnModel { inner }));
                CtnStatus::CtnOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Writes the model to a checkpoint file.
///
/// # Safety
/// `model` must be a live handle from this library; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn ctn_model_save(model: *const CtnModel, path: *const c_char) -> CtnStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model is null");
            return CtnStatus::CtnNullArgument;
        };
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ctn_core::checkpoint::save(&model.inner, Path::new(path)) {
            Ok(()) => CtnStatus::CtnOk,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Frees a model handle. Null is ignored.
///
/// # Safety
/// `model` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctn_model_free(model: *mut CtnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn do_predict(model: &CtnModel, image: Image, tile: u32, out: *mut *mut CtnDensity) -> CtnStatus {
    let defaults = RunConfig::default();
    let tile = if tile == 0 { defaults.tile } else { tile as usize };
    if tile % 8 != 0 {
        set_error(&format!("tile {tile} must be a multiple of 8"));
        return CtnStatus::CtnInvalidArgument;
    }
    let (count, map) = tile_predict(&model.inner, &image, tile);
    unsafe {
        *out = Box::into_raw(Box::new(CtnDensity { inner: map, count }));
    }
    CtnStatus::CtnOk
}

/// Predicts a density map from an interleaved 8-bit RGB buffer of
/// `height * width * 3` bytes. `tile` is the tiling size for large inputs
/// (0 for the default); tiles are processed independently and stitched.
///
/// # Safety
/// `rgb` must point to at least `height * width * 3` readable bytes;
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctn_predict_rgb8(
    model: *const CtnModel,
    rgb: *const u8,
    height: u32,
    width: u32,
    tile: u32,
    out: *mut *mut CtnDensity,
) -> CtnStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model is null");
            return CtnStatus::CtnNullArgument;
        };
        if rgb.is_null() || out.is_null() {
            set_error("rgb/out is null");
            return CtnStatus::CtnNullArgument;
        }
        if height == 0 || width == 0 {
            set_error("image dimensions must be positive");
            return CtnStatus::CtnInvalidArgument;
        }
        let n = height as usize * width as usize * 3;
        let buf = std::slice::from_raw_parts(rgb, n).to_vec();
        do_predict(model, Image::new(height as usize, width as usize, buf), tile, out)
    })
}

/// Predicts a density map for an image file (binary PPM P6 or PGM P5).
///
/// # Safety
/// `model` must be a live handle; `path` a valid string; `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn ctn_predict_image_file(
    model: *const CtnModel,
    path: *const c_char,
    tile: u32,
    out: *mut *mut CtnDensity,
) -> CtnStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            set_error("model is null");
            return CtnStatus::CtnNullArgument;
        };
        if out.is_null() {
            set_error("out is null");
            return CtnStatus::CtnNullArgument;
        }
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ctn_core::image::read_pnm(Path::new(path)) {
            Ok(image) => do_predict(model, image, tile, out),
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Estimated person count (sum of per-tile counts). Returns NaN for null.
///
/// # Safety
/// `density` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ctn_density_count(density: *const CtnDensity) -> c_double {
    density.as_ref().map_or(f64::NAN, |d| d.count)
}

/// Map height in pixels (0 for null).
///
/// # Safety
/// `density` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ctn_density_height(density: *const CtnDensity) -> u32 {
    density.as_ref().map_or(0, |d| d.inner.h as u32)
}

/// Map width in pixels (0 for null).
///
/// # Safety
/// `density` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ctn_density_width(density: *const CtnDensity) -> u32 {
    density.as_ref().map_or(0, |d| d.inner.w as u32)
}

/// Copies the row-major density values into `dst` (length `len` doubles,
/// which must be at least `height * width`).
///
/// # Safety
/// `dst` must point to `len` writable doubles; `density` must be live.
#[no_mangle]
pub unsafe extern "C" fn ctn_density_values(
    density: *const CtnDensity,
    dst: *mut c_double,
    len: usize,
) -> CtnStatus {
    guarded(|| {
        let Some(d) = density.as_ref() else {
            set_error("density is null");
            return CtnStatus::CtnNullArgument;
        };
        if dst.is_null() {
            set_error("dst is null");
            return CtnStatus::CtnNullArgument;
        }
        let need = d.inner.h * d.inner.w;
        if len < need {
            set_error(&format!("dst holds {len} doubles, need {need}"));
            return CtnStatus::CtnInvalidArgument;
        }
        std::slice::from_raw_parts_mut(dst, need).copy_from_slice(&d.inner.values);
        CtnStatus::CtnOk
    })
}

/// Frees a density handle. Null is ignored.
///
/// # Safety
/// `density` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctn_density_free(density: *mut CtnDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}
