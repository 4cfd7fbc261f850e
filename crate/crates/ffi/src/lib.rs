//! C ABI for `iad-core`.
//!
//! Images and models are opaque handles created by `iad_*_new`/`iad_*_read`
//! style constructors and released with `iad_image_free`/`iad_model_free`.
//! Every fallible call returns an [`IadStatus`]; on failure
//! `iad_last_error()` describes the problem until the next call on the same
//! thread. Results are written through out-pointers. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iad_core::diffusion::{evolve, Model, ModelKind, ModelSpec, TauPolicy};
use iad_core::image::{add_noise, mse, psnr, ImageGrid, NoiseSpec};
use iad_core::kv::KvFile;
use iad_core::params::{read_params, spec_from_kv, DEFAULT_STEPS, PARAM_KEYS};
use iad_core::scales::{sample_scales, ReducedParams};
use iad_core::{Error, ErrorClass};

/// Result codes. The first four match the exit codes of the `iad` tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IadStatus {
    Ok = 0,
    /// Invalid argument or parameter.
    Usage = 1,
    /// Unreadable, malformed or mismatched data.
    Data = 2,
    /// Time step over the stability bound or non-finite values.
    Numerical = 3,
    NullPointer = 4,
    /// A bug inside the library; the handle arguments are left untouched.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IadModelKind {
    Pm = 0,
    Eed = 1,
    Iid = 2,
    Iad = 3,
}

/// A grey-value image.
pub struct IadImage {
    inner: ImageGrid,
}

/// A model with its step count and time-step policy.
pub struct IadModel {
    inner: ModelSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> IadStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IadStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            match e.class() {
                ErrorClass::Usage => IadStatus::Usage,
                ErrorClass::Data => IadStatus::Data,
                ErrorClass::Numerical => IadStatus::Numerical,
            }
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            IadStatus::NullPointer
        }
        Ok(Err(Failure::Arg(m))) => {
            set_error(m);
            IadStatus::Usage
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            IadStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn iad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn iad_status_name(status: IadStatus) -> *const c_char {
    let s: &'static CStr = match status {
        IadStatus::Ok => c"ok",
        IadStatus::Usage => c"usage",
        IadStatus::Data => c"data",
        IadStatus::Numerical => c"numerical",
        IadStatus::NullPointer => c"null pointer",
        IadStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Creates an image from `width * height` row-major values.
///
/// # Safety
/// `data` must point to `width * height` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn iad_image_new(
    width: usize,
    height: usize,
    data: *const f64,
    out: *mut *mut IadImage,
) -> IadStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Failure::Arg("image size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, n).to_vec();
        *out = boxed(IadImage {
            inner: ImageGrid::new(width, height, values)?,
        });
        Ok(())
    })
}

/// Reads a PGM (P2/P5) or PFM file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_image_read(path: *const c_char, out: *mut *mut IadImage) -> IadStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = c_str(path, "path")?;
        *out = boxed(IadImage {
            inner: iad_core::io::read_image(path)?,
        });
        Ok(())
    })
}

/// Writes an image; the format follows the extension (`.pgm` or `.pfm`).
///
/// # Safety
/// `image` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn iad_image_write(image: *const IadImage, path: *const c_char) -> IadStatus {
    guard(|| {
        let image = deref(image, "image")?;
        iad_core::io::write_image(&image.inner, c_str(path, "path")?)?;
        Ok(())
    })
}

/// Width of an image, 0 for NULL.
///
/// # Safety
/// `image` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iad_image_width(image: *const IadImage) -> usize {
    image.as_ref().map_or(0, |i| i.inner.width())
}

/// Height of an image, 0 for NULL.
///
/// # Safety
/// `image` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iad_image_height(image: *const IadImage) -> usize {
    image.as_ref().map_or(0, |i| i.inner.height())
}

/// Copies the pixel values into `dst`, which holds `len` doubles.
///
/// # Safety
/// `image` must be a live handle and `dst` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn iad_image_copy_data(image: *const IadImage, dst: *mut f64, len: usize) -> IadStatus {
    guard(|| {
        let image = deref(image, "image")?;
        if dst.is_null() {
            return Err(Failure::Null("dst"));
        }
        let data = image.inner.data();
        if len < data.len() {
            return Err(Failure::Arg(format!("buffer holds {len} values, image has {}", data.len())));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), dst, data.len());
        Ok(())
    })
}

/// Releases an image. NULL is ignored.
///
/// # Safety
/// `image` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iad_image_free(image: *mut IadImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Adds seeded Gaussian noise of standard deviation `stddev`.
///
/// # Safety
/// `image` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_add_noise(
    image: *const IadImage,
    stddev: f64,
    seed: u64,
    out: *mut *mut IadImage,
) -> IadStatus {
    guard(|| {
        let image = deref(image, "image")?;
        let out = out_ptr(out, "out")?;
        *out = boxed(IadImage {
            inner: add_noise(&image.inner, NoiseSpec::new(stddev, seed)?)?,
        });
        Ok(())
    })
}

/// Mean squared error of two images of equal size.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_mse(a: *const IadImage, b: *const IadImage, out: *mut f64) -> IadStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        *out_ptr(out, "out")? = mse(&a.inner, &b.inner)?;
        Ok(())
    })
}

/// PSNR in dB for peak 255; identical images give `IAD_STATUS_DATA`.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_psnr(a: *const IadImage, b: *const IadImage, out: *mut f64) -> IadStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        *out_ptr(out, "out")? = psnr(&a.inner, &b.inner)?;
        Ok(())
    })
}

fn new_model(model: Model, out: &mut *mut IadModel) -> FfiResult<()> {
    *out = boxed(IadModel {
        inner: ModelSpec::new(model, DEFAULT_STEPS, TauPolicy::default())?,
    });
    Ok(())
}

/// Perona-Malik model with contrast `lambda`, 10 steps and automatic time
/// steps.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_model_pm(lambda: f64, out: *mut *mut IadModel) -> IadStatus {
    guard(|| new_model(Model::Pm { lambda }, out_ptr(out, "out")?))
}

/// Edge-enhancing diffusion with contrast `lambda` and presmoothing `sigma`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_model_eed(lambda: f64, sigma: f64, out: *mut *mut IadModel) -> IadStatus {
    guard(|| new_model(Model::Eed { lambda, sigma }, out_ptr(out, "out")?))
}

/// IID or IAD from the reduced parameters at noise level `stddev`, with
/// `n` scales sampled geometrically in `[sigma_min, sigma_max]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_model_reduced(
    kind: IadModelKind,
    alpha: f64,
    beta: f64,
    lambda0: f64,
    stddev: f64,
    n: usize,
    sigma_min: f64,
    sigma_max: f64,
    out: *mut *mut IadModel,
) -> IadStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let kind = match kind {
            IadModelKind::Iid => ModelKind::Iid,
            IadModelKind::Iad => ModelKind::Iad,
            _ => return Err(Failure::Arg("reduced parameters need IID or IAD".into())),
        };
        let p = ReducedParams::new(alpha, beta, lambda0)?;
        let scales = sample_scales(n, sigma_min, sigma_max)?;
        new_model(Model::multiscale_reduced(kind, &p, stddev, &scales)?, out)
    })
}

/// Model from parameter-file text (`key = value` lines). `stddev` selects
/// per-level values and evaluates reduced parameters; pass NaN when the
/// text needs no level.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_model_parse(text: *const c_char, stddev: f64, out: *mut *mut IadModel) -> IadStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let kv = KvFile::parse(c_str(text, "text")?, "<text>")?;
        kv.check_keys(PARAM_KEYS)?;
        let level = (!stddev.is_nan()).then_some(stddev);
        *out = boxed(IadModel {
            inner: spec_from_kv(&kv, level)?,
        });
        Ok(())
    })
}

/// Model from a parameter file; see `iad_model_parse`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_model_read(path: *const c_char, stddev: f64, out: *mut *mut IadModel) -> IadStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let kv = read_params(c_str(path, "path")?)?;
        let level = (!stddev.is_nan()).then_some(stddev);
        *out = boxed(IadModel {
            inner: spec_from_kv(&kv, level)?,
        });
        Ok(())
    })
}

/// Sets the number of explicit steps (at least 1).
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn iad_model_set_steps(model: *mut IadModel, steps: usize) -> IadStatus {
    guard(|| {
        let model = out_ptr(model, "model")?;
        model.inner = ModelSpec::new(model.inner.model.clone(), steps, model.inner.tau)?;
        Ok(())
    })
}

/// Uses a fixed time step; evolution fails with `IAD_STATUS_NUMERICAL` if it
/// exceeds the stability bound.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn iad_model_set_tau(model: *mut IadModel, tau: f64) -> IadStatus {
    guard(|| {
        let model = out_ptr(model, "model")?;
        let policy = TauPolicy::Fixed(tau);
        policy.validate()?;
        model.inner.tau = policy;
        Ok(())
    })
}

/// Chooses every time step as `safety` times the largest stable step.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn iad_model_set_tau_auto(model: *mut IadModel, safety: f64) -> IadStatus {
    guard(|| {
        let model = out_ptr(model, "model")?;
        let policy = TauPolicy::Auto { safety };
        policy.validate()?;
        model.inner.tau = policy;
        Ok(())
    })
}

/// Kind of a model. NULL gives `IAD_MODEL_KIND_PM`.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iad_model_kind(model: *const IadModel) -> IadModelKind {
    match model.as_ref().map(|m| m.inner.model.kind()) {
        Some(ModelKind::Eed) => IadModelKind::Eed,
        Some(ModelKind::Iid) => IadModelKind::Iid,
        Some(ModelKind::Iad) => IadModelKind::Iad,
        _ => IadModelKind::Pm,
    }
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iad_model_free(model: *mut IadModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the model on `image` and returns the result as a new image.
///
/// # Safety
/// `model` and `image` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iad_denoise(
    model: *const IadModel,
    image: *const IadImage,
    out: *mut *mut IadImage,
) -> IadStatus {
    guard(|| {
        let (model, image) = (deref(model, "model")?, deref(image, "image")?);
        let out = out_ptr(out, "out")?;
        *out = boxed(IadImage {
            inner: evolve(&image.inner, &model.inner)?.image,
        });
        Ok(())
    })
}

/// Library version, NUL-terminated.
#[no_mangle]
pub extern "C" fn iad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
