//! C ABI for loading saved pipeline models and running them on 8-bit
//! buffers.
//!
//! Every function returns a [`CgpsegStatus`]. On failure the message is
//! available from [`cgpseg_last_error`] on the same thread until the next
//! call into the library.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cgpseg::image::{Image2D, RgbImage};
use cgpseg::imgops::{FunctionLibrary, RawInput};
use cgpseg::model::PipelineModel;
use cgpseg::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgpsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Incompatible = 5,
    InvalidInput = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// Opaque handle to a loaded model.
pub struct CgpsegModel {
    model: PipelineModel,
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

fn status_of(e: &Error) -> CgpsegStatus {
    match e {
        Error::Io { .. } => CgpsegStatus::Io,
        Error::Json(_) | Error::Image { .. } => CgpsegStatus::Parse,
        Error::LibraryMismatch { .. } | Error::SchemaVersion { .. } | Error::Validity { .. } => {
            CgpsegStatus::Incompatible
        }
        Error::Input(_) | Error::Shape(_) | Error::DatasetEntry { .. } => CgpsegStatus::InvalidInput,
        Error::Config(_) => CgpsegStatus::InvalidArgument,
        _ => CgpsegStatus::Internal,
    }
}

struct Fail(CgpsegStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CgpsegStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgpsegStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CgpsegStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CgpsegStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CgpsegStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn give_model(out: *mut *mut CgpsegModel, model: PipelineModel) {
    *out = Box::into_raw(Box::new(CgpsegModel { model }));
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn cgpseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cgpseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgpseg_model_load(path: *const c_char, out: *mut *mut CgpsegModel) -> CgpsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = c_str(path, "path")?;
        give_model(out, PipelineModel::load(Path::new(path))?);
        Ok(())
    })
}

/// Loads a model from a JSON document held in memory.
///
/// # Safety
/// `json` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgpseg_model_from_json(
    json: *const u8,
    len: usize,
    out: *mut *mut CgpsegModel,
) -> CgpsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = std::str::from_utf8(std::slice::from_raw_parts(json, len))
            .map_err(|_| Fail(CgpsegStatus::Parse, "model JSON is not UTF-8".into()))?;
        give_model(out, PipelineModel::from_json(text)?);
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgpseg_model_free(model: *mut CgpsegModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// Number of active nodes in the model's graph.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cgpseg_model_active_nodes(model: *const CgpsegModel, out: *mut usize) -> CgpsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = m.model.graph().active_count();
        Ok(())
    })
}

fn raw_input(data: &[u8], width: usize, height: usize, channels: usize) -> Result<RawInput, Fail> {
    let n = width * height;
    Ok(match channels {
        1 => RawInput::Gray(Image2D::from_vec(width, height, data.to_vec())?),
        3 => RawInput::Rgb(RgbImage {
            width,
            height,
            data: data.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect(),
        }),
        c => RawInput::Channels(
            (0..c)
                .map(|k| Image2D::from_vec(width, height, (0..n).map(|i| data[i * c + k]).collect()))
                .collect::<cgpseg::Result<_>>()?,
        ),
    })
}

/// Runs the model on an interleaved 8-bit image of `channels` channels and
/// writes one instance label per pixel into `labels` (0 is background).
/// Mask outputs are split into connected components. `instances` receives
/// the number of instances when non-NULL.
///
/// # Safety
/// `data` must hold `width * height * channels` bytes and `labels` must
/// hold `labels_len` writable `uint32_t` values.
#[no_mangle]
pub unsafe extern "C" fn cgpseg_model_run(
    model: *const CgpsegModel,
    data: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    labels: *mut u32,
    labels_len: usize,
    instances: *mut usize,
) -> CgpsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if data.is_null() {
            return Err(null("data"));
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        if width == 0 || height == 0 || channels == 0 {
            return Err(Fail(CgpsegStatus::InvalidArgument, "width, height and channels must be positive".into()));
        }
        let n = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels).map(|b| (n, b)));
        let (pixels, bytes) = n.ok_or_else(|| Fail(CgpsegStatus::InvalidArgument, "image size overflows".into()))?;
        if labels_len < pixels {
            return Err(Fail(
                CgpsegStatus::BufferTooSmall,
                format!("labels buffer holds {labels_len} values, need {pixels}"),
            ));
        }
        let input = raw_input(std::slice::from_raw_parts(data, bytes), width, height, channels)?;
        let out = m.model.run_raw(&input)?.to_labels();
        std::slice::from_raw_parts_mut(labels, pixels).copy_from_slice(out.as_slice());
        if !instances.is_null() {
            *instances = out.count();
        }
        Ok(())
    })
}

/// JSON manifest of a function library (`NULL` selects the default). The
/// string must be released with [`cgpseg_string_free`].
///
/// # Safety
/// `id` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgpseg_library_manifest(id: *const c_char, out: *mut *mut c_char) -> CgpsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let lib = if id.is_null() {
            FunctionLibrary::default_library()
        } else {
            FunctionLibrary::by_id(c_str(id, "id")?)?
        };
        let json = serde_json::to_string(&lib.manifest()).map_err(|e| Fail(CgpsegStatus::Internal, e.to_string()))?;
        *out = CString::new(json)
            .map_err(|e| Fail(CgpsegStatus::Internal, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgpseg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
