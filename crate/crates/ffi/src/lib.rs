//! C interface. Every function returns an [`SkgStatus`]; on failure the
//! message is available from [`skg_last_error`] on the same thread.
//!
//! Images cross the boundary as row-major `float` buffers of
//! `resolution * resolution` values in `[0, 1]`, ink = 1.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchgan::dataset::{load_dataset, make_toy_dataset, Dataset};
use sketchgan::evaluation::{fid, gaussian_stats, kid, psnr_slices, KID_SUBSETS, KID_SUBSET_SIZE};
use sketchgan::networks::Networks;
use sketchgan::raster::Raster;
use sketchgan::synthesis::{generate_random, generate_reference, interpolate_styles, request_rng};
use sketchgan::trainer::load_checkpoint;
use sketchgan::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Data = 5,
    Io = 6,
    Checkpoint = 7,
    Version = 8,
    Numeric = 9,
    Internal = 10,
    Panic = 11,
}

/// Loaded sample corpus.
pub struct SkgDataset(Dataset);

/// Trained networks restored from a checkpoint.
pub struct SkgModel(Networks);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SkgStatus {
    match e {
        Error::Shape(_) => SkgStatus::Shape,
        Error::Config(_) => SkgStatus::Config,
        Error::InvalidArgument(_) => SkgStatus::InvalidArgument,
        Error::Domain { .. } | Error::Numeric(_) => SkgStatus::Numeric,
        Error::Data(_) | Error::MissingIcon(_) | Error::Image { .. } | Error::Json(_) => SkgStatus::Data,
        Error::Checkpoint(_) => SkgStatus::Checkpoint,
        Error::Version(_) => SkgStatus::Version,
        Error::Io { .. } => SkgStatus::Io,
        Error::Torch(_) => SkgStatus::Internal,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail::Lib(Error::InvalidArgument(msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SkgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SkgStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SkgStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!(": {s}"));
                src = s.source();
            }
            set_error(msg);
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SkgStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice_arg<'a>(p: *const f32, len: usize, what: &'static str) -> Result<&'a [f32], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f32, len: usize, what: &'static str) -> Result<&'a mut [f32], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn raster_arg(p: *const f32, res: usize, what: &'static str) -> Result<Raster, Fail> {
    Ok(Raster::from_pixels(res, res, slice_arg(p, res * res, what)?.to_vec())?)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn skg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Procedural toy corpus.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skg_dataset_toy(
    classes: usize,
    painters: usize,
    samples_per_pair: usize,
    resolution: usize,
    seed: u64,
    out: *mut *mut SkgDataset,
) -> SkgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = make_toy_dataset(classes, painters, samples_per_pair, resolution, seed)?;
        *out = Box::into_raw(Box::new(SkgDataset(ds)));
        Ok(())
    })
}

/// Corpus from a directory; `resolution` 0 keeps the stored resolution.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skg_dataset_load(
    path: *const c_char,
    resolution: usize,
    out: *mut *mut SkgDataset,
) -> SkgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(path, "path")?;
        let ds = load_dataset(&path, (resolution != 0).then_some(resolution))?;
        *out = Box::into_raw(Box::new(SkgDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library; each output may be null.
#[no_mangle]
pub unsafe extern "C" fn skg_dataset_info(
    ds: *const SkgDataset,
    len: *mut usize,
    resolution: *mut usize,
    classes: *mut usize,
    painters: *mut usize,
) -> SkgStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        for (p, v) in [
            (len, ds.len()),
            (resolution, ds.resolution()),
            (classes, ds.class_count()),
            (painters, ds.painter_count()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies sample `index`: its sketch and its class icon (each
/// `resolution²` floats), and labels. Any output may be null.
///
/// # Safety
/// Non-null buffers must hold `resolution²` floats.
#[no_mangle]
pub unsafe extern "C" fn skg_dataset_sample(
    ds: *const SkgDataset,
    index: usize,
    sketch: *mut f32,
    icon: *mut f32,
    class_label: *mut usize,
    painter_label: *mut usize,
) -> SkgStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        let s = ds
            .samples()
            .get(index)
            .ok_or_else(|| invalid(format!("sample index {index} out of range ({})", ds.len())))?;
        let n = ds.resolution() * ds.resolution();
        if !sketch.is_null() {
            slice_out(sketch, n, "sketch")?.copy_from_slice(s.sketch.pixels());
        }
        if !icon.is_null() {
            slice_out(icon, n, "icon")?.copy_from_slice(ds.icon(s.class_label)?.pixels());
        }
        if let Some(p) = class_label.as_mut() {
            *p = s.class_label;
        }
        if let Some(p) = painter_label.as_mut() {
            *p = s.painter_label;
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn skg_dataset_free(ds: *mut SkgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Restores the networks of a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skg_model_load(path: *const c_char, out: *mut *mut SkgModel) -> SkgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(path, "path")?;
        let nets = load_checkpoint(&path)?.nets;
        *out = Box::into_raw(Box::new(SkgModel(nets)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `resolution` be valid.
#[no_mangle]
pub unsafe extern "C" fn skg_model_resolution(model: *const SkgModel, resolution: *mut usize) -> SkgStatus {
    guard(|| {
        *out_arg(resolution, "resolution")? = ref_arg(model, "model")?.0.config().resolution;
        Ok(())
    })
}

/// One sketch of `icon` in a random style. Identical seeds give identical
/// output.
///
/// # Safety
/// `icon` and `out` must hold the model's `resolution²` floats.
#[no_mangle]
pub unsafe extern "C" fn skg_generate_random(
    model: *const SkgModel,
    icon: *const f32,
    seed: u64,
    out: *mut f32,
) -> SkgStatus {
    guard(|| {
        let nets = &ref_arg(model, "model")?.0;
        let res = nets.config().resolution;
        let icon = raster_arg(icon, res, "icon")?;
        let img = generate_random(nets, &icon, &mut request_rng(seed, 0))?;
        slice_out(out, res * res, "out")?.copy_from_slice(img.pixels());
        Ok(())
    })
}

/// One sketch of `icon` in the style of `style_image`.
///
/// # Safety
/// `icon`, `style_image` and `out` must hold `resolution²` floats.
#[no_mangle]
pub unsafe extern "C" fn skg_generate_reference(
    model: *const SkgModel,
    icon: *const f32,
    style_image: *const f32,
    seed: u64,
    out: *mut f32,
) -> SkgStatus {
    guard(|| {
        let nets = &ref_arg(model, "model")?.0;
        let res = nets.config().resolution;
        let icon = raster_arg(icon, res, "icon")?;
        let style = raster_arg(style_image, res, "style_image")?;
        let img = generate_reference(nets, &icon, &style, &mut request_rng(seed, 0))?;
        slice_out(out, res * res, "out")?.copy_from_slice(img.pixels());
        Ok(())
    })
}

/// `steps` frames of `icon` along the style path from `style_a` to
/// `style_b`, written consecutively to `out`.
///
/// # Safety
/// Inputs hold `resolution²` floats, `out` holds `steps * resolution²`.
#[no_mangle]
pub unsafe extern "C" fn skg_interpolate(
    model: *const SkgModel,
    icon: *const f32,
    style_a: *const f32,
    style_b: *const f32,
    steps: usize,
    seed: u64,
    out: *mut f32,
) -> SkgStatus {
    guard(|| {
        let nets = &ref_arg(model, "model")?.0;
        let res = nets.config().resolution;
        let icon = raster_arg(icon, res, "icon")?;
        let a = raster_arg(style_a, res, "style_a")?;
        let b = raster_arg(style_b, res, "style_b")?;
        let frames = interpolate_styles(nets, &icon, &a, &b, steps, &mut request_rng(seed, 0))?;
        let out = slice_out(out, steps * res * res, "out")?;
        for (dst, f) in out.chunks_mut(res * res).zip(&frames) {
            dst.copy_from_slice(f.pixels());
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn skg_model_free(model: *mut SkgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// PSNR in dB between two buffers of `len` values with peak `max_value`.
///
/// # Safety
/// `a` and `b` hold `len` floats; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn skg_psnr(
    a: *const f32,
    b: *const f32,
    len: usize,
    max_value: f64,
    out: *mut f64,
) -> SkgStatus {
    guard(|| {
        let v = psnr_slices(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?, max_value)?;
        *out_arg(out, "out")? = v;
        Ok(())
    })
}

unsafe fn features(p: *const f64, rows: usize, dim: usize, what: &'static str) -> Result<DMatrix<f64>, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(DMatrix::from_row_slice(rows, dim, std::slice::from_raw_parts(p, rows * dim)))
}

/// Fréchet distance between the Gaussian fits of two row-major feature
/// matrices `[n_real, dim]` and `[n_fake, dim]`.
///
/// # Safety
/// Buffers hold `n * dim` doubles; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn skg_fid(
    real: *const f64,
    n_real: usize,
    fake: *const f64,
    n_fake: usize,
    dim: usize,
    out: *mut f64,
) -> SkgStatus {
    guard(|| {
        let r = gaussian_stats(&features(real, n_real, dim, "real")?)?;
        let f = gaussian_stats(&features(fake, n_fake, dim, "fake")?)?;
        *out_arg(out, "out")? = fid(&r, &f)?;
        Ok(())
    })
}

/// Kernel inception distance over random subsets drawn with `seed`.
///
/// # Safety
/// Buffers hold `n * dim` doubles; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn skg_kid(
    real: *const f64,
    n_real: usize,
    fake: *const f64,
    n_fake: usize,
    dim: usize,
    seed: u64,
    out: *mut f64,
) -> SkgStatus {
    guard(|| {
        let r = features(real, n_real, dim, "real")?;
        let f = features(fake, n_fake, dim, "fake")?;
        let v = kid(&r, &f, KID_SUBSET_SIZE, KID_SUBSETS, &mut ChaCha8Rng::seed_from_u64(seed))?;
        *out_arg(out, "out")? = v;
        Ok(())
    })
}
