//! C ABI over the deepprior toolkit.
//!
//! Models and datasets are opaque handles created by `*_load` and released
//! by `*_free`. Every fallible call returns a [`DpStatus`]; on failure the
//! message is available from [`dp_last_error_message`] on the same thread.
//! Depth buffers are row-major `u16` millimetres with 0 meaning missing.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use deepprior::datagen::{load_dataset, load_model, Dataset};
use deepprior::geometry::{CameraIntrinsics, DepthFrame, Point3};
use deepprior::localization::{locate_center_of_mass, refine_location, HandLocation, LocationSource, DEFAULT_SEGMENT_EXTENT};
use deepprior::nn::{NetKind, Network};
use deepprior::pipeline::predict_poses;
use deepprior::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpStatus {
    Ok = 0,
    NullArgument = 1,
    Io = 2,
    Format = 3,
    Version = 4,
    Truncated = 5,
    Checksum = 6,
    ArchitectureMismatch = 7,
    InvalidInput = 8,
    NoHand = 9,
    BufferTooSmall = 10,
    Internal = 11,
}

/// Pinhole intrinsics in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DpIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// A loaded network (pose network or refiner).
pub struct DpModel {
    net: Network<f32>,
    cube_size: f64,
}

pub struct DpDataset {
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DpStatus {
    match e {
        Error::Io(_) => DpStatus::Io,
        Error::Format(_) | Error::Json(_) => DpStatus::Format,
        Error::Version { .. } => DpStatus::Version,
        Error::Truncated(_) => DpStatus::Truncated,
        Error::Checksum(_) => DpStatus::Checksum,
        Error::ArchitectureMismatch { .. } => DpStatus::ArchitectureMismatch,
        Error::NoHand(_) => DpStatus::NoHand,
        _ => DpStatus::InvalidInput,
    }
}

struct Fail(DpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DpStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DpStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(DpStatus::InvalidInput, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn frame_arg(
    depth: *const u16,
    width: usize,
    height: usize,
    k: *const DpIntrinsics,
) -> Result<(DepthFrame, CameraIntrinsics), Fail> {
    if depth.is_null() {
        return Err(null("depth"));
    }
    if k.is_null() {
        return Err(null("intrinsics"));
    }
    let n = width.checked_mul(height).ok_or_else(|| Fail(DpStatus::InvalidInput, "frame size overflows".into()))?;
    let pixels = std::slice::from_raw_parts(depth, n).to_vec();
    let k = &*k;
    let intr = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, width, height)?;
    Ok((DepthFrame::new(width, height, pixels)?, intr))
}

unsafe fn model_arg<'a>(m: *const DpModel) -> Result<&'a DpModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn write_point(out: *mut f64, p: Point3) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output"));
    }
    std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&p.to_array());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model file written by the toolkit.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_model_load(path: *const c_char, out: *mut *mut DpModel) -> DpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let file = load_model::<f32>(&path_arg(path)?, None)?;
        *out = Box::into_raw(Box::new(DpModel { net: file.net, cube_size: file.meta.cube_size }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`dp_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dp_model_free(model: *mut DpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of network outputs (3J for a pose network, 3 for a refiner); 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_model_output_dim(model: *const DpModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.output_dim())
}

/// 1 for a pose network, 0 otherwise.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_model_is_posenet(model: *const DpModel) -> i32 {
    model.as_ref().map_or(0, |m| (m.net.kind() == NetKind::PoseNet) as i32)
}

/// Centre of mass of the nearest depth segment; writes `x, y, z` mm to `out_xyz`.
/// `extent` <= 0 selects the default 250 mm.
///
/// # Safety
/// `depth` must hold `width * height` values, `k` and `out_xyz` (3 doubles) must be valid.
#[no_mangle]
pub unsafe extern "C" fn dp_localize_com(
    depth: *const u16,
    width: usize,
    height: usize,
    k: *const DpIntrinsics,
    extent: f64,
    out_xyz: *mut f64,
) -> DpStatus {
    guard(|| {
        let (frame, intr) = frame_arg(depth, width, height, k)?;
        let extent = if extent > 0.0 { extent } else { DEFAULT_SEGMENT_EXTENT };
        write_point(out_xyz, locate_center_of_mass(&frame, &intr, extent)?.point)
    })
}

/// One refinement step of `center_xyz` with a refiner model.
///
/// # Safety
/// As [`dp_localize_com`]; `center_xyz` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn dp_refine(
    refiner: *const DpModel,
    depth: *const u16,
    width: usize,
    height: usize,
    k: *const DpIntrinsics,
    center_xyz: *const f64,
    out_xyz: *mut f64,
) -> DpStatus {
    guard(|| {
        let m = model_arg(refiner)?;
        let (frame, intr) = frame_arg(depth, width, height, k)?;
        if center_xyz.is_null() {
            return Err(null("center"));
        }
        let c = std::slice::from_raw_parts(center_xyz, 3);
        let loc = HandLocation { point: Point3::new(c[0], c[1], c[2]), source: LocationSource::CenterOfMass };
        write_point(out_xyz, refine_location(&frame, &intr, loc, &m.net, m.cube_size, 1)?.point)
    })
}

/// Predicts 3J joint coordinates (mm) for a crop centred at `center_xyz`.
/// `out_len` must be at least the model output dimension.
///
/// # Safety
/// As [`dp_refine`]; `out_joints` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dp_predict(
    posenet: *const DpModel,
    depth: *const u16,
    width: usize,
    height: usize,
    k: *const DpIntrinsics,
    center_xyz: *const f64,
    out_joints: *mut f64,
    out_len: usize,
) -> DpStatus {
    guard(|| {
        let m = model_arg(posenet)?;
        let (frame, intr) = frame_arg(depth, width, height, k)?;
        if center_xyz.is_null() || out_joints.is_null() {
            return Err(null("center or output"));
        }
        if out_len < m.net.output_dim() {
            return Err(Fail(
                DpStatus::BufferTooSmall,
                format!("output buffer holds {out_len} values, model produces {}", m.net.output_dim()),
            ));
        }
        let c = std::slice::from_raw_parts(center_xyz, 3);
        let poses = predict_poses(&m.net, &[frame], &[Point3::new(c[0], c[1], c[2])], &intr, m.cube_size)?;
        let flat = poses[0].flatten();
        std::slice::from_raw_parts_mut(out_joints, flat.len()).copy_from_slice(&flat);
        Ok(())
    })
}

/// Loads a dataset container (and its annotation sidecar).
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_dataset_load(path: *const c_char, out: *mut *mut DpDataset) -> DpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = load_dataset(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DpDataset { data }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`dp_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dp_dataset_free(ds: *mut DpDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of frames; 0 for null.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_dataset_len(ds: *const DpDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.len())
}

/// Frame size and intrinsics of the dataset.
///
/// # Safety
/// `ds` must be a live handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dp_dataset_camera(
    ds: *const DpDataset,
    width: *mut usize,
    height: *mut usize,
    k: *mut DpIntrinsics,
) -> DpStatus {
    guard(|| {
        let d = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if width.is_null() || height.is_null() || k.is_null() {
            return Err(null("output"));
        }
        let i = d.data.intrinsics;
        *width = i.width;
        *height = i.height;
        *k = DpIntrinsics { fx: i.fx, fy: i.fy, cx: i.cx, cy: i.cy };
        Ok(())
    })
}

/// Borrowed pointer to the depth pixels of frame `index` (valid while the
/// dataset lives), or null when out of range.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_dataset_frame(ds: *const DpDataset, index: usize) -> *const u16 {
    ds.as_ref().and_then(|d| d.data.frames.get(index)).map_or(ptr::null(), |f| f.depth.as_ptr())
}

/// Copies the annotated joints of frame `index` (3J doubles, mm).
///
/// # Safety
/// `ds` must be a live handle and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dp_dataset_annotation(ds: *const DpDataset, index: usize, out: *mut f64, out_len: usize) -> DpStatus {
    guard(|| {
        let d = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let pose = d
            .data
            .annotations
            .get(index)
            .ok_or_else(|| Fail(DpStatus::InvalidInput, format!("frame {index} out of range")))?;
        let flat = pose.flatten();
        if out.is_null() {
            return Err(null("output"));
        }
        if out_len < flat.len() {
            return Err(Fail(DpStatus::BufferTooSmall, format!("annotation needs {} values", flat.len())));
        }
        std::slice::from_raw_parts_mut(out, flat.len()).copy_from_slice(&flat);
        Ok(())
    })
}
