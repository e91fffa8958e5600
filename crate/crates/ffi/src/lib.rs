//! C ABI for `cadeval`.
//!
//! Every fallible function returns a [`CadevalStatus`]; on failure the
//! message is available from [`cadeval_last_error`] on the same thread.
//! Handles are created by `*_new` and released by the matching `*_free`.
//! Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cadeval::bootstrap::BootstrapConfig;
use cadeval::froc::{
    froc_bootstrap_band, froc_curve, operating_point, FrocImage, LesionAnnotation,
};
use cadeval::geometry::{iou, nms, BoundingBox, Detection, LesionClass, NmsConfig};
use cadeval::preprocess::{
    isotropic_resize, resized_dims, window_rescale, PixelImage, ResizeConfig, WindowConfig,
};
use cadeval::roc::{auc_bootstrap, roc_curve, ScoredCase};
use cadeval::scoring::image_score;
use cadeval::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CadevalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Degenerate = 3,
    Config = 4,
    Validation = 5,
    Io = 6,
    Image = 7,
    InvalidUtf8 = 8,
    OutOfRange = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

impl From<&Error> for CadevalStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => CadevalStatus::InvalidInput,
            Error::Degenerate(_) => CadevalStatus::Degenerate,
            Error::Config(_) => CadevalStatus::Config,
            Error::Validation { .. } => CadevalStatus::Validation,
            Error::Io { .. } => CadevalStatus::Io,
            Error::Image { .. } => CadevalStatus::Image,
        }
    }
}

struct Failure(CadevalStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> FfiResult) -> CadevalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CadevalStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            CadevalStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CadevalStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> FfiResult {
    *deref_mut(p, what)? = v;
    Ok(())
}

unsafe fn string(p: *const c_char, what: &str) -> FfiResult<String> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(CadevalStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn cadeval_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn cadeval_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadevalBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl CadevalBox {
    fn to_box(self) -> FfiResult<BoundingBox> {
        Ok(BoundingBox::new(
            self.x_min, self.y_min, self.x_max, self.y_max,
        )?)
    }

    fn from_box(b: &BoundingBox) -> Self {
        CadevalBox {
            x_min: b.x_min(),
            y_min: b.y_min(),
            x_max: b.x_max(),
            y_max: b.y_max(),
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadevalDetection {
    pub bbox: CadevalBox,
    pub score: f64,
    /// Nonzero for malignant, zero for benign.
    pub malignant: i32,
}

/// Intersection over union of two boxes.
///
/// # Safety
/// `a`, `b` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cadeval_iou(
    a: *const CadevalBox,
    b: *const CadevalBox,
    out: *mut f64,
) -> CadevalStatus {
    guard(|| {
        let a = deref(a, "a")?.to_box()?;
        let b = deref(b, "b")?.to_box()?;
        write_out(out, iou(&a, &b), "out")
    })
}

/// Detections of one image.
pub struct CadevalDetections {
    image_id: String,
    items: Vec<Detection>,
}

/// # Safety
/// `image_id` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_detections_new(
    image_id: *const c_char,
    out: *mut *mut CadevalDetections,
) -> CadevalStatus {
    guard(|| {
        let image_id = string(image_id, "image_id")?;
        write_out(
            out,
            boxed(CadevalDetections {
                image_id,
                items: Vec::new(),
            }),
            "out",
        )
    })
}

/// # Safety
/// `set` must come from `cadeval_detections_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn cadeval_detections_free(set: *mut CadevalDetections) {
    free(set);
}

/// # Safety
/// `set` must be a live handle and `det` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_detections_push(
    set: *mut CadevalDetections,
    det: *const CadevalDetection,
) -> CadevalStatus {
    guard(|| {
        let set = deref_mut(set, "set")?;
        let d = deref(det, "det")?;
        let class = if d.malignant != 0 {
            LesionClass::Malignant
        } else {
            LesionClass::Benign
        };
        let det = Detection::new(set.image_id.as_str(), d.bbox.to_box()?, d.score, class)?;
        set.items.push(det);
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_detections_len(
    set: *const CadevalDetections,
    out: *mut usize,
) -> CadevalStatus {
    guard(|| write_out(out, deref(set, "set")?.items.len(), "out"))
}

/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_detections_get(
    set: *const CadevalDetections,
    index: usize,
    out: *mut CadevalDetection,
) -> CadevalStatus {
    guard(|| {
        let set = deref(set, "set")?;
        let d = set.items.get(index).ok_or_else(|| {
            Failure(
                CadevalStatus::OutOfRange,
                format!(
                    "index {index} out of range for {} detections",
                    set.items.len()
                ),
            )
        })?;
        write_out(
            out,
            CadevalDetection {
                bbox: CadevalBox::from_box(d.bbox()),
                score: d.score(),
                malignant: i32::from(d.is_malignant()),
            },
            "out",
        )
    })
}

/// Greedy class-wise NMS into a new handle, survivors in descending score order.
///
/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_detections_nms(
    set: *const CadevalDetections,
    iou_threshold: f64,
    out: *mut *mut CadevalDetections,
) -> CadevalStatus {
    guard(|| {
        let set = deref(set, "set")?;
        let kept = nms(&set.items, &NmsConfig::new(iou_threshold)?)?;
        write_out(
            out,
            boxed(CadevalDetections {
                image_id: set.image_id.clone(),
                items: kept,
            }),
            "out",
        )
    })
}

/// Maximum malignant score, 0 when there is none.
///
/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_detections_image_score(
    set: *const CadevalDetections,
    out: *mut f64,
) -> CadevalStatus {
    guard(|| {
        let set = deref(set, "set")?;
        write_out(
            out,
            image_score(set.image_id.as_str(), &set.items).score,
            "out",
        )
    })
}

/// Scored cases with binary truth, for ROC analysis.
pub struct CadevalCaseSet {
    cases: Vec<ScoredCase>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadevalInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_cases_new(out: *mut *mut CadevalCaseSet) -> CadevalStatus {
    guard(|| write_out(out, boxed(CadevalCaseSet { cases: Vec::new() }), "out"))
}

/// # Safety
/// `set` must come from `cadeval_cases_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn cadeval_cases_free(set: *mut CadevalCaseSet) {
    free(set);
}

/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cadeval_cases_push(
    set: *mut CadevalCaseSet,
    score: f64,
    positive: i32,
) -> CadevalStatus {
    guard(|| {
        deref_mut(set, "set")?
            .cases
            .push(ScoredCase::new(score, positive != 0));
        Ok(())
    })
}

/// Trapezoidal area under the ROC curve.
///
/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_cases_auc(
    set: *const CadevalCaseSet,
    out: *mut f64,
) -> CadevalStatus {
    guard(|| {
        let auc = roc_curve(&deref(set, "set")?.cases)?.auc;
        write_out(out, auc, "out")
    })
}

/// AUC with a seeded percentile-bootstrap interval (`interval` in percent).
///
/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_cases_auc_bootstrap(
    set: *const CadevalCaseSet,
    replicates: usize,
    interval: f64,
    seed: u64,
    out: *mut CadevalInterval,
) -> CadevalStatus {
    guard(|| {
        let cfg = BootstrapConfig::new(replicates, interval, seed)?;
        let r = auc_bootstrap(&deref(set, "set")?.cases, &cfg)?;
        write_out(
            out,
            CadevalInterval {
                estimate: r.auc,
                lo: r.lo,
                hi: r.hi,
            },
            "out",
        )
    })
}

/// Images with lesions and detections, for FROC analysis.
pub struct CadevalFrocSet {
    images: Vec<FrocImage>,
    index: HashMap<String, usize>,
}

impl CadevalFrocSet {
    fn image(&mut self, id: &str) -> FfiResult<&mut FrocImage> {
        let i = *self
            .index
            .get(id)
            .ok_or_else(|| Failure(CadevalStatus::InvalidInput, format!("unknown image {id:?}")))?;
        Ok(&mut self.images[i])
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadevalOperatingPoint {
    pub target_fp_per_image: f64,
    pub fp_per_image: f64,
    pub sensitivity: f64,
    pub threshold: f64,
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_froc_new(out: *mut *mut CadevalFrocSet) -> CadevalStatus {
    guard(|| {
        write_out(
            out,
            boxed(CadevalFrocSet {
                images: Vec::new(),
                index: HashMap::new(),
            }),
            "out",
        )
    })
}

/// # Safety
/// `set` must come from `cadeval_froc_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn cadeval_froc_free(set: *mut CadevalFrocSet) {
    free(set);
}

/// Adds an image without lesions or detections. Image ids are unique.
///
/// # Safety
/// `set` must be a live handle and `image_id` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn cadeval_froc_add_image(
    set: *mut CadevalFrocSet,
    image_id: *const c_char,
) -> CadevalStatus {
    guard(|| {
        let set = deref_mut(set, "set")?;
        let id = string(image_id, "image_id")?;
        if set.index.contains_key(&id) {
            return Err(Failure(
                CadevalStatus::InvalidInput,
                format!("image {id:?} added twice"),
            ));
        }
        set.index.insert(id.clone(), set.images.len());
        set.images.push(FrocImage {
            image_id: id,
            detections: Vec::new(),
            lesions: Vec::new(),
        });
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle, the strings valid C strings and `bbox` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_froc_add_lesion(
    set: *mut CadevalFrocSet,
    image_id: *const c_char,
    lesion_id: *const c_char,
    bbox: *const CadevalBox,
) -> CadevalStatus {
    guard(|| {
        let set = deref_mut(set, "set")?;
        let image_id = string(image_id, "image_id")?;
        let lesion = LesionAnnotation {
            lesion_id: string(lesion_id, "lesion_id")?,
            image_id: image_id.clone(),
            bbox: deref(bbox, "bbox")?.to_box()?,
        };
        set.image(&image_id)?.lesions.push(lesion);
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle, `image_id` a valid C string and `det` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_froc_add_detection(
    set: *mut CadevalFrocSet,
    image_id: *const c_char,
    det: *const CadevalDetection,
) -> CadevalStatus {
    guard(|| {
        let set = deref_mut(set, "set")?;
        let image_id = string(image_id, "image_id")?;
        let d = deref(det, "det")?;
        let class = if d.malignant != 0 {
            LesionClass::Malignant
        } else {
            LesionClass::Benign
        };
        let det = Detection::new(image_id.as_str(), d.bbox.to_box()?, d.score, class)?;
        set.image(&image_id)?.detections.push(det);
        Ok(())
    })
}

/// Highest sensitivity with at most `target_fp_per_image` false positives per image.
///
/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_froc_operating_point(
    set: *const CadevalFrocSet,
    target_fp_per_image: f64,
    out: *mut CadevalOperatingPoint,
) -> CadevalStatus {
    guard(|| {
        let curve = froc_curve(&deref(set, "set")?.images)?;
        let op = operating_point(&curve, target_fp_per_image);
        write_out(
            out,
            CadevalOperatingPoint {
                target_fp_per_image: op.target_fp_per_image,
                fp_per_image: op.fp_per_image,
                sensitivity: op.sensitivity,
                threshold: op.threshold,
            },
            "out",
        )
    })
}

/// Sensitivity at `fp_per_image` with an image-resampled bootstrap interval.
///
/// # Safety
/// `set` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cadeval_froc_sensitivity_band(
    set: *const CadevalFrocSet,
    fp_per_image: f64,
    replicates: usize,
    interval: f64,
    seed: u64,
    out: *mut CadevalInterval,
) -> CadevalStatus {
    guard(|| {
        let images = &deref(set, "set")?.images;
        let curve = froc_curve(images)?;
        let cfg = BootstrapConfig::new(replicates, interval, seed)?;
        let band = froc_bootstrap_band(images, &cfg, &[fp_per_image])?;
        write_out(
            out,
            CadevalInterval {
                estimate: curve.sensitivity_at(fp_per_image),
                lo: band.band[0].lo,
                hi: band.band[0].hi,
            },
            "out",
        )
    })
}

unsafe fn pixel_image(
    pixels: *const u16,
    width: u32,
    height: u32,
    bit_depth: u8,
) -> FfiResult<PixelImage> {
    if pixels.is_null() {
        return Err(null("pixels"));
    }
    let n = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| Failure(CadevalStatus::InvalidInput, "image too large".into()))?;
    let data = std::slice::from_raw_parts(pixels, n).to_vec();
    Ok(PixelImage::new(width, height, bit_depth, data)?)
}

unsafe fn copy_out(src: &[u16], out: *mut u16, capacity: usize) -> FfiResult {
    if out.is_null() {
        return Err(null("out"));
    }
    if capacity < src.len() {
        return Err(Failure(
            CadevalStatus::BufferTooSmall,
            format!("output needs {} pixels, capacity is {capacity}", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Mode windowing of a row-major grayscale image into 0..255. `out` receives
/// `width * height` values; `out_mode` (optional) the histogram mode.
///
/// # Safety
/// `pixels` must hold `width * height` values and `out` `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn cadeval_window(
    pixels: *const u16,
    width: u32,
    height: u32,
    bit_depth: u8,
    lower_offset: u32,
    upper_offset: u32,
    background_threshold: u32,
    out: *mut u16,
    capacity: usize,
    out_mode: *mut u16,
) -> CadevalStatus {
    guard(|| {
        let img = pixel_image(pixels, width, height, bit_depth)?;
        let cfg = WindowConfig {
            lower_offset,
            upper_offset,
            background_threshold,
        };
        let w = window_rescale(&img, &cfg)?;
        copy_out(w.image.pixels(), out, capacity)?;
        if !out_mode.is_null() {
            *out_mode = w.mode;
        }
        Ok(())
    })
}

/// Output size of the isotropic downscale.
///
/// # Safety
/// `out_width` and `out_height` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cadeval_resize_dims(
    width: u32,
    height: u32,
    max_long: u32,
    max_short: u32,
    out_width: *mut u32,
    out_height: *mut u32,
) -> CadevalStatus {
    guard(|| {
        let cfg = ResizeConfig::new(max_long, max_short)?;
        if width == 0 || height == 0 {
            return Err(Failure(CadevalStatus::InvalidInput, "empty image".into()));
        }
        let (w, h) = resized_dims(width, height, &cfg);
        write_out(out_width, w, "out_width")?;
        write_out(out_height, h, "out_height")
    })
}

/// Isotropic area-average downscale. Size `out` with [`cadeval_resize_dims`].
///
/// # Safety
/// `pixels` must hold `width * height` values and `out` `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn cadeval_resize(
    pixels: *const u16,
    width: u32,
    height: u32,
    bit_depth: u8,
    max_long: u32,
    max_short: u32,
    out: *mut u16,
    capacity: usize,
) -> CadevalStatus {
    guard(|| {
        let img = pixel_image(pixels, width, height, bit_depth)?;
        let r = isotropic_resize(&img, &ResizeConfig::new(max_long, max_short)?);
        copy_out(r.image.pixels(), out, capacity)
    })
}
