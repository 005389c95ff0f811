//! C ABI over decaylab.
//!
//! Every call returns a [`DlStatus`]; results come back through out-pointers.
//! Objects are opaque handles freed with their `_free` function. After a
//! failure, [`dl_last_error`] gives a message for the calling thread.
//! Panics are caught at the boundary and reported as `DL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use decaylab::conv_engine::{convolve, ConvOp};
use decaylab::dyadic_sets::{additive_energy, covering_number};
use decaylab::energy::energy_spatial;
use decaylab::measure_grid::regularize;
use decaylab::spectral::{fourier_at, l2_at_scale, product_fourier};
use decaylab::{DyadicGridSet, Error, GridMeasure};

/// Opaque measure handle.
pub struct DlMeasure {
    inner: GridMeasure,
}

/// Opaque 1-D dyadic set handle.
pub struct DlSet {
    inner: DyadicGridSet,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Precondition = 3,
    BufferTooSmall = 4,
    Overflow = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlConvOp {
    Add = 0,
    Sub = 1,
    Mul = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DlStatus {
    match err {
        Error::Precondition(_)
        | Error::NoDensityLevel { .. }
        | Error::TooFewMeasures { .. }
        | Error::EmptyHs { .. }
        | Error::CosineFloor { .. }
        | Error::NotUniform { .. } => DlStatus::Precondition,
        Error::Io(_) => DlStatus::Io,
        Error::Parse { .. } | Error::Config(_) | Error::Json(_) => DlStatus::Parse,
        _ => DlStatus::InvalidArgument,
    }
}

type Outcome = std::result::Result<(), (DlStatus, String)>;

fn fail(err: Error) -> (DlStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (DlStatus, String) {
    (DlStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error message, and turns panics into a status.
fn guard(f: impl FnOnce() -> Outcome) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            DlStatus::Panic
        }
    }
}

unsafe fn measure<'a>(p: *const DlMeasure) -> Result<&'a GridMeasure, (DlStatus, String)> {
    p.as_ref().map(|m| &m.inner).ok_or_else(|| null("measure"))
}

unsafe fn set<'a>(p: *const DlSet) -> Result<&'a DyadicGridSet, (DlStatus, String)> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null("set"))
}

unsafe fn put<T>(out: *mut T, v: T) -> Outcome {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_measure(out: *mut *mut DlMeasure, m: GridMeasure) -> Outcome {
    put(out, Box::into_raw(Box::new(DlMeasure { inner: m })))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    V.as_ptr()
}

/// Uniform probability measure on `[a, b]` at grid level `level`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_uniform(a: f64, b: f64, level: u32, out: *mut *mut DlMeasure) -> DlStatus {
    guard(|| put_measure(out, GridMeasure::uniform(a, b, level).map_err(fail)?))
}

/// Measure from `len` cell masses starting at cell index `offset`.
///
/// # Safety
/// `masses` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_from_masses(
    level: u32,
    offset: i64,
    masses: *const f64,
    len: usize,
    out: *mut *mut DlMeasure,
) -> DlStatus {
    guard(|| {
        if masses.is_null() && len > 0 {
            return Err(null("masses"));
        }
        let v = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(masses, len).to_vec() };
        put_measure(out, GridMeasure::from_cell_masses(level, offset, v).map_err(fail)?)
    })
}

/// Frees a measure; null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_free(m: *mut DlMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_total(m: *const DlMeasure, out: *mut f64) -> DlStatus {
    guard(|| put(out, measure(m)?.total_mass()))
}

/// Number of cells in the measure's window.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_len(m: *const DlMeasure, out: *mut usize) -> DlStatus {
    guard(|| put(out, measure(m)?.len()))
}

/// # Safety
/// `m` must be a live handle; `level` and `offset` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_grid(m: *const DlMeasure, level: *mut u32, offset: *mut i64) -> DlStatus {
    guard(|| {
        let mu = measure(m)?;
        put(level, mu.level())?;
        put(offset, mu.offset())
    })
}

/// Copies cell masses into `buf`. `written` always receives the number of
/// cells; when `cap` is too small nothing is copied and
/// `DL_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `buf` must hold `cap` doubles; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_copy_masses(
    m: *const DlMeasure,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> DlStatus {
    guard(|| {
        let masses = measure(m)?.masses();
        put(written, masses.len())?;
        if cap < masses.len() {
            return Err((DlStatus::BufferTooSmall, format!("need {} doubles, got {cap}", masses.len())));
        }
        if !masses.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(masses.as_ptr(), buf, masses.len());
        }
        Ok(())
    })
}

/// Additive, difference or multiplicative convolution.
///
/// # Safety
/// `mu`, `nu` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_convolve(
    mu: *const DlMeasure,
    nu: *const DlMeasure,
    op: DlConvOp,
    out: *mut *mut DlMeasure,
) -> DlStatus {
    guard(|| {
        let op = match op {
            DlConvOp::Add => ConvOp::Add,
            DlConvOp::Sub => ConvOp::Sub,
            DlConvOp::Mul => ConvOp::Mul,
        };
        put_measure(out, convolve(measure(mu)?, measure(nu)?, op).map_err(fail)?)
    })
}

/// Regularization at dyadic scale `delta`.
///
/// # Safety
/// `mu` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_regularize(mu: *const DlMeasure, delta: f64, out: *mut *mut DlMeasure) -> DlStatus {
    guard(|| put_measure(out, regularize(measure(mu)?, delta).map_err(fail)?))
}

/// Fourier transform at `xi`, as real and imaginary parts.
///
/// # Safety
/// `mu` must be a live handle; `re`, `im` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_fourier_at(mu: *const DlMeasure, xi: f64, re: *mut f64, im: *mut f64) -> DlStatus {
    guard(|| {
        let z = fourier_at(measure(mu)?, xi);
        put(re, z.re)?;
        put(im, z.im)
    })
}

/// Transform of the multiplicative convolution at `xi`.
///
/// # Safety
/// `mu`, `nu` must be live handles; `re`, `im` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_product_fourier(
    mu: *const DlMeasure,
    nu: *const DlMeasure,
    xi: f64,
    re: *mut f64,
    im: *mut f64,
) -> DlStatus {
    guard(|| {
        let z = product_fourier(measure(mu)?, measure(nu)?, xi);
        put(re, z.re)?;
        put(im, z.im)
    })
}

/// s-energy of the regularization at `delta`.
///
/// # Safety
/// `mu` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_energy_spatial(mu: *const DlMeasure, s: f64, delta: f64, out: *mut f64) -> DlStatus {
    guard(|| put(out, energy_spatial(measure(mu)?, s, delta).map_err(fail)?))
}

/// L2 norm of the regularization at `delta`.
///
/// # Safety
/// `mu` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_l2_at_scale(mu: *const DlMeasure, delta: f64, out: *mut f64) -> DlStatus {
    guard(|| put(out, l2_at_scale(measure(mu)?, delta).map_err(fail)?))
}

/// Serializes a measure to the text format. Free the string with
/// [`dl_string_free`].
///
/// # Safety
/// `mu` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_to_text(mu: *const DlMeasure, out: *mut *mut c_char) -> DlStatus {
    guard(|| {
        let text = measure(mu)?.to_text();
        let c = CString::new(text).map_err(|e| (DlStatus::InvalidArgument, e.to_string()))?;
        put(out, c.into_raw())
    })
}

/// Parses the text format back into a measure.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_measure_from_text(text: *const c_char, out: *mut *mut DlMeasure) -> DlStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| (DlStatus::Parse, e.to_string()))?;
        put_measure(out, GridMeasure::from_text(s).map_err(fail)?)
    })
}

/// Frees a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// 1-D set from `len` cell indices at `level`; duplicates are merged.
///
/// # Safety
/// `cells` must point to `len` readable integers; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_set_from_cells(level: u32, cells: *const i64, len: usize, out: *mut *mut DlSet) -> DlStatus {
    guard(|| {
        if cells.is_null() && len > 0 {
            return Err(null("cells"));
        }
        let v = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(cells, len).to_vec() };
        let s = DyadicGridSet::from_cells_1d(level, v).map_err(fail)?;
        put(out, Box::into_raw(Box::new(DlSet { inner: s })))
    })
}

/// Frees a set; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_set_free(s: *mut DlSet) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_set_len(s: *const DlSet, out: *mut usize) -> DlStatus {
    guard(|| put(out, set(s)?.len()))
}

/// Number of dyadic r-cells meeting the set.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_covering_number(s: *const DlSet, r: f64, out: *mut usize) -> DlStatus {
    guard(|| put(out, covering_number(set(s)?, r).map_err(fail)?))
}

/// Quadruple count `a1 - b1 = a2 - b2`. Overflow past 64 bits is reported.
///
/// # Safety
/// `a`, `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dl_additive_energy(a: *const DlSet, b: *const DlSet, out: *mut u64) -> DlStatus {
    guard(|| {
        let e = additive_energy(set(a)?, set(b)?).map_err(fail)?;
        let e = u64::try_from(e).map_err(|_| (DlStatus::Overflow, format!("energy {e} exceeds 64 bits")))?;
        put(out, e)
    })
}
