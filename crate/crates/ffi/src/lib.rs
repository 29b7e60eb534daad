//! C ABI over `sgextremes`.
//!
//! Objects cross the boundary as opaque handles created by `sgx_*_new` or
//! `sgx_*` constructors and released with the matching `*_free`. Every
//! fallible call returns an [`SgxStatus`]; the message of the last failure
//! on the calling thread is available from [`sgx_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sgextremes::extremes::{centering, extremal_process, ExtremalProcessSample};
use sgextremes::experiments::gff_field;
use sgextremes::io::{read_field, write_field};
use sgextremes::{Error, Field, TorusLattice};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Numerical = 3,
    Io = 4,
    Format = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque lattice field.
pub struct SgxField(Field);

/// Opaque extremal point process sample.
pub struct SgxPoints(ExtremalProcessSample);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SgxStatus {
    set_error(e.to_string());
    match e {
        Error::Io(_) => SgxStatus::Io,
        Error::BadMagic
        | Error::TruncatedPayload { .. }
        | Error::UnsupportedFlags(_)
        | Error::MalformedLine { .. } => SgxStatus::Format,
        Error::Numerical(_) | Error::InsufficientData(_) => SgxStatus::Numerical,
        _ => SgxStatus::InvalidParameter,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SgxStatus>) -> SgxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgxStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside sgextremes");
            SgxStatus::Panic
        }
    }
}

fn lift<T>(r: sgextremes::Result<T>) -> Result<T, SgxStatus> {
    r.map_err(|e| status_of(&e))
}

fn non_null<T>(p: *const T) -> Result<(), SgxStatus> {
    if p.is_null() {
        set_error("null pointer argument");
        Err(SgxStatus::NullPointer)
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, SgxStatus> {
    non_null(path)?;
    // SAFETY: the caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(path) }.to_str().map_err(|_| {
        set_error("path is not valid UTF-8");
        SgxStatus::InvalidParameter
    })?;
    Ok(Path::new(s))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sgx_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: buf holds at least len bytes.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// `m_eps` for lattice spacing `epsilon`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sgx_centering(epsilon: f64, out: *mut f64) -> SgxStatus {
    guard(|| {
        non_null(out)?;
        let m = lift(centering(epsilon))?;
        // SAFETY: checked non-null above.
        unsafe { *out = m };
        Ok(())
    })
}

/// Spectral GFF sample `index` of the run with root `seed` on the `n x n`
/// torus. The handle is written to `*out`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sgx_gff_sample(
    n: usize,
    mass_sq: f64,
    seed: u64,
    index: usize,
    out: *mut *mut SgxField,
) -> SgxStatus {
    guard(|| {
        non_null(out)?;
        let l = lift(TorusLattice::new(n))?;
        let f = lift(gff_field(l, mass_sq, seed, index))?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(SgxField(f))) };
        Ok(())
    })
}

/// Field from `n * n` row-major values.
///
/// # Safety
/// `values` must be valid for `n * n` reads and `out` for writes.
#[no_mangle]
pub unsafe extern "C" fn sgx_field_from_values(
    n: usize,
    values: *const f64,
    out: *mut *mut SgxField,
) -> SgxStatus {
    guard(|| {
        non_null(values)?;
        non_null(out)?;
        let l = lift(TorusLattice::new(n))?;
        // SAFETY: the caller guarantees n * n readable values.
        let v = unsafe { std::slice::from_raw_parts(values, l.site_count()) }.to_vec();
        let f = lift(Field::new(l, v))?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(SgxField(f))) };
        Ok(())
    })
}

/// Side length of the field's lattice, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgx_field_n(field: *const SgxField) -> usize {
    // SAFETY: live handle or null.
    unsafe { field.as_ref() }.map_or(0, |f| f.0.lattice().n())
}

/// Copies the row-major values into `buf`, which must hold `n * n` doubles.
///
/// # Safety
/// `field` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sgx_field_values(field: *const SgxField, buf: *mut f64, len: usize) -> SgxStatus {
    guard(|| {
        non_null(field)?;
        non_null(buf)?;
        // SAFETY: live handle.
        let f = unsafe { &*field };
        let v = f.0.values();
        if len < v.len() {
            set_error(format!("buffer holds {len} values, {} needed", v.len()));
            return Err(SgxStatus::BufferTooSmall);
        }
        // SAFETY: buf holds at least v.len() values.
        unsafe { ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len()) };
        Ok(())
    })
}

/// Writes the field in the binary `FLD1` format.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sgx_field_write(field: *const SgxField, path: *const c_char) -> SgxStatus {
    guard(|| {
        non_null(field)?;
        // SAFETY: see function contract.
        let (f, p) = unsafe { (&*field, path_arg(path)?) };
        lift(write_field(p, &f.0))
    })
}

/// Reads a `FLD1` file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sgx_field_read(path: *const c_char, out: *mut *mut SgxField) -> SgxStatus {
    guard(|| {
        non_null(out)?;
        // SAFETY: see function contract.
        let p = unsafe { path_arg(path)? };
        let f = lift(read_field(p))?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(SgxField(f))) };
        Ok(())
    })
}

/// Releases a field handle. Null is ignored.
///
/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgx_field_free(field: *mut SgxField) {
    if !field.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(field) });
    }
}

/// Extremal process of the field: r-local maxima with radius
/// `r_lattice * epsilon`, heights centered by `m_eps`.
///
/// # Safety
/// `field` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sgx_extremal_process(
    field: *const SgxField,
    r_lattice: f64,
    out: *mut *mut SgxPoints,
) -> SgxStatus {
    guard(|| {
        non_null(field)?;
        non_null(out)?;
        if !(r_lattice > 0.0 && r_lattice.is_finite()) {
            set_error("r_lattice must be positive");
            return Err(SgxStatus::InvalidParameter);
        }
        // SAFETY: live handle.
        let f = unsafe { &*field };
        let s = lift(extremal_process(&f.0, r_lattice * f.0.lattice().epsilon()))?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(SgxPoints(s))) };
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `points` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgx_points_len(points: *const SgxPoints) -> usize {
    // SAFETY: live handle or null.
    unsafe { points.as_ref() }.map_or(0, |p| p.0.points.len())
}

/// Location `(x, y)` in `[0,1)^2` and centered height of point `i`.
///
/// # Safety
/// `points` must be a live handle; the output pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sgx_points_get(
    points: *const SgxPoints,
    i: usize,
    x: *mut f64,
    y: *mut f64,
    h: *mut f64,
) -> SgxStatus {
    guard(|| {
        non_null(points)?;
        non_null(x)?;
        non_null(y)?;
        non_null(h)?;
        // SAFETY: live handle.
        let p = unsafe { &*points };
        let q = p.0.points.get(i).ok_or_else(|| {
            set_error(format!("point index {i} out of range"));
            SgxStatus::InvalidParameter
        })?;
        // SAFETY: checked non-null above.
        unsafe {
            *x = q.x[0];
            *y = q.x[1];
            *h = q.h;
        }
        Ok(())
    })
}

/// Releases a point handle. Null is ignored.
///
/// # Safety
/// `points` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgx_points_free(points: *mut SgxPoints) {
    if !points.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(points) });
    }
}
