//! C ABI over `spectrans`.
//!
//! Models are opaque heap handles released with [`spectrans_model_free`].
//! Every function returns a [`SpectransStatus`]; on failure a message is kept
//! per thread and can be copied out with [`spectrans_last_error`]. Panics are
//! caught at the boundary and reported as `SPECTRANS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spectrans::gbzoracle::winding_number_nonbloch;
use spectrans::metric::{gw_thermo, n_delta_gw};
use spectrans::model::{build_hatano_nelson, build_nonreciprocal_ssh, ring_spectrum, LaurentBlochHamiltonian};
use spectrans::quasi::{gw_h, QuasiModel};
use spectrans::transport::{metric_fd, wasserstein2_points};
use spectrans::{Error, C64};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectransStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Divergent = 4,
    AtTransition = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque Bloch Hamiltonian handle.
pub struct SpectransModel {
    inner: LaurentBlochHamiltonian,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn classify(e: &Error) -> SpectransStatus {
    match e {
        Error::InvalidModel(_)
        | Error::InvalidInput(_)
        | Error::Precondition(_)
        | Error::WrongArity { .. }
        | Error::WrapAround { .. }
        | Error::SizeMismatch { .. }
        | Error::NonFinite(_) => SpectransStatus::InvalidInput,
        Error::Divergent { .. } | Error::NearExceptionalPoint { .. } => SpectransStatus::Divergent,
        Error::AtTransition { .. } => SpectransStatus::AtTransition,
        _ => SpectransStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SpectransStatus, String)>) -> SpectransStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpectransStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside spectrans".into());
            SpectransStatus::Panic
        }
    }
}

fn lift<T>(r: spectrans::Result<T>) -> Result<T, (SpectransStatus, String)> {
    r.map_err(|e| (classify(&e), e.to_string()))
}

fn null(what: &str) -> (SpectransStatus, String) {
    (SpectransStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const SpectransModel) -> Result<&'a LaurentBlochHamiltonian, (SpectransStatus, String)> {
    // SAFETY: caller passes a handle from a constructor that has not been freed
    unsafe { m.as_ref() }.map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (SpectransStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: checked non-null; caller guarantees it is valid for writes
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn emit_model(m: spectrans::Result<LaurentBlochHamiltonian>, out: *mut *mut SpectransModel) -> SpectransStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output handle"));
        }
        let inner = lift(m)?;
        // SAFETY: checked non-null above
        unsafe { out.write(Box::into_raw(Box::new(SpectransModel { inner }))) };
        Ok(())
    })
}

/// Hatano–Nelson chain; `t_l` multiplies `β`, `t_r` multiplies `1/β`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn spectrans_model_hatano_nelson(t_l: f64, t_r: f64, out: *mut *mut SpectransModel) -> SpectransStatus {
    unsafe { emit_model(build_hatano_nelson(t_l, t_r), out) }
}

/// Non-reciprocal SSH chain.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn spectrans_model_ssh(t1: f64, t2: f64, t3: f64, gamma: f64, out: *mut *mut SpectransModel) -> SpectransStatus {
    unsafe { emit_model(build_nonreciprocal_ssh(t1, t2, t3, gamma), out) }
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from a constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn spectrans_model_free(model: *mut SpectransModel) {
    if !model.is_null() {
        // SAFETY: ownership returns from the caller
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of bands of the model.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_model_bands(model: *const SpectransModel, out: *mut usize) -> SpectransStatus {
    guard(|| unsafe { write_out(out, model_ref(model)?.bands()) })
}

/// Thermodynamic metric `G_W(μ)` on `k_grid` momenta.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_gw_thermo(model: *const SpectransModel, mu: f64, k_grid: usize, out: *mut f64) -> SpectransStatus {
    guard(|| unsafe {
        let h = model_ref(model)?;
        write_out(out, lift(gw_thermo(h, mu, k_grid))?)
    })
}

/// Finite-difference metric of the `sites`-cell ring.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_metric_fd(model: *const SpectransModel, mu: f64, dmu: f64, sites: usize, out: *mut f64) -> SpectransStatus {
    guard(|| unsafe {
        let h = model_ref(model)?;
        write_out(out, lift(metric_fd(h, mu, dmu, sites))?)
    })
}

/// Finite-size excess `N (G_W^N - G_W)`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_n_delta_gw(
    model: *const SpectransModel,
    mu: f64,
    dmu: f64,
    sites: usize,
    k_grid: usize,
    out: *mut f64,
) -> SpectransStatus {
    guard(|| unsafe {
        let h = model_ref(model)?;
        write_out(out, lift(n_delta_gw(h, mu, dmu, sites, k_grid))?)
    })
}

/// Ring spectrum at gauge μ. Writes up to `capacity` values into `re`/`im` and
/// the full count into `len`; returns `BUFFER_TOO_SMALL` when it does not fit.
///
/// # Safety
/// `re` and `im` must hold `capacity` doubles; `len` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_ring_spectrum(
    model: *const SpectransModel,
    sites: usize,
    mu: f64,
    re: *mut f64,
    im: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> SpectransStatus {
    guard(|| unsafe {
        let h = model_ref(model)?;
        let values = lift(ring_spectrum(h, sites, mu))?;
        write_out(len, values.len())?;
        if values.len() > capacity {
            return Err((SpectransStatus::BufferTooSmall, format!("{} values do not fit in {capacity}", values.len())));
        }
        if re.is_null() || im.is_null() {
            return Err(null("spectrum buffer"));
        }
        for (i, z) in values.iter().enumerate() {
            re.add(i).write(z.re);
            im.add(i).write(z.im);
        }
        Ok(())
    })
}

unsafe fn cloud(re: *const f64, im: *const f64, n: usize) -> Result<Vec<C64>, (SpectransStatus, String)> {
    if re.is_null() || im.is_null() {
        return Err(null("point buffer"));
    }
    // SAFETY: caller guarantees n readable doubles in each buffer
    let (re, im) = unsafe { (std::slice::from_raw_parts(re, n), std::slice::from_raw_parts(im, n)) };
    Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
}

/// Squared 2-Wasserstein distance between two equal-size point clouds.
///
/// # Safety
/// Each of the four buffers must hold `n` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_wasserstein2(
    re_a: *const f64,
    im_a: *const f64,
    re_b: *const f64,
    im_b: *const f64,
    n: usize,
    out: *mut f64,
) -> SpectransStatus {
    guard(|| unsafe {
        let a = cloud(re_a, im_a, n)?;
        let b = cloud(re_b, im_b, n)?;
        write_out(out, lift(wasserstein2_points(&a, &b))?)
    })
}

/// Non-Bloch winding number of a chiral two-band model with circular GBZ
/// radius `radius`; `AT_TRANSITION` when a zero lies on the GBZ.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_winding_nonbloch(model: *const SpectransModel, radius: f64, out: *mut f64) -> SpectransStatus {
    guard(|| unsafe {
        let h = model_ref(model)?;
        write_out(out, lift(winding_number_nonbloch(h, radius))?.w)
    })
}

/// h-space metric of the single-harmonic quasiperiodic ring.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spectrans_quasi_gw_h(
    lambda: f64,
    omega: f64,
    phi: f64,
    g: f64,
    sites: usize,
    h: f64,
    dh: f64,
    out: *mut f64,
) -> SpectransStatus {
    guard(|| unsafe {
        let q = QuasiModel { harmonics: vec![lambda], omega, phi, h: 0.0, g, sites };
        write_out(out, lift(gw_h(&q, h, dh))?)
    })
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to `capacity`) and returns its full length in bytes without the NUL.
///
/// # Safety
/// `buf` must be valid for `capacity` bytes or null with `capacity = 0`.
#[no_mangle]
pub unsafe extern "C" fn spectrans_last_error(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            // SAFETY: n + 1 <= capacity bytes are written
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                buf.add(n).write(0);
            }
        }
        msg.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn spectrans_status_string(status: SpectransStatus) -> *const c_char {
    let s: &'static CStr = match status {
        SpectransStatus::Ok => c"ok",
        SpectransStatus::NullPointer => c"null pointer",
        SpectransStatus::InvalidInput => c"invalid input",
        SpectransStatus::Numerical => c"numerical failure",
        SpectransStatus::Divergent => c"metric diverges (exceptional point)",
        SpectransStatus::AtTransition => c"zero on the GBZ (at transition)",
        SpectransStatus::BufferTooSmall => c"buffer too small",
        SpectransStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}
