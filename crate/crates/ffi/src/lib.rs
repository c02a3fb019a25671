//! C interface to `homog-core`.
//!
//! Every function returns a [`HomogStatus`]; on failure the message is kept
//! per thread and can be read with [`homog_last_error`]. Objects are opaque
//! handles released with their `_free` function. Strings returned by the
//! library are released with [`homog_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use homog_core::cell::{CellData, CellOptions};
use homog_core::coeff::{preset, CellGrid, CoefficientSet};
use homog_core::harness::{fit_rate, run_plan, verify_all, Config, Model};
use homog_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomogStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Ellipticity = 4,
    NonConvergence = 5,
    Underresolved = 6,
    Resource = 7,
    Io = 8,
    /// The suite or sweep ran but reported failures.
    CheckFailed = 9,
    Internal = 10,
}

/// Which homogenized tensor [`homog_cell_tensor`] copies out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomogTensor {
    /// `a_ij^{ab}` at `((i * d + j) * m + a) * m + b`.
    A = 0,
    /// `V_i^{ab}` at `(i * m + a) * m + b`.
    V = 1,
    B = 2,
    /// `c^{ab}` at `a * m + b`.
    C = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomogModel {
    Power = 0,
    PowerLog = 1,
}

/// Opaque coefficient set.
pub struct HomogCoefficients(CoefficientSet);

/// Opaque cell data: correctors, flux correctors and homogenized tensors.
pub struct HomogCell(CellData);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &Error) -> HomogStatus {
    match e {
        Error::Syntax { .. } | Error::UnknownIdentifier { .. } | Error::Arity { .. } | Error::Config(_) => HomogStatus::Config,
        Error::Ellipticity { .. } | Error::Boundedness { .. } | Error::NonFinite { .. } => HomogStatus::Ellipticity,
        Error::NonConvergence { .. } | Error::Indefinite(_) => HomogStatus::NonConvergence,
        Error::Underresolved { .. } => HomogStatus::Underresolved,
        Error::Resource(_) => HomogStatus::Resource,
        Error::Io(_) | Error::Json(_) => HomogStatus::Io,
        _ => HomogStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<HomogStatus, Error>) -> HomogStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            HomogStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error::Invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Invalid(format!("{what} is not UTF-8")))
}

fn null(what: &str) -> HomogStatus {
    set_error(format!("{what} is null"));
    HomogStatus::NullPointer
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length, 0 if none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn homog_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Builds a named preset (`laminate`, `smooth-trig`, ...).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn homog_coefficients_preset(name: *const c_char, seed: u64, out: *mut *mut HomogCoefficients) -> HomogStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let c = preset(str_arg(name, "name")?, seed)?;
        *out = Box::into_raw(Box::new(HomogCoefficients(c)));
        Ok(HomogStatus::Ok)
    })
}

/// Builds the coefficients described by a TOML configuration text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn homog_coefficients_from_config(toml: *const c_char, out: *mut *mut HomogCoefficients) -> HomogStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let c = Config::from_toml(str_arg(toml, "toml")?)?.coefficients()?;
        *out = Box::into_raw(Box::new(HomogCoefficients(c)));
        Ok(HomogStatus::Ok)
    })
}

/// Observed ellipticity constant and largest lower-order coefficient
/// (`V`, `B`, `c`) on an `n^d` grid.
///
/// # Safety
/// `coeffs` must come from this library; `mu` and `kappa` must be valid.
#[no_mangle]
pub unsafe extern "C" fn homog_coefficients_validate(
    coeffs: *const HomogCoefficients,
    n: usize,
    mu: *mut f64,
    kappa: *mut f64,
) -> HomogStatus {
    if coeffs.is_null() || mu.is_null() || kappa.is_null() {
        return null("argument");
    }
    guard(|| {
        let c = &(*coeffs).0;
        let r = c.validate(CellGrid::new(n, c.dim())?, false)?;
        *mu = r.mu_observed;
        *kappa = r.kappa_observed;
        Ok(HomogStatus::Ok)
    })
}

/// # Safety
/// `coeffs` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn homog_coefficients_free(coeffs: *mut HomogCoefficients) {
    if !coeffs.is_null() {
        drop(Box::from_raw(coeffs));
    }
}

/// Solves every cell problem on an `n^d` grid.
///
/// # Safety
/// `coeffs` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn homog_cell_compute(coeffs: *const HomogCoefficients, n: usize, out: *mut *mut HomogCell) -> HomogStatus {
    if coeffs.is_null() || out.is_null() {
        return null("argument");
    }
    guard(|| {
        let c = &(*coeffs).0;
        let cell = CellData::compute(c, CellGrid::new(n, c.dim())?, CellOptions::default())?;
        *out = Box::into_raw(Box::new(HomogCell(cell)));
        Ok(HomogStatus::Ok)
    })
}

/// Dimension and system size of the cell data.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn homog_cell_layout(cell: *const HomogCell, d: *mut usize, m: *mut usize) -> HomogStatus {
    if cell.is_null() || d.is_null() || m.is_null() {
        return null("argument");
    }
    *d = (*cell).0.layout.dim;
    *m = (*cell).0.layout.m;
    HomogStatus::Ok
}

/// Copies a homogenized tensor into `buf`. `needed` receives the entry
/// count; a short `buf` copies nothing and returns `INVALID_ARGUMENT`.
///
/// # Safety
/// `buf` must point to `len` doubles (or be null with `len = 0`); `needed`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn homog_cell_tensor(
    cell: *const HomogCell,
    which: HomogTensor,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> HomogStatus {
    if cell.is_null() || needed.is_null() {
        return null("argument");
    }
    let h = &(*cell).0.hats;
    let src = match which {
        HomogTensor::A => &h.a,
        HomogTensor::V => &h.v,
        HomogTensor::B => &h.b,
        HomogTensor::C => &h.c,
    };
    *needed = src.len();
    if len < src.len() || buf.is_null() {
        set_error(format!("buffer holds {len} values, {} needed", src.len()));
        return HomogStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    HomogStatus::Ok
}

/// # Safety
/// `cell` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn homog_cell_free(cell: *mut HomogCell) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

/// Least-squares fit of `e = C eps^s` (`POWER`) or `e = C eps ln(scale/eps)`
/// (`POWER_LOG`) over `n` rows.
///
/// # Safety
/// `eps` and `err` must point to `n` doubles; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn homog_fit_rate(
    eps: *const f64,
    err: *const f64,
    n: usize,
    model: HomogModel,
    scale: f64,
    slope: *mut f64,
    coefficient: *mut f64,
    residual: *mut f64,
) -> HomogStatus {
    if eps.is_null() || err.is_null() || slope.is_null() || coefficient.is_null() || residual.is_null() {
        return null("argument");
    }
    guard(|| {
        let rows: Vec<(f64, f64)> = (0..n).map(|k| (*eps.add(k), *err.add(k))).collect();
        let m = match model {
            HomogModel::Power => Model::Power,
            HomogModel::PowerLog => Model::PowerLog { scale },
        };
        let f = fit_rate(&rows, m)?;
        *slope = f.slope;
        *coefficient = f.coefficient;
        *residual = f.residual;
        Ok(HomogStatus::Ok)
    })
}

/// Runs the verification suite for a TOML configuration (empty text for the
/// defaults). `json` receives the report; the status is `CHECK_FAILED` when
/// any stage failed.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn homog_verify(toml: *const c_char, json: *mut *mut c_char) -> HomogStatus {
    if json.is_null() {
        return null("json");
    }
    guard(|| {
        let cfg = Config::from_toml(str_arg(toml, "toml")?)?;
        let report = verify_all(&cfg);
        *json = into_c_string(report.to_json()?);
        if report.pass {
            Ok(HomogStatus::Ok)
        } else {
            set_error("verification failed");
            Ok(HomogStatus::CheckFailed)
        }
    })
}

/// Runs the eps sweep of a TOML configuration and writes `rates.csv`,
/// `rates.dat` and `report.json` into `out_dir`. `json` (optional) receives
/// the report.
///
/// # Safety
/// `toml` and `out_dir` must be NUL-terminated strings; `json` may be null.
#[no_mangle]
pub unsafe extern "C" fn homog_run_plan(toml: *const c_char, out_dir: *const c_char, json: *mut *mut c_char) -> HomogStatus {
    guard(|| {
        let cfg = Config::from_toml(str_arg(toml, "toml")?)?;
        let dir = str_arg(out_dir, "out_dir")?;
        let report = run_plan(&cfg)?;
        report.write(std::path::Path::new(dir))?;
        if !json.is_null() {
            *json = into_c_string(report.to_json()?);
        }
        if report.failures.is_empty() {
            Ok(HomogStatus::Ok)
        } else {
            set_error(format!("{} row(s) failed", report.failures.len()));
            Ok(HomogStatus::CheckFailed)
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homog_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
