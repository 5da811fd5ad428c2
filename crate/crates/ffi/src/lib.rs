//! C interface to `borelk`.
//!
//! Every function returns a [`BkStatus`]. On failure the message is kept in a
//! thread-local slot and can be read with [`bk_last_error`]. Handles are
//! opaque and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use borelk::cli::{Pipeline, RunConfig};
use borelk::problem::{tahara_coefficients, validate_spec, ProblemSpec};
use borelk::{Complex64, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkStatus {
    Ok = 0,
    InvalidInput = 1,
    Hypothesis = 2,
    Parse = 3,
    Inadmissible = 4,
    Numerical = 5,
    Divergence = 6,
    Io = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for BkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => Self::InvalidInput,
            Error::Hypothesis(_) => Self::Hypothesis,
            Error::Parse(_) => Self::Parse,
            Error::Inadmissible(_) => Self::Inadmissible,
            Error::Numerical(_) => Self::Numerical,
            Error::Divergence(_) => Self::Divergence,
            Error::Io(_) => Self::Io,
        }
    }
}

/// A parsed problem.
pub struct BkProblem {
    spec: ProblemSpec,
}

/// A run configuration with its cached operators and solutions.
pub struct BkPipeline {
    inner: Pipeline,
}

/// Outcome of one fixed-point solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BkSolveSummary {
    pub iterations: u32,
    pub converged: bool,
    pub max_ratio: f64,
    pub norm_f: f64,
    pub residual: f64,
    /// Radius of the ball from the smallness ledger, or a negative value when the ledger failed.
    pub varpi: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn guard(f: impl FnOnce() -> Result<(), BkStatus>) -> BkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BkStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            BkStatus::Panic
        }
    }
}

fn fail(e: Error) -> BkStatus {
    let s = BkStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> BkStatus {
    set_error(format!("{what} is null"));
    BkStatus::NullPointer
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, BkStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| {
        set_error(format!("{what} is not UTF-8: {e}"));
        BkStatus::InvalidInput
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Loads a problem file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_load(path: *const c_char, out: *mut *mut BkProblem) -> BkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = path_arg(path, "path")?;
        let spec = ProblemSpec::load(Path::new(p)).map_err(fail)?;
        *out = Box::into_raw(Box::new(BkProblem { spec }));
        Ok(())
    })
}

/// Parses a problem from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_parse(text: *const c_char, out: *mut *mut BkProblem) -> BkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = path_arg(text, "text")?;
        let spec = ProblemSpec::from_toml_str(t).map_err(fail)?;
        *out = Box::into_raw(Box::new(BkProblem { spec }));
        Ok(())
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// `problem` must come from `bk_problem_load` or `bk_problem_parse` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_free(problem: *mut BkProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// The order `k` of a problem.
///
/// # Safety
/// `problem` must be a live handle and `k` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_order(problem: *const BkProblem, k: *mut f64) -> BkStatus {
    guard(|| {
        let (Some(pr), false) = (problem.as_ref(), k.is_null()) else {
            return Err(null("argument"));
        };
        *k = pr.spec.k;
        Ok(())
    })
}

/// Checks the hypotheses on `n_m` equispaced frequencies in `[-m_max, m_max]`.
/// `passed` receives whether every check holds; the names of failed checks
/// are reported through `bk_last_error`.
///
/// # Safety
/// `problem` must be a live handle and `passed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_problem_validate(
    problem: *const BkProblem,
    m_max: f64,
    n_m: u32,
    passed: *mut bool,
) -> BkStatus {
    guard(|| {
        let (Some(pr), false) = (problem.as_ref(), passed.is_null()) else {
            return Err(null("argument"));
        };
        let grid = borelk::mesh::MGrid::new(m_max, n_m as usize).map_err(fail)?;
        let rep = validate_spec(&pr.spec, &grid.nodes()).map_err(fail)?;
        *passed = rep.passed();
        if !rep.passed() {
            let names: Vec<String> = rep.failures().iter().map(|c| c.name.clone()).collect();
            set_error(names.join("; "));
        }
        Ok(())
    })
}

/// Writes the `δ-1` coefficients `A_{δ,p}` into `out`. `len` receives the
/// count; `BufferTooSmall` is returned when `cap` is short.
///
/// # Safety
/// `out` must hold `cap` doubles (it may be null when `cap` is 0) and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bk_tahara_coefficients(
    delta: u32,
    k: f64,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> BkStatus {
    guard(|| {
        if len.is_null() {
            return Err(null("len"));
        }
        if delta == 0 {
            set_error("delta must be at least 1");
            return Err(BkStatus::InvalidInput);
        }
        let c = tahara_coefficients(delta, k);
        *len = c.len();
        if c.len() > cap {
            set_error(format!("need {} slots, got {cap}", c.len()));
            return Err(BkStatus::BufferTooSmall);
        }
        if !c.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, c.len()).copy_from_slice(&c);
        }
        Ok(())
    })
}

/// Creates a pipeline from a run configuration file.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_new(config: *const c_char, out: *mut *mut BkPipeline) -> BkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = path_arg(config, "config")?;
        let cfg = RunConfig::load(Path::new(p)).map_err(fail)?;
        let inner = Pipeline::new(cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(BkPipeline { inner }));
        Ok(())
    })
}

/// Releases a pipeline; null is ignored.
///
/// # Safety
/// `pipeline` must come from `bk_pipeline_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_free(pipeline: *mut BkPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Plans the covering and writes up to `cap` directions; `len` receives their number.
///
/// # Safety
/// `pipeline` must be a live handle, `out` must hold `cap` doubles and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_directions(
    pipeline: *mut BkPipeline,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> BkStatus {
    guard(|| {
        let (Some(pl), false) = (pipeline.as_mut(), len.is_null()) else {
            return Err(null("argument"));
        };
        let dirs = pl.inner.geometry().map_err(fail)?.directions.clone();
        *len = dirs.len();
        if dirs.len() > cap {
            set_error(format!("need {} slots, got {cap}", dirs.len()));
            return Err(BkStatus::BufferTooSmall);
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, dirs.len()).copy_from_slice(&dirs);
        Ok(())
    })
}

/// Solves on the direction of sector `sector` at `ε = eps_re + i eps_im`.
///
/// # Safety
/// `pipeline` must be a live handle and `summary` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_solve(
    pipeline: *mut BkPipeline,
    sector: u32,
    eps_re: f64,
    eps_im: f64,
    summary: *mut BkSolveSummary,
) -> BkStatus {
    guard(|| {
        let (Some(pl), false) = (pipeline.as_mut(), summary.is_null()) else {
            return Err(null("argument"));
        };
        let p = sector as usize;
        pl.inner.geometry().map_err(fail)?;
        pl.inner.solve(p, Complex64::new(eps_re, eps_im)).map_err(fail)?;
        let rep = pl.inner.report.solves.iter().rev().find(|s| s.sector == p).ok_or_else(|| {
            set_error("no solve recorded");
            BkStatus::Numerical
        })?;
        *summary = BkSolveSummary {
            iterations: rep.iterations as u32,
            converged: rep.trace.converged,
            max_ratio: rep.max_ratio,
            norm_f: rep.norm_f,
            residual: rep.residual,
            varpi: rep.varpi.unwrap_or(-1.0),
        };
        Ok(())
    })
}
