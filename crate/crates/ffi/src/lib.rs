//! C ABI for `rotwalk`.
//!
//! Conventions:
//! - every fallible function returns an [`RwStatus`] and writes its result
//!   through an out-pointer; `RW_STATUS_OK` is zero;
//! - objects are opaque handles created by `rw_law_parse`, `rw_grid_eval`
//!   and `rw_tree_build`, released with the matching `rw_*_free` (which
//!   accepts NULL);
//! - on failure, `rw_last_error_message` describes the error of the most
//!   recent failing call on the current thread.
//!
//! Panics never cross the boundary: they are caught and reported as
//! `RW_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use num_complex::Complex64;
use rotwalk::increments::{sample_increments, IncrementLaw, SeedSpec};
use rotwalk::moddev::mc_tail;
use rotwalk::oracle::{dirichlet_kernel, joint_tail, joint_tail_envelope, single_tail, QuadratureSpec};
use rotwalk::tree::{build_tree, count_circled, subtree_sum, CircledTree, TreeConfig};
use rotwalk::walk::{eval_grid_fft, eval_point, threshold, DyadicGrid};
use rotwalk::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    Regime = 4,
    Range = 5,
    DegenerateCovariance = 6,
    ScheduleRejected = 7,
    UndefinedSlope = 8,
    Io = 9,
    Panic = 10,
}

impl From<&Error> for RwStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parameter(_) | Error::Config(_) => RwStatus::InvalidParameter,
            Error::Domain(_) => RwStatus::Domain,
            Error::Regime(_) => RwStatus::Regime,
            Error::Range(_) => RwStatus::Range,
            Error::DegenerateCovariance(_) => RwStatus::DegenerateCovariance,
            Error::ScheduleRejected { .. } => RwStatus::ScheduleRejected,
            Error::UndefinedSlope(_) => RwStatus::UndefinedSlope,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => RwStatus::Io,
        }
    }
}

/// A complex number laid out as two doubles.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RwComplex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for RwComplex {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<RwComplex> for Complex64 {
    fn from(z: RwComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

/// Monte Carlo estimate with a 95% normal interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RwTailEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub replicas: u64,
}

/// Opaque increment law.
pub struct RwLaw {
    law: IncrementLaw,
}

/// Opaque dyadic grid of walk values.
pub struct RwGrid {
    grid: DyadicGrid,
}

/// Opaque circled tree.
pub struct RwTree {
    tree: CircledTree,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), RwStatus>>(f: F) -> RwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RwStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RwStatus::Panic
        }
    }
}

fn check<T>(r: rotwalk::Result<T>) -> Result<T, RwStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        RwStatus::from(&e)
    })
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), RwStatus> {
    if p.is_null() {
        set_error(format!("{what} is NULL"));
        return Err(RwStatus::NullPointer);
    }
    Ok(())
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), RwStatus> {
    non_null(out, "output pointer")?;
    out.write(v);
    Ok(())
}

/// Message for the last failing call on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses `gaussian:<rho2>`, `circle` or `radial-exp:<rate>`.
#[no_mangle]
pub unsafe extern "C" fn rw_law_parse(spec: *const c_char, out: *mut *mut RwLaw) -> RwStatus {
    guard(|| {
        non_null(spec, "spec")?;
        non_null(out, "output pointer")?;
        let s = CStr::from_ptr(spec).to_str().map_err(|_| {
            set_error("spec is not UTF-8".into());
            RwStatus::InvalidParameter
        })?;
        let law = check(s.parse::<IncrementLaw>())?;
        out.write(Box::into_raw(Box::new(RwLaw { law })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_law_free(law: *mut RwLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// `sqrt(E Re(U)^2)`.
#[no_mangle]
pub unsafe extern "C" fn rw_law_sigma(law: *const RwLaw, out: *mut f64) -> RwStatus {
    guard(|| {
        non_null(law, "law")?;
        write(out, (*law).law.sigma())
    })
}

/// Writes the first `n` increments of stream `(master_seed, replica)`.
#[no_mangle]
pub unsafe extern "C" fn rw_sample_increments(
    law: *const RwLaw,
    n: usize,
    master_seed: u64,
    replica: u64,
    out: *mut RwComplex,
) -> RwStatus {
    guard(|| {
        non_null(law, "law")?;
        non_null(out, "output buffer")?;
        let v = check(sample_increments(&(*law).law, n, SeedSpec::new(master_seed, replica)))?;
        let dst = slice::from_raw_parts_mut(out, n);
        for (d, z) in dst.iter_mut().zip(v) {
            *d = z.into();
        }
        Ok(())
    })
}

unsafe fn increments(inc: *const RwComplex, n: usize) -> Result<Vec<Complex64>, RwStatus> {
    if n == 0 {
        return Ok(Vec::new());
    }
    non_null(inc, "increments")?;
    Ok(slice::from_raw_parts(inc, n).iter().map(|&z| z.into()).collect())
}

/// `S_n(theta)` for the `n` given increments.
#[no_mangle]
pub unsafe extern "C" fn rw_eval_point(inc: *const RwComplex, n: usize, theta: f64, out: *mut RwComplex) -> RwStatus {
    guard(|| {
        let v = increments(inc, n)?;
        write(out, eval_point(&v, theta).into())
    })
}

/// `S_n(i / 2^depth)` for all `i`, by folding and one FFT.
#[no_mangle]
pub unsafe extern "C" fn rw_grid_eval(inc: *const RwComplex, n: usize, depth: u32, out: *mut *mut RwGrid) -> RwStatus {
    guard(|| {
        non_null(out, "output pointer")?;
        let v = increments(inc, n)?;
        let grid = check(eval_grid_fft(&v, depth))?;
        out.write(Box::into_raw(Box::new(RwGrid { grid })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_grid_len(grid: *const RwGrid, out: *mut usize) -> RwStatus {
    guard(|| {
        non_null(grid, "grid")?;
        write(out, (*grid).grid.len())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_grid_value(grid: *const RwGrid, i: usize, out: *mut RwComplex) -> RwStatus {
    guard(|| {
        non_null(grid, "grid")?;
        let g = &(*grid).grid;
        let z = g.values.get(i).copied().ok_or_else(|| {
            set_error(format!("grid index {i} out of range (len {})", g.len()));
            RwStatus::Range
        })?;
        write(out, z.into())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_grid_free(grid: *mut RwGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// `phi(n) = sqrt(2 alpha n ln n)`.
#[no_mangle]
pub unsafe extern "C" fn rw_threshold(alpha: f64, n: u64, out: *mut f64) -> RwStatus {
    guard(|| write(out, check(threshold(alpha, n))?))
}

/// `D_n(theta) = (1/n) sum_{j=1}^n e^{2 pi i j theta}`.
#[no_mangle]
pub unsafe extern "C" fn rw_dirichlet_kernel(n: u64, theta: f64, out: *mut RwComplex) -> RwStatus {
    guard(|| write(out, check(dirichlet_kernel(n, theta))?.into()))
}

/// Gaussian `P(|B_n| > phi(n)) = n^{-alpha}`.
#[no_mangle]
pub unsafe extern "C" fn rw_single_tail(n: u64, alpha: f64, out: *mut f64) -> RwStatus {
    guard(|| write(out, check(single_tail(n, alpha))?))
}

/// Gaussian joint tail at angles 0 and `theta`, with its error estimate.
#[no_mangle]
pub unsafe extern "C" fn rw_joint_tail(n: u64, theta: f64, alpha: f64, value: *mut f64, error: *mut f64) -> RwStatus {
    guard(|| {
        non_null(error, "error pointer")?;
        let j = check(joint_tail(n, theta, alpha, QuadratureSpec::default()))?;
        write(value, j.value)?;
        write(error, j.error)
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_joint_tail_envelope(
    n: u64,
    theta: f64,
    alpha: f64,
    lo: *mut f64,
    hi: *mut f64,
) -> RwStatus {
    guard(|| {
        non_null(hi, "upper pointer")?;
        let (l, h) = check(joint_tail_envelope(n, theta, alpha))?;
        write(lo, l)?;
        write(hi, h)
    })
}

/// Monte Carlo `P(|S_n| > sigma phi(n))`.
#[no_mangle]
pub unsafe extern "C" fn rw_mc_tail(
    law: *const RwLaw,
    n: usize,
    alpha: f64,
    replicas: u64,
    seed: u64,
    out: *mut RwTailEstimate,
) -> RwStatus {
    guard(|| {
        non_null(law, "law")?;
        let e = check(mc_tail(&(*law).law, n, alpha, replicas, seed))?;
        write(
            out,
            RwTailEstimate {
                p_hat: e.p_hat,
                stderr: e.stderr,
                ci_lo: e.ci95.0,
                ci_hi: e.ci95.1,
                replicas: e.replicas,
            },
        )
    })
}

/// Indicator tree with levels `0..=depth`.
#[no_mangle]
pub unsafe extern "C" fn rw_tree_build(
    law: *const RwLaw,
    q: f64,
    depth: u32,
    alpha: f64,
    master_seed: u64,
    replica: u64,
    out: *mut *mut RwTree,
) -> RwStatus {
    guard(|| {
        non_null(law, "law")?;
        non_null(out, "output pointer")?;
        let cfg = check(TreeConfig::indicator(q, depth, alpha))?;
        let tree = check(build_tree(&(*law).law, cfg, SeedSpec::new(master_seed, replica)))?;
        out.write(Box::into_raw(Box::new(RwTree { tree })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_tree_depth(tree: *const RwTree, out: *mut u32) -> RwStatus {
    guard(|| {
        non_null(tree, "tree")?;
        write(out, (*tree).tree.depth())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_tree_count_circled(tree: *const RwTree, level: u32, out: *mut u64) -> RwStatus {
    guard(|| {
        non_null(tree, "tree")?;
        let t = &(*tree).tree;
        if level > t.depth() {
            set_error(format!("level {level} beyond tree depth {}", t.depth()));
            return Err(RwStatus::Range);
        }
        write(out, count_circled(t, level))
    })
}

/// Sum of marks over the level-`n` descendants of vertex `(level, index)`.
#[no_mangle]
pub unsafe extern "C" fn rw_tree_subtree_sum(
    tree: *const RwTree,
    level: u32,
    index: usize,
    n: u32,
    out: *mut f64,
) -> RwStatus {
    guard(|| {
        non_null(tree, "tree")?;
        write(out, check(subtree_sum(&(*tree).tree, level, index, n))?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn rw_tree_free(tree: *mut RwTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
