//! C interface to `subring-core`.
//!
//! Every call takes an opaque [`SubringContext`] holding the node budgets
//! and the message of the last error. Results that can be large are
//! returned as NUL-terminated decimal or JSON strings owned by the caller
//! and released with [`subring_string_free`]. A context may be shared
//! between threads; the last-error slot is then whichever call failed last.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Mutex;

use subring_core::domains::{local_coefficient, mu, DiagonalProfile, DomainError};
use subring_core::lattice::{f_count, t_count, LatticeError, DEFAULT_CEILING};
use subring_core::padic::{
    solution_volume, valuation_i128, ConstraintSystem, PadicError, PrimeContext, Valuation, DEFAULT_BUDGET,
};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubringStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPrime = 3,
    BudgetExceeded = 4,
    MalformedInput = 5,
    /// An internal consistency check failed or the library panicked.
    Internal = 6,
}

/// Opaque handle; create with [`subring_context_new`].
pub struct SubringContext {
    budget: u64,
    ceiling: u64,
    last_error: Mutex<CString>,
}

impl SubringContext {
    fn fail(&self, status: SubringStatus, msg: impl Into<String>) -> SubringStatus {
        let text = CString::new(msg.into().replace('\0', " ")).expect("no interior NUL");
        *self.last_error.lock().unwrap_or_else(|e| e.into_inner()) = text;
        status
    }
}

fn status_of_padic(e: &PadicError) -> SubringStatus {
    match e {
        PadicError::NotPrime(_) => SubringStatus::NotPrime,
        PadicError::BudgetExceeded { .. } | PadicError::ZeroBudget => SubringStatus::BudgetExceeded,
        PadicError::MalformedSystem(_) | PadicError::MalformedVolume(_) => SubringStatus::MalformedInput,
        _ => SubringStatus::InvalidArgument,
    }
}

fn status_of_lattice(e: &LatticeError) -> SubringStatus {
    match e {
        LatticeError::ResourceLimit { .. } => SubringStatus::BudgetExceeded,
        LatticeError::InvalidArgument(_) => SubringStatus::InvalidArgument,
        _ => SubringStatus::Internal,
    }
}

fn status_of_domain(e: &DomainError) -> SubringStatus {
    match e {
        DomainError::Padic(p) => status_of_padic(p),
        DomainError::Lattice(l) => status_of_lattice(l),
        DomainError::NonIntegral { .. } => SubringStatus::Internal,
        _ => SubringStatus::InvalidArgument,
    }
}

/// Runs `body` against a live context, converting panics and storing the
/// error message.
fn guarded(
    ctx: *const SubringContext,
    body: impl FnOnce(&SubringContext) -> Result<(), (SubringStatus, String)>,
) -> SubringStatus {
    // SAFETY: the caller passes a pointer from `subring_context_new` or null.
    let Some(c) = (unsafe { ctx.as_ref() }) else {
        return SubringStatus::NullPointer;
    };
    match catch_unwind(AssertUnwindSafe(|| body(c))) {
        Ok(Ok(())) => SubringStatus::Ok,
        Ok(Err((status, msg))) => c.fail(status, msg),
        Err(_) => c.fail(SubringStatus::Internal, "internal panic"),
    }
}

fn prime(p: u64) -> Result<PrimeContext, (SubringStatus, String)> {
    PrimeContext::new(p).map_err(|e| (status_of_padic(&e), e.to_string()))
}

/// Hands a string to the caller through `out`.
///
/// # Safety
/// `out` must be valid for writes.
unsafe fn emit(out: *mut *mut c_char, s: String) -> Result<(), (SubringStatus, String)> {
    let c = CString::new(s).map_err(|_| (SubringStatus::Internal, "interior NUL".to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn null_out(out: *mut *mut c_char) -> Result<(), (SubringStatus, String)> {
    if out.is_null() {
        return Err((SubringStatus::NullPointer, "output pointer is null".into()));
    }
    // SAFETY: checked non-null; the caller guarantees validity.
    unsafe { *out = ptr::null_mut() };
    Ok(())
}

/// Creates a context. A zero `budget` (volume search nodes) or `ceiling`
/// (lattice search nodes) selects the library default.
#[no_mangle]
pub extern "C" fn subring_context_new(budget: u64, ceiling: u64) -> *mut SubringContext {
    Box::into_raw(Box::new(SubringContext {
        budget: if budget == 0 { DEFAULT_BUDGET } else { budget },
        ceiling: if ceiling == 0 { DEFAULT_CEILING } else { ceiling },
        last_error: Mutex::new(CString::default()),
    }))
}

/// Destroys a context; null is ignored.
///
/// # Safety
/// `ctx` must come from [`subring_context_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subring_context_free(ctx: *mut SubringContext) {
    if !ctx.is_null() {
        drop(unsafe { Box::from_raw(ctx) });
    }
}

/// Message of the most recent failure on this context, or an empty string.
/// The returned copy must be released with [`subring_string_free`].
///
/// # Safety
/// `ctx` must be null or a live context.
#[no_mangle]
pub unsafe extern "C" fn subring_last_error(ctx: *const SubringContext) -> *mut c_char {
    match unsafe { ctx.as_ref() } {
        Some(c) => c.last_error.lock().unwrap_or_else(|e| e.into_inner()).clone().into_raw(),
        None => ptr::null_mut(),
    }
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subring_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// The p-adic valuation of `x`. For `x = 0` sets `*infinite` and leaves
/// `*out` at 0.
///
/// # Safety
/// `ctx` must be a live context; `out` and `infinite` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn subring_valuation(
    ctx: *const SubringContext,
    p: u64,
    x: i64,
    out: *mut u32,
    infinite: *mut bool,
) -> SubringStatus {
    guarded(ctx, |_| {
        if out.is_null() || infinite.is_null() {
            return Err((SubringStatus::NullPointer, "output pointer is null".into()));
        }
        prime(p)?;
        let (v, inf) = match valuation_i128(x as i128, p) {
            Valuation::Finite(v) => (v, false),
            Valuation::Infinity => (0, true),
        };
        unsafe {
            *out = v;
            *infinite = inf;
        }
        Ok(())
    })
}

/// Number of multiplicative sublattices of `Z^n` of index `k`, as decimal.
///
/// # Safety
/// `ctx` must be a live context and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn subring_t_count(
    ctx: *const SubringContext,
    n: u32,
    k: u64,
    out: *mut *mut c_char,
) -> SubringStatus {
    guarded(ctx, |c| {
        null_out(out)?;
        let rec = t_count(n as usize, k, c.ceiling).map_err(|e| (status_of_lattice(&e), e.to_string()))?;
        unsafe { emit(out, rec.value.to_string()) }
    })
}

/// Number of subrings of `Z^n` of index `k`, as decimal.
///
/// # Safety
/// `ctx` must be a live context and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn subring_f_count(
    ctx: *const SubringContext,
    n: u32,
    k: u64,
    out: *mut *mut c_char,
) -> SubringStatus {
    guarded(ctx, |c| {
        null_out(out)?;
        let rec = f_count(n as usize, k, c.ceiling).map_err(|e| (status_of_lattice(&e), e.to_string()))?;
        unsafe { emit(out, rec.value.to_string()) }
    })
}

/// Domain volume for the diagonal exponents `exponents[0..len]` at `p`,
/// written as `"m/p^e"`.
///
/// # Safety
/// `ctx` must be a live context, `exponents` must point to `len` values,
/// and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn subring_mu(
    ctx: *const SubringContext,
    exponents: *const u32,
    len: usize,
    p: u64,
    out: *mut *mut c_char,
) -> SubringStatus {
    guarded(ctx, |c| {
        null_out(out)?;
        if exponents.is_null() && len > 0 {
            return Err((SubringStatus::NullPointer, "exponents pointer is null".into()));
        }
        let exps = if len == 0 {
            Vec::new()
        } else {
            unsafe { std::slice::from_raw_parts(exponents, len) }.to_vec()
        };
        let profile = DiagonalProfile::new(exps, prime(p)?);
        let v = mu(&profile, c.budget).map_err(|e| (status_of_domain(&e), e.to_string()))?;
        unsafe { emit(out, v.to_string()) }
    })
}

/// The local coefficient `a_n(k; p)` assembled from domain volumes
/// (`1 <= n <= 4`), as decimal.
///
/// # Safety
/// `ctx` must be a live context and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn subring_local_coefficient(
    ctx: *const SubringContext,
    n: u32,
    k: u32,
    p: u64,
    out: *mut *mut c_char,
) -> SubringStatus {
    guarded(ctx, |c| {
        null_out(out)?;
        if !(1..=4).contains(&n) {
            return Err((SubringStatus::InvalidArgument, format!("n must be in 1..=4, got {n}")));
        }
        let a = local_coefficient(n as usize, k, prime(p)?, c.budget)
            .map_err(|e| (status_of_domain(&e), e.to_string()))?;
        unsafe { emit(out, a.value.to_string()) }
    })
}

/// Volume of the solution set of a constraint system given as JSON
/// (`{"variables": [...], "constraints": [{"poly": "...", "threshold": t}]}`),
/// written as `"m/p^e"`.
///
/// # Safety
/// `ctx` must be a live context, `system_json` a NUL-terminated string and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn subring_solution_volume_json(
    ctx: *const SubringContext,
    system_json: *const c_char,
    p: u64,
    out: *mut *mut c_char,
) -> SubringStatus {
    guarded(ctx, |c| {
        null_out(out)?;
        if system_json.is_null() {
            return Err((SubringStatus::NullPointer, "system pointer is null".into()));
        }
        let text = unsafe { CStr::from_ptr(system_json) }
            .to_str()
            .map_err(|_| (SubringStatus::MalformedInput, "system is not UTF-8".to_string()))?;
        let sys = ConstraintSystem::from_json(text).map_err(|e| (status_of_padic(&e), e.to_string()))?;
        let v = solution_volume(&sys, prime(p)?, c.budget).map_err(|e| (status_of_padic(&e), e.to_string()))?;
        unsafe { emit(out, v.to_string()) }
    })
}
