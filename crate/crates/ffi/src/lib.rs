//! C ABI over the equilibria library.
//!
//! Every entry point returns an [`EqStatus`]; on failure a message for the
//! calling thread is available from [`eq_last_error`]. Handles are opaque and
//! must be released with their `_free` function. Arrays are caller-owned and
//! passed with their length; allocations are written row-major, agents by
//! claims.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use equilibria::equilibrium::{demand_from, pareto_check, solve_pepa, PepaResult};
use equilibria::io::{load_model, LoadedModel, ModelFile};
use equilibria::risk::rho;
use equilibria::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqStatus {
    Ok = 0,
    NullPointer = 1,
    /// Index out of range, wrong array length or non-UTF-8 text.
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    /// Model or input failed validation.
    Validation = 5,
    Arbitrage = 6,
    /// A standing market or preference assumption fails.
    Assumption = 7,
    PriceOutsideRange = 8,
    DomainViolation = 9,
    NonConvergence = 10,
    /// The operation is not available for this model.
    Unsupported = 11,
    /// Internal failure; the library caught a panic.
    Panic = 12,
}

/// A loaded and validated model.
pub struct EqModel {
    inner: LoadedModel,
}

/// An equilibrium price and allocation.
pub struct EqPepa {
    inner: PepaResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> EqStatus {
    match e {
        Error::Io(_) => EqStatus::Io,
        Error::Parse { .. } => EqStatus::Parse,
        Error::InvalidProbabilities(_) | Error::Dimension(_) | Error::InvalidModel(_) | Error::Validation { .. } => {
            EqStatus::Validation
        }
        Error::ArbitrageDetected { .. } => EqStatus::Arbitrage,
        Error::AssumptionViolated { .. } | Error::EmptyIntersection | Error::InfeasiblePolytope => {
            EqStatus::Assumption
        }
        Error::PriceOutsideRange { .. } => EqStatus::PriceOutsideRange,
        Error::DomainViolation(_) => EqStatus::DomainViolation,
        Error::NonConvergence { .. } => EqStatus::NonConvergence,
        Error::PenaltyUnavailable(_) | Error::GridTooCoarse(_) | Error::MinimumOnBoundary => EqStatus::Unsupported,
    }
}

enum Failure {
    Status(EqStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Status(EqStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EqStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            EqStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Status(EqStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const EqModel) -> Result<&'a LoadedModel, Failure> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| Failure::Status(EqStatus::NullPointer, "model is null".into()))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Status(EqStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Status(EqStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn expect_len(len: usize, want: usize, what: &str) -> Result<(), Failure> {
    if len != want {
        return Err(invalid(format!("{what} has length {len}, expected {want}")));
    }
    Ok(())
}

fn store_model(out: *mut *mut EqModel, inner: LoadedModel) -> Result<(), Failure> {
    unsafe { *out = Box::into_raw(Box::new(EqModel { inner })) };
    Ok(())
}

/// Message describing the last failure on this thread; empty after a
/// success. Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn eq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn eq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a model from JSON text.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_model_load_json(json: *const c_char, out: *mut *mut EqModel) -> EqStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Status(EqStatus::NullPointer, "out is null".into()));
        }
        let model = ModelFile::parse(text(json, "json")?)?.into_model()?;
        store_model(out, model)
    })
}

/// Reads, parses and validates a model file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_model_load_file(path: *const c_char, out: *mut *mut EqModel) -> EqStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Status(EqStatus::NullPointer, "out is null".into()));
        }
        let model = load_model(Path::new(text(path, "path")?))?;
        store_model(out, model)
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eq_model_free(model: *mut EqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn eq_model_num_states(model: *const EqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.market.num_states())
}

/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn eq_model_num_assets(model: *const EqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.market.num_assets())
}

/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn eq_model_num_agents(model: *const EqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.agents.len())
}

/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn eq_model_num_claims(model: *const EqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.bundle.len())
}

/// Capital requirement of `agent` for a claim with one payoff per state.
///
/// # Safety
/// `claim` must point to `len` doubles and `out` to one.
#[no_mangle]
pub unsafe extern "C" fn eq_rho(
    model: *const EqModel,
    agent: usize,
    claim: *const f64,
    len: usize,
    out: *mut f64,
) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        let a = m
            .agents
            .get(agent)
            .ok_or_else(|| invalid(format!("agent {agent} out of range")))?;
        let x = slice(claim, len, "claim")?;
        expect_len(len, m.market.num_states(), "claim")?;
        if out.is_null() {
            return Err(Failure::Status(EqStatus::NullPointer, "out is null".into()));
        }
        *out = rho(a, &m.market, x)?.value;
        Ok(())
    })
}

/// Demand of `agent` for the model's bundle at `price`.
///
/// # Safety
/// `price` and `out` must each point to `len` doubles, one per claim.
#[no_mangle]
pub unsafe extern "C" fn eq_demand(
    model: *const EqModel,
    agent: usize,
    price: *const f64,
    len: usize,
    out: *mut f64,
) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        let a = m
            .agents
            .get(agent)
            .ok_or_else(|| invalid(format!("agent {agent} out of range")))?;
        expect_len(len, m.bundle.len(), "price")?;
        let p = slice(price, len, "price")?;
        let dst = out_slice(out, len, "out")?;
        let z = demand_from(a, &m.market, &m.bundle, p, None, &m.solver).map_err(|e| match e {
            Error::PriceOutsideRange { price, .. } => Error::PriceOutsideRange { agent, price },
            other => other,
        })?;
        dst.copy_from_slice(&z);
        Ok(())
    })
}

/// Whether the agents' optimizer measures at zero coincide.
///
/// # Safety
/// `out` must point to one `bool`.
#[no_mangle]
pub unsafe extern "C" fn eq_pareto_check(model: *const EqModel, out: *mut bool) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(Failure::Status(EqStatus::NullPointer, "out is null".into()));
        }
        *out = pareto_check(&m.agents, &m.market)?.is_pareto;
        Ok(())
    })
}

/// Solves for the equilibrium of the model's bundle.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to release
/// with [`eq_pepa_free`].
#[no_mangle]
pub unsafe extern "C" fn eq_solve_pepa(model: *const EqModel, out: *mut *mut EqPepa) -> EqStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(Failure::Status(EqStatus::NullPointer, "out is null".into()));
        }
        let r = solve_pepa(&m.agents, &m.market, &m.bundle, &m.solver)?;
        *out = Box::into_raw(Box::new(EqPepa { inner: r }));
        Ok(())
    })
}

/// Releases an equilibrium; null is ignored.
///
/// # Safety
/// `pepa` must come from [`eq_solve_pepa`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eq_pepa_free(pepa: *mut EqPepa) {
    if !pepa.is_null() {
        drop(Box::from_raw(pepa));
    }
}

/// # Safety
/// `pepa` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn eq_pepa_num_agents(pepa: *const EqPepa) -> usize {
    pepa.as_ref().map_or(0, |p| p.inner.allocation.num_agents())
}

/// # Safety
/// `pepa` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn eq_pepa_num_claims(pepa: *const EqPepa) -> usize {
    pepa.as_ref().map_or(0, |p| p.inner.price.len())
}

/// Copies the price vector, one entry per claim.
///
/// # Safety
/// `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_pepa_price(pepa: *const EqPepa, out: *mut f64, len: usize) -> EqStatus {
    guard(|| {
        let p = pepa
            .as_ref()
            .ok_or_else(|| Failure::Status(EqStatus::NullPointer, "pepa is null".into()))?;
        expect_len(len, p.inner.price.len(), "out")?;
        out_slice(out, len, "out")?.copy_from_slice(&p.inner.price);
        Ok(())
    })
}

/// Copies the allocation row-major: agent `i`, claim `k` at `i * claims + k`.
///
/// # Safety
/// `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_pepa_allocation(pepa: *const EqPepa, out: *mut f64, len: usize) -> EqStatus {
    guard(|| {
        let p = pepa
            .as_ref()
            .ok_or_else(|| Failure::Status(EqStatus::NullPointer, "pepa is null".into()))?;
        let flat: Vec<f64> = p.inner.allocation.weights.iter().flatten().copied().collect();
        expect_len(len, flat.len(), "out")?;
        out_slice(out, len, "out")?.copy_from_slice(&flat);
        Ok(())
    })
}

/// `|sum_i Z_i(p)|_inf` with demands recomputed at the price; NaN for a
/// null handle.
///
/// # Safety
/// `pepa` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn eq_pepa_clearing_residual(pepa: *const EqPepa) -> f64 {
    pepa.as_ref().map_or(f64::NAN, |p| p.inner.clearing_residual)
}

/// Largest deviation of an agent's marginal price from the equilibrium
/// price; NaN for a null handle.
///
/// # Safety
/// `pepa` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn eq_pepa_foc_residual(pepa: *const EqPepa) -> f64 {
    pepa.as_ref().map_or(f64::NAN, |p| p.inner.foc_residual)
}
