//! C ABI over the `miglmm` library.
//!
//! Every function returns a [`MiglmmStatus`]; results go through out-pointers.
//! On failure a message is kept per thread and read with
//! [`miglmm_last_error_message`]. Handles are opaque and released by their
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use miglmm::adjust::adjust;
use miglmm::error::Error;
use miglmm::law::ScalarLaw;
use miglmm::links::LinkFunction;
use miglmm::lni;
use miglmm::model::{ModelConfig, Table};
use miglmm::quadrature::GaussHermiteRule;
use miglmm::sampler::{run_chain, BetaProposal, ChainOutput, McmcConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiglmmStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Domain = 3,
    Unsupported = 4,
    Convergence = 5,
    Numeric = 6,
    Config = 7,
    Data = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiglmmLink {
    Identity = 0,
    Log = 1,
    Probit = 2,
    Logit = 3,
    Cloglog = 4,
    Sqrt = 5,
    Reciprocal = 6,
}

impl From<MiglmmLink> for LinkFunction {
    fn from(l: MiglmmLink) -> Self {
        match l {
            MiglmmLink::Identity => LinkFunction::Identity,
            MiglmmLink::Log => LinkFunction::Log,
            MiglmmLink::Probit => LinkFunction::Probit,
            MiglmmLink::Logit => LinkFunction::Logit,
            MiglmmLink::Cloglog => LinkFunction::CLogLog,
            MiglmmLink::Sqrt => LinkFunction::Sqrt,
            MiglmmLink::Reciprocal => LinkFunction::Reciprocal,
        }
    }
}

/// Parameter blocks for acceptance queries.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiglmmBlock {
    Beta = 0,
    Alpha = 1,
    Effects = 2,
}

/// Gauss-Hermite rule for the weight `exp(-x^2)`.
pub struct MiglmmRule {
    rule: GaussHermiteRule,
}

/// One fitted chain with its column names.
pub struct MiglmmFit {
    chain: ChainOutput,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> MiglmmStatus {
    match e {
        Error::InvalidArgument(_) => MiglmmStatus::InvalidArgument,
        Error::LinkDomain { .. } | Error::ModelUndefined { .. } => MiglmmStatus::Domain,
        Error::Unsupported(_) => MiglmmStatus::Unsupported,
        Error::Convergence(_) => MiglmmStatus::Convergence,
        Error::Numeric(_) | Error::Degenerate(_) => MiglmmStatus::Numeric,
        Error::Config(_) => MiglmmStatus::Config,
        Error::Data { .. } => MiglmmStatus::Data,
        Error::Io(_) => MiglmmStatus::Io,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (MiglmmStatus, String)>) -> MiglmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MiglmmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MiglmmStatus::Panic
        }
    }
}

fn lib<T>(r: miglmm::error::Result<T>) -> Result<T, (MiglmmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MiglmmStatus, String) {
    (MiglmmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), (MiglmmStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MiglmmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MiglmmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn miglmm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn miglmm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Inverse link `h(eta)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_link_inverse(link: MiglmmLink, eta: f64, out: *mut f64) -> MiglmmStatus {
    guard(|| {
        let v = lib(LinkFunction::from(link).inverse(eta))?;
        write_out(out, v)
    })
}

/// Logistic-normal integral `E[1 / (1 + e^W)]`, `W ~ N(mu, sigma2)`, by the hybrid method.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_phi(mu: f64, sigma2: f64, out: *mut f64) -> MiglmmStatus {
    guard(|| {
        if !mu.is_finite() || !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err((MiglmmStatus::InvalidArgument, "need finite mu and sigma2 >= 0".into()));
        }
        write_out(out, lni::phi_hybrid(mu, sigma2))
    })
}

/// Adjustment for a normal random effect of variance `tau2`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_adjust(link: MiglmmLink, kappa: f64, tau2: f64, out: *mut f64) -> MiglmmStatus {
    guard(|| {
        let a = lib(adjust(link.into(), kappa, &ScalarLaw::normal(tau2)))?;
        write_out(out, a.value)
    })
}

/// Builds a Gauss-Hermite rule of the given order.
///
/// # Safety
/// `out` must be valid for writes. Release the handle with [`miglmm_rule_free`].
#[no_mangle]
pub unsafe extern "C" fn miglmm_rule_new(order: usize, out: *mut *mut MiglmmRule) -> MiglmmStatus {
    guard(|| {
        let rule = lib(GaussHermiteRule::new(order))?;
        write_out(out, Box::into_raw(Box::new(MiglmmRule { rule })))
    })
}

/// # Safety
/// `rule` must come from [`miglmm_rule_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn miglmm_rule_free(rule: *mut MiglmmRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// # Safety
/// `rule` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn miglmm_rule_order(rule: *const MiglmmRule) -> usize {
    rule.as_ref().map_or(0, |r| r.rule.order())
}

unsafe fn copy_into(src: &[f64], dst: *mut f64, len: usize) -> Result<(), (MiglmmStatus, String)> {
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err((MiglmmStatus::InvalidArgument, format!("buffer holds {len}, need {}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copies the nodes into `out`, which holds `len >= order` values.
///
/// # Safety
/// `rule` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_rule_nodes(rule: *const MiglmmRule, out: *mut f64, len: usize) -> MiglmmStatus {
    guard(|| copy_into(rule.as_ref().ok_or_else(|| null("rule"))?.rule.nodes(), out, len))
}

/// Copies the weights into `out`, which holds `len >= order` values.
///
/// # Safety
/// `rule` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_rule_weights(rule: *const MiglmmRule, out: *mut f64, len: usize) -> MiglmmStatus {
    guard(|| copy_into(rule.as_ref().ok_or_else(|| null("rule"))?.rule.weights(), out, len))
}

/// Logistic-normal integral by this rule.
///
/// # Safety
/// `rule` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_rule_phi(rule: *const MiglmmRule, mu: f64, sigma2: f64, out: *mut f64) -> MiglmmStatus {
    guard(|| {
        let r = rule.as_ref().ok_or_else(|| null("rule"))?;
        write_out(out, lni::phi_gh(mu, sigma2, &r.rule))
    })
}

/// Fits a model given as TOML text to CSV text. `steps`, `burn_in` and
/// `thin` follow the sampler's meaning; nonzero `consistent` moves random
/// effects with each fixed-effect proposal, nonzero `correlated` couples
/// the fixed-effect proposal.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be valid for writes. Release
/// the handle with [`miglmm_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn miglmm_fit_new(
    model_toml: *const c_char,
    data_csv: *const c_char,
    steps: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    consistent: i32,
    correlated: i32,
    out: *mut *mut MiglmmFit,
) -> MiglmmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let config = lib(ModelConfig::from_toml_str(read_str(model_toml, "model")?))?;
        let table = lib(Table::from_reader(read_str(data_csv, "data")?.as_bytes()))?;
        let (spec, data) = lib(config.build(&table))?;
        let mut mc = McmcConfig::new(steps, burn_in, thin, seed);
        mc.consistent_proposals = consistent != 0;
        if correlated != 0 {
            mc.beta_proposal = BetaProposal::Correlated;
        }
        let chain = lib(run_chain(&spec, &data, &mc))?;
        let names = chain
            .column_names()
            .into_iter()
            .map(|n| CString::new(n).unwrap_or_default())
            .collect();
        write_out(out, Box::into_raw(Box::new(MiglmmFit { chain, names })))
    })
}

/// # Safety
/// `fit` must come from [`miglmm_fit_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn miglmm_fit_free(fit: *mut MiglmmFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of retained draws; 0 for null.
///
/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn miglmm_fit_draw_count(fit: *const MiglmmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.chain.draws.len())
}

/// Number of reported parameters (fixed effects, then random-effect SDs).
///
/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn miglmm_fit_param_count(fit: *const MiglmmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.names.len())
}

/// Name of parameter `j`, owned by the handle; null when out of range.
///
/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn miglmm_fit_param_name(fit: *const MiglmmFit, j: usize) -> *const c_char {
    fit.as_ref()
        .and_then(|f| f.names.get(j))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Copies the draws of parameter `j` into `out`, which holds `len` values.
///
/// # Safety
/// `fit` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_fit_draws(fit: *const MiglmmFit, j: usize, out: *mut f64, len: usize) -> MiglmmStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let name = f
            .names
            .get(j)
            .ok_or_else(|| (MiglmmStatus::InvalidArgument, format!("parameter index {j} out of range")))?;
        let series = f.chain.series(name.to_str().unwrap_or_default()).unwrap_or_default();
        copy_into(&series, out, len)
    })
}

/// Post-burn-in acceptance rate of one block.
///
/// # Safety
/// `fit` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn miglmm_fit_acceptance(fit: *const MiglmmFit, block: MiglmmBlock, out: *mut f64) -> MiglmmStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let stats = match block {
            MiglmmBlock::Beta => f.chain.beta,
            MiglmmBlock::Alpha => f.chain.alpha,
            MiglmmBlock::Effects => f.chain.u,
        };
        write_out(out, stats.rate())
    })
}
