//! C interface.
//!
//! Beliefs cross the boundary as opaque `BayesauthBelief` handles owned by
//! the caller and released with [`bayesauth_belief_free`]. Every fallible
//! function returns a [`BayesauthStatus`]; on failure the message is kept per
//! thread and can be copied out with [`bayesauth_last_error_message`].
//! Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bayesauth::empirical::{fit_dirichlet, PopulationData};
use bayesauth::rules::{biased_decide, biased_decide_record, lemma1_gap, oracle_decide};
use bayesauth::{CountVector, DecisionRule, DirichletBelief, Error, MultinomialModel, PriorOdds, Verdict};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayesauthStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Impossible observation, non-convergence or a special-function domain error.
    Numeric = 4,
    InsufficientData = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// Decision rules available through the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayesauthRule {
    World = 0,
    BiasAllButLast = 1,
    FullBias = 2,
    /// Uses the `weight` argument, in (0, 1].
    PartialBias = 3,
    FirstHalfBias = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesauthVerdict {
    pub p_user: f64,
    pub log_odds: f64,
    pub decided_user: bool,
}

/// Opaque Dirichlet belief.
pub struct BayesauthBelief {
    inner: DirichletBelief,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into_bytes());
}

fn status_of(err: &Error) -> BayesauthStatus {
    match err {
        Error::DimensionMismatch { .. } => BayesauthStatus::DimensionMismatch,
        Error::Domain(_) | Error::ImpossibleObservation | Error::NotConverged { .. } => BayesauthStatus::Numeric,
        Error::AllUsersEmpty | Error::InsufficientData(_) => BayesauthStatus::InsufficientData,
        _ => BayesauthStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `body` behind a panic guard and maps failures to status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> BayesauthStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BayesauthStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BayesauthStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal error".into());
            BayesauthStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn handle<'a>(ptr: *const BayesauthBelief, what: &'static str) -> Result<&'a DirichletBelief, Failure> {
    ptr.as_ref().map(|b| &b.inner).ok_or(Failure::Null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn into_handle(inner: DirichletBelief) -> *mut BayesauthBelief {
    Box::into_raw(Box::new(BayesauthBelief { inner }))
}

fn rule_of(rule: BayesauthRule, weight: f64) -> Result<DecisionRule, Failure> {
    Ok(match rule {
        BayesauthRule::World => DecisionRule::World,
        BayesauthRule::BiasAllButLast => DecisionRule::BiasAllButLast,
        BayesauthRule::FullBias => DecisionRule::FullBias,
        BayesauthRule::PartialBias => DecisionRule::partial(weight)?,
        BayesauthRule::FirstHalfBias => DecisionRule::FirstHalfBias,
    })
}

fn verdict(v: Verdict) -> BayesauthVerdict {
    BayesauthVerdict {
        p_user: v.p_user,
        log_odds: v.log_odds,
        decided_user: v.decided_user,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bayesauth_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version has no interior NUL"),
    };
    VERSION.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated when `len > 0`). Returns the full message length without
/// the terminator; 0 when there is no message.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a belief from `len` positive parameters.
///
/// # Safety
/// `phi` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_belief_new(
    phi: *const f64,
    len: usize,
    out: *mut *mut BayesauthBelief,
) -> BayesauthStatus {
    guard(|| {
        let phi = slice(phi, len, "phi")?;
        let b = DirichletBelief::new(phi.to_vec())?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        write(out, into_handle(b), "out")
    })
}

/// Releases a belief; null is ignored.
///
/// # Safety
/// `belief` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_belief_free(belief: *mut BayesauthBelief) {
    if !belief.is_null() {
        drop(Box::from_raw(belief));
    }
}

/// Number of parameters; 0 for null.
///
/// # Safety
/// `belief` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_belief_degree(belief: *const BayesauthBelief) -> usize {
    belief.as_ref().map_or(0, |b| b.inner.degree())
}

/// Copies the parameters into `out`, which must hold exactly the degree.
///
/// # Safety
/// `out` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_belief_phi(
    belief: *const BayesauthBelief,
    out: *mut f64,
    len: usize,
) -> BayesauthStatus {
    guard(|| {
        let b = handle(belief, "belief")?;
        if len != b.degree() {
            return Err(Error::DimensionMismatch {
                expected: b.degree(),
                actual: len,
            }
            .into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        std::ptr::copy_nonoverlapping(b.phi().as_ptr(), out, len);
        Ok(())
    })
}

/// Conjugate update on a count vector; writes a new handle.
///
/// # Safety
/// `counts` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_belief_update(
    belief: *const BayesauthBelief,
    counts: *const f64,
    len: usize,
    out: *mut *mut BayesauthBelief,
) -> BayesauthStatus {
    guard(|| {
        let b = handle(belief, "belief")?;
        let obs = CountVector::new(slice(counts, len, "counts")?.to_vec())?;
        let updated = b.posterior_update(&obs)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        write(out, into_handle(updated), "out")
    })
}

/// Log marginal likelihood of a count vector (multinomial coefficient excluded).
///
/// # Safety
/// `counts` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_belief_log_marginal(
    belief: *const BayesauthBelief,
    counts: *const f64,
    len: usize,
    out: *mut f64,
) -> BayesauthStatus {
    guard(|| {
        let b = handle(belief, "belief")?;
        let obs = CountVector::new(slice(counts, len, "counts")?.to_vec())?;
        write(out, b.log_marginal(&obs)?, "out")
    })
}

/// Gap between the marginal of `counts` under the belief conditioned on
/// `counts` and under the belief itself, in log space.
///
/// # Safety
/// `counts` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_lemma_gap(
    belief: *const BayesauthBelief,
    counts: *const f64,
    len: usize,
    out: *mut f64,
) -> BayesauthStatus {
    guard(|| {
        let b = handle(belief, "belief")?;
        let obs = CountVector::new(slice(counts, len, "counts")?.to_vec())?;
        write(out, lemma1_gap(b, &obs)?, "out")
    })
}

/// Fits a population prior from `users × degree` counts in row-major order.
/// `iterations` and `converged` may be null.
///
/// # Safety
/// `counts` must point to `users * degree` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_fit_dirichlet(
    counts: *const f64,
    users: usize,
    degree: usize,
    tolerance: f64,
    max_iterations: usize,
    out: *mut *mut BayesauthBelief,
    iterations: *mut usize,
    converged: *mut bool,
) -> BayesauthStatus {
    guard(|| {
        let total = users
            .checked_mul(degree)
            .ok_or_else(|| Error::InvalidValue("users × degree overflows".into()))?;
        if degree == 0 {
            return Err(Error::InvalidValue("degree must be positive".into()).into());
        }
        let flat = slice(counts, total, "counts")?;
        let rows = flat
            .chunks(degree)
            .map(|row| CountVector::new(row.to_vec()))
            .collect::<bayesauth::Result<Vec<_>>>()?;
        let report = fit_dirichlet(&PopulationData::new(rows)?, tolerance, max_iterations)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if let Some(i) = iterations.as_mut() {
            *i = report.iterations;
        }
        if let Some(c) = converged.as_mut() {
            *c = report.converged;
        }
        write(out, into_handle(report.belief), "out")
    })
}

/// Scores a symbol sequence against a user belief with a biased adversary
/// prior. `weight` is read only for the partial rule.
///
/// # Safety
/// `sequence` must point to `len` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_decide_sequence(
    user: *const BayesauthBelief,
    adversary_prior: *const BayesauthBelief,
    rule: BayesauthRule,
    weight: f64,
    p_user: f64,
    sequence: *const usize,
    len: usize,
    out: *mut BayesauthVerdict,
) -> BayesauthStatus {
    guard(|| {
        let psi = handle(user, "user")?;
        let xi = handle(adversary_prior, "adversary_prior")?;
        let seq = slice(sequence, len, "sequence")?;
        let v = biased_decide(psi, xi, rule_of(rule, weight)?, PriorOdds::new(p_user)?, seq)?;
        write(out, verdict(v), "out")
    })
}

/// Scores a single count-vector record. Sequence-subset rules condition on
/// nothing here and match the world rule.
///
/// # Safety
/// `counts` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_decide_record(
    user: *const BayesauthBelief,
    adversary_prior: *const BayesauthBelief,
    rule: BayesauthRule,
    weight: f64,
    p_user: f64,
    counts: *const f64,
    len: usize,
    out: *mut BayesauthVerdict,
) -> BayesauthStatus {
    guard(|| {
        let psi = handle(user, "user")?;
        let xi = handle(adversary_prior, "adversary_prior")?;
        let obs = CountVector::new(slice(counts, len, "counts")?.to_vec())?;
        let v = biased_decide_record(psi, xi, rule_of(rule, weight)?, PriorOdds::new(p_user)?, &obs)?;
        write(out, verdict(v), "out")
    })
}

/// Bayes decision with known multinomial user and adversary models.
///
/// # Safety
/// `user_probs`, `adversary_probs` and `counts` must each point to `degree` doubles.
#[no_mangle]
pub unsafe extern "C" fn bayesauth_oracle_decide(
    user_probs: *const f64,
    adversary_probs: *const f64,
    degree: usize,
    p_user: f64,
    counts: *const f64,
    out: *mut BayesauthVerdict,
) -> BayesauthStatus {
    guard(|| {
        let q = MultinomialModel::new(slice(user_probs, degree, "user_probs")?.to_vec())?;
        let w = MultinomialModel::new(slice(adversary_probs, degree, "adversary_probs")?.to_vec())?;
        let obs = CountVector::new(slice(counts, degree, "counts")?.to_vec())?;
        write(out, verdict(oracle_decide(&q, &w, PriorOdds::new(p_user)?, &obs)?), "out")
    })
}
