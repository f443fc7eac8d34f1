//! C ABI for `contract_sa`.
//!
//! Every fallible call returns a [`CsaStatus`]; on failure the message is
//! kept per thread and can be copied out with [`csa_last_error_message`].
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Passing NULL to a `*_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use contract_sa::bounds::{theorem4_bound, theorem5a_bound, theorem5b_bound};
use contract_sa::envelope::EnvelopeSpec;
use contract_sa::harness::config::{sha256_hex, ExperimentSpec};
use contract_sa::harness::experiments::{run_experiment, write_outputs};
use contract_sa::mdp::{q_star, value_of_policy, Mdp, Policy};
use contract_sa::norms::Norm;
use contract_sa::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotConverged = 4,
    /// A bound's stepsize or feasibility condition does not hold.
    PreconditionViolated = 5,
    Numerical = 6,
    Io = 7,
    Parse = 8,
    Panic = 9,
}

pub struct CsaNorm(Norm);

pub struct CsaEnvelope(EnvelopeSpec);

pub struct CsaMdp(Mdp);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(CsaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::DimensionMismatch { .. } => CsaStatus::DimensionMismatch,
            Error::NotConverged { .. } => CsaStatus::NotConverged,
            Error::Infeasible { .. } | Error::StepsizeTooLarge { .. } => CsaStatus::PreconditionViolated,
            Error::NonUniqueStationary | Error::DegenerateStationary { .. } | Error::NonFinite { .. } => {
                CsaStatus::Numerical
            }
            Error::Io(_) => CsaStatus::Io,
            Error::Parse(_) => CsaStatus::Parse,
            _ => CsaStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CsaStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CsaStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(CsaStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            CsaStatus::Ok
        }
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn borrow<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(CsaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn give<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn set(out: *mut f64, value: f64, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = value;
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length plus one,
/// or 0 when the last call succeeded. `buf` may be NULL to query the size.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn csa_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if msg.is_empty() {
            return 0;
        }
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn csa_norm_linf(out: *mut *mut CsaNorm) -> CsaStatus {
    guard(|| give(out, CsaNorm(Norm::LInf)))
}

/// `p >= 2`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn csa_norm_lp(p: f64, out: *mut *mut CsaNorm) -> CsaStatus {
    guard(|| give(out, CsaNorm(Norm::lp(p)?)))
}

/// `sqrt(sum_i w_i x_i^2)` with positive weights.
///
/// # Safety
/// `weights` must point to `len` readable doubles; `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn csa_norm_weighted_l2(weights: *const f64, len: usize, out: *mut *mut CsaNorm) -> CsaStatus {
    guard(|| {
        let w = input(weights, len, "weights")?;
        give(out, CsaNorm(Norm::weighted_l2(w.to_vec())?))
    })
}

/// # Safety
/// `x` must point to `len` readable doubles; `norm` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csa_norm_eval(norm: *const CsaNorm, x: *const f64, len: usize, out: *mut f64) -> CsaStatus {
    guard(|| {
        let norm = borrow(norm, "norm")?;
        let value = norm.0.eval(input(x, len, "x")?)?;
        set(out, value, "out")
    })
}

/// # Safety
/// `norm` must be NULL or a handle from `csa_norm_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csa_norm_free(norm: *mut CsaNorm) {
    if !norm.is_null() {
        drop(Box::from_raw(norm));
    }
}

/// Envelope of `1/2 ||.||_c^2` smoothed by `1/2 ||.||_s^2 / mu`. The norms are
/// copied; the caller keeps ownership of both handles.
///
/// # Safety
/// `c` and `s` must be live norm handles; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn csa_envelope_new(
    c: *const CsaNorm,
    s: *const CsaNorm,
    mu: f64,
    out: *mut *mut CsaEnvelope,
) -> CsaStatus {
    guard(|| {
        let (c, s) = (borrow(c, "c")?, borrow(s, "s")?);
        give(out, CsaEnvelope(EnvelopeSpec::new(c.0.clone(), s.0.clone(), mu)?))
    })
}

/// Envelope value and its duality-gap certificate at `x`. `tol <= 0` selects
/// the default tolerance. `residual` may be NULL.
///
/// # Safety
/// `x` must point to `len` readable doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_envelope_evaluate(
    env: *const CsaEnvelope,
    x: *const f64,
    len: usize,
    tol: f64,
    value: *mut f64,
    residual: *mut f64,
) -> CsaStatus {
    guard(|| {
        let env = &borrow(env, "env")?.0;
        let x = input(x, len, "x")?;
        let tol = if tol > 0.0 { tol } else { env.default_tol(x) };
        let v = env.evaluate(x, tol)?;
        set(value, v.value, "value")?;
        if !residual.is_null() {
            *residual = v.residual;
        }
        Ok(())
    })
}

/// # Safety
/// `x` must point to `len` readable doubles and `grad` to `len` writable ones.
#[no_mangle]
pub unsafe extern "C" fn csa_envelope_gradient(
    env: *const CsaEnvelope,
    x: *const f64,
    len: usize,
    tol: f64,
    grad: *mut f64,
) -> CsaStatus {
    guard(|| {
        let env = &borrow(env, "env")?.0;
        let x = input(x, len, "x")?;
        let tol = if tol > 0.0 { tol } else { env.default_tol(x) };
        let g = env.gradient(x, tol)?;
        output(grad, len, "grad")?.copy_from_slice(&g);
        Ok(())
    })
}

/// # Safety
/// `env` must be NULL or a handle from `csa_envelope_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csa_envelope_free(env: *mut CsaEnvelope) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Seeded random MDP with rewards in `[0, 1]`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn csa_mdp_random(
    n_states: usize,
    n_actions: usize,
    beta: f64,
    seed: u64,
    out: *mut *mut CsaMdp,
) -> CsaStatus {
    guard(|| give(out, CsaMdp(Mdp::random(n_states, n_actions, beta, seed)?)))
}

/// Loads an MDP TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn csa_mdp_load(path: *const c_char, out: *mut *mut CsaMdp) -> CsaStatus {
    guard(|| give(out, CsaMdp(Mdp::load(text(path, "path")?)?)))
}

/// Number of states, or 0 for NULL.
///
/// # Safety
/// `mdp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csa_mdp_n_states(mdp: *const CsaMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_states())
}

/// Number of actions, or 0 for NULL.
///
/// # Safety
/// `mdp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csa_mdp_n_actions(mdp: *const CsaMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_actions())
}

/// Optimal Q-function, state-major (`q[s * n_actions + a]`); `len` must be
/// `n_states * n_actions`.
///
/// # Safety
/// `q` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn csa_mdp_q_star(mdp: *const CsaMdp, q: *mut f64, len: usize) -> CsaStatus {
    guard(|| {
        let mdp = &borrow(mdp, "mdp")?.0;
        let values = q_star(mdp)?;
        check_len(values.len(), len)?;
        output(q, len, "q")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Value of the policy with row-major `[state][action]` probabilities.
///
/// # Safety
/// `probs` must point to `probs_len` readable doubles and `v` to `v_len`
/// writable ones.
#[no_mangle]
pub unsafe extern "C" fn csa_mdp_policy_value(
    mdp: *const CsaMdp,
    probs: *const f64,
    probs_len: usize,
    v: *mut f64,
    v_len: usize,
) -> CsaStatus {
    guard(|| {
        let mdp = &borrow(mdp, "mdp")?.0;
        let pi = Policy::new(mdp.n_states(), mdp.n_actions(), input(probs, probs_len, "probs")?.to_vec())?;
        let values = value_of_policy(mdp, &pi)?;
        check_len(values.len(), v_len)?;
        output(v, v_len, "v")?.copy_from_slice(&values);
        Ok(())
    })
}

/// # Safety
/// `mdp` must be NULL or a handle from `csa_mdp_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csa_mdp_free(mdp: *mut CsaMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), Failure> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got }.into());
    }
    Ok(())
}

/// TD(n) mean-square bound at iteration `k` for constant stepsize `eps`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_bound_tdn(
    beta: f64,
    n: usize,
    eps: f64,
    initial_error_sq: f64,
    fixed_point_norm: f64,
    k: usize,
    out: *mut f64,
) -> CsaStatus {
    guard(|| {
        let v = theorem4_bound(beta, n, eps, initial_error_sq, fixed_point_norm, k)?;
        set(out, v, "out")
    })
}

/// Q-learning bound at iteration `k` for constant stepsize `eps`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_bound_qlearning_constant(
    beta: f64,
    n_pairs: usize,
    eps: f64,
    initial_error_sq: f64,
    fixed_point_norm: f64,
    k: usize,
    out: *mut f64,
) -> CsaStatus {
    guard(|| {
        let v = theorem5a_bound(beta, n_pairs, eps, initial_error_sq, fixed_point_norm, k)?;
        set(out, v, "out")
    })
}

/// Q-learning bound at iteration `k` under the prescribed diminishing
/// schedule.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csa_bound_qlearning_diminishing(
    beta: f64,
    n_pairs: usize,
    initial_error_sq: f64,
    fixed_point_norm: f64,
    k: usize,
    out: *mut f64,
) -> CsaStatus {
    guard(|| {
        let v = theorem5b_bound(beta, n_pairs, initial_error_sq, fixed_point_norm, k)?;
        set(out, v, "out")
    })
}

/// Runs an experiment given as TOML text and writes its CSV, SVG and summary
/// files into `out_dir`. Relative MDP paths resolve against `base_dir`, which
/// may be NULL for the current directory.
///
/// # Safety
/// `spec_toml` and `out_dir` must be NUL-terminated; `base_dir` NULL or
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn csa_run_spec(
    spec_toml: *const c_char,
    base_dir: *const c_char,
    out_dir: *const c_char,
) -> CsaStatus {
    guard(|| {
        let toml = text(spec_toml, "spec_toml")?;
        let base = if base_dir.is_null() {
            "."
        } else {
            text(base_dir, "base_dir")?
        };
        let out_dir = text(out_dir, "out_dir")?;
        let spec = ExperimentSpec::from_toml(toml)?;
        let output = run_experiment(&spec, Path::new(base), &sha256_hex(toml.as_bytes()))?;
        write_outputs(&output, Path::new(out_dir))?;
        Ok(())
    })
}
