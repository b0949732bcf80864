//! C ABI over the charged-polymer library.
//!
//! Every fallible call returns a [`CpStatus`]; on failure the message is
//! available from [`cp_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new` and released by the matching `*_free`.
//! Passing a handle to `*_free` twice, or using it afterwards, is undefined.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use charged_polymer::charges::{ChargeEnvironment, ChargeLaw};
use charged_polymer::config::ExperimentConfig;
use charged_polymer::hamiltonian::PolymerEnergyState;
use charged_polymer::oracles::{return_probabilities, sigma2, OracleTable, Sigma2Variant};
use charged_polymer::rng::stream_rng;
use charged_polymer::walk::{make_step_law, StepLaw, WalkKind};
use charged_polymer::{runner, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    OutOfRange = 4,
    EnvironmentTooShort = 5,
    TableTooShallow = 6,
    Config = 7,
    Io = 8,
    Panic = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpSigma2Variant {
    /// d = 2 annealed constant.
    AnnealedD2 = 0,
    /// d >= 3, conditional on the walk.
    FcltGivenS = 1,
    /// d >= 3, quenched and recentred.
    QuenchedRecentred = 2,
}

pub struct CpStepLaw {
    inner: StepLaw,
}

pub struct CpEnvironment {
    inner: ChargeEnvironment,
}

pub struct CpEnergyState {
    inner: PolymerEnergyState,
}

pub struct CpOracleTable {
    inner: OracleTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(CpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::OutOfRange { .. } => CpStatus::OutOfRange,
            Error::EnvironmentTooShort { .. } => CpStatus::EnvironmentTooShort,
            Error::TableTooShallow { .. } => CpStatus::TableTooShallow,
            Error::Config(_) => CpStatus::Config,
            Error::Io { .. } | Error::Format { .. } => CpStatus::Io,
            Error::Json(_) => CpStatus::Internal,
            _ => CpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside the library");
            CpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn cp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Step law from `kind` (`"srw"` or `"lazy_srw"`), dimension and holding
/// probability (ignored for `srw`).
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_step_law_new(
    kind: *const c_char,
    dim: usize,
    lazy_weight: f64,
    out: *mut *mut CpStepLaw,
) -> CpStatus {
    guard(|| {
        let kind: WalkKind = str_arg(kind, "kind")?.parse()?;
        let inner = make_step_law(kind, dim, lazy_weight, None)?;
        put(out, Box::into_raw(Box::new(CpStepLaw { inner })), "out")
    })
}

/// # Safety
/// `law` must come from [`cp_step_law_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_step_law_free(law: *mut CpStepLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// `len` i.i.d. charges from `law` (`"rademacher"`, `"gaussian"` or
/// `"student_like:<gamma>"`), reproducible from `seed`.
///
/// # Safety
/// `law` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_environment_new(
    law: *const c_char,
    seed: u64,
    len: usize,
    out: *mut *mut CpEnvironment,
) -> CpStatus {
    guard(|| {
        let law: ChargeLaw = str_arg(law, "law")?.parse()?;
        let inner = ChargeEnvironment::generate(law, seed, len)?;
        put(out, Box::into_raw(Box::new(CpEnvironment { inner })), "out")
    })
}

/// Number of charges; 0 for a null handle.
///
/// # Safety
/// `env` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cp_environment_len(env: *const CpEnvironment) -> usize {
    env.as_ref().map_or(0, |e| e.inner.len())
}

/// Copy the first `min(len, cp_environment_len(env))` charges into `buf`.
///
/// # Safety
/// `env` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_environment_values(
    env: *const CpEnvironment,
    buf: *mut f64,
    len: usize,
) -> CpStatus {
    guard(|| {
        let env = handle(env, "env")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let src = env.inner.values();
        let k = len.min(src.len());
        ptr::copy_nonoverlapping(src.as_ptr(), buf, k);
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`cp_environment_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_environment_free(env: *mut CpEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Energy tracker for a `dim`-dimensional walk over `env`. The state keeps
/// its own reference to the charges; `env` may be freed afterwards.
///
/// # Safety
/// `env` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_energy_state_new(
    env: *const CpEnvironment,
    dim: usize,
    out: *mut *mut CpEnergyState,
) -> CpStatus {
    guard(|| {
        let env = handle(env, "env")?;
        let inner = PolymerEnergyState::new(dim, &env.inner)?;
        put(out, Box::into_raw(Box::new(CpEnergyState { inner })), "out")
    })
}

/// Move by `step` (length `dim`) and write the energy increment to `delta`
/// (may be null).
///
/// # Safety
/// `state` must be a live handle; `step` must hold `dim` integers.
#[no_mangle]
pub unsafe extern "C" fn cp_energy_state_apply_step(
    state: *mut CpEnergyState,
    step: *const i64,
    dim: usize,
    delta: *mut f64,
) -> CpStatus {
    guard(|| {
        let state = handle_mut(state, "state")?;
        if step.is_null() {
            return Err(null("step"));
        }
        let d = state
            .inner
            .apply_step(std::slice::from_raw_parts(step, dim))?;
        if !delta.is_null() {
            delta.write(d);
        }
        Ok(())
    })
}

/// Take `steps` steps from `law`, drawn from stream 0 of `seed`.
///
/// # Safety
/// `state` and `law` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn cp_energy_state_run(
    state: *mut CpEnergyState,
    law: *const CpStepLaw,
    seed: u64,
    steps: u64,
) -> CpStatus {
    guard(|| {
        let state = handle_mut(state, "state")?;
        let law = handle(law, "law")?;
        if law.inner.dim() != state.inner.walk().dim() {
            return Err(Failure(
                CpStatus::InvalidArgument,
                format!(
                    "d={} law for a d={} walk",
                    law.inner.dim(),
                    state.inner.walk().dim()
                ),
            ));
        }
        state
            .inner
            .run(&law.inner, &mut stream_rng(seed, 0), steps)?;
        Ok(())
    })
}

/// Current energy `K_n`; NaN for a null handle.
///
/// # Safety
/// `state` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cp_energy_state_energy(state: *const CpEnergyState) -> f64 {
    state.as_ref().map_or(f64::NAN, |s| s.inner.energy())
}

/// Steps taken so far; 0 for a null handle.
///
/// # Safety
/// `state` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cp_energy_state_steps(state: *const CpEnergyState) -> u64 {
    state.as_ref().map_or(0, |s| s.inner.steps())
}

/// # Safety
/// `state` must come from [`cp_energy_state_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_energy_state_free(state: *mut CpEnergyState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Return probabilities `P(S_m = 0)` for `m <= max_m`.
///
/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_oracle_new(
    law: *const CpStepLaw,
    max_m: usize,
    out: *mut *mut CpOracleTable,
) -> CpStatus {
    guard(|| {
        let law = handle(law, "law")?;
        let inner = return_probabilities(&law.inner, max_m)?;
        put(out, Box::into_raw(Box::new(CpOracleTable { inner })), "out")
    })
}

/// `P(S_m = 0)`; `m = 0` gives 1.
///
/// # Safety
/// `table` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_oracle_return_probability(
    table: *const CpOracleTable,
    m: usize,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let p = handle(table, "table")?.inner.p(m)?;
        put(out, p, "out")
    })
}

/// Limiting variance constant of the requested kind.
///
/// # Safety
/// `table` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_oracle_sigma2(
    table: *const CpOracleTable,
    variant: CpSigma2Variant,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let table = handle(table, "table")?;
        let v = match variant {
            CpSigma2Variant::AnnealedD2 => Sigma2Variant::AnnealedD2,
            CpSigma2Variant::FcltGivenS => Sigma2Variant::FcltGivenS,
            CpSigma2Variant::QuenchedRecentred => Sigma2Variant::QuenchedRecentredDge3,
        };
        put(out, sigma2(&table.inner, v)?.value, "out")
    })
}

/// # Safety
/// `table` must come from [`cp_oracle_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_oracle_free(table: *mut CpOracleTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Run the TOML config at `config_path`, writing results into `out_dir`.
/// `passed` receives whether every gated check passed; a failed gate is
/// not an error.
///
/// # Safety
/// Both paths must be NUL-terminated strings; `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_run_config(
    config_path: *const c_char,
    out_dir: *const c_char,
    workers: usize,
    passed: *mut bool,
) -> CpStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(Path::new(str_arg(config_path, "config_path")?))?;
        let out = Path::new(str_arg(out_dir, "out_dir")?);
        if passed.is_null() {
            return Err(null("passed"));
        }
        let results = runner::run(&cfg, workers, out, false)?;
        passed.write(results.passed());
        Ok(())
    })
}
