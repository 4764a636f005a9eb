//! C ABI for `qsd-core`.
//!
//! Handles are opaque heap objects created by `*_new`/`*_run` functions and
//! released by the matching `*_free`. Every fallible call returns a
//! [`QsdStatus`]; on failure a message is stored per thread and can be read
//! with [`qsd_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qsd_core::ensemble::{run_ensemble, DensityMatrix, EnsembleConfig, EnsembleStats, InitialState};
use qsd_core::error::Error;
use qsd_core::model::{ModelParams, OperatorSet};
use qsd_core::observables::FIELD_NAMES;
use qsd_core::oracle::{evolve, LindbladPropagatorConfig};
use qsd_core::qsd::IntegratorConfig;
use qsd_core::thresholds::TAIL_TOL;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Physical parameters. `n_bar` sets the bath temperature through
/// n̄ = 1/(e^{ħω/kT} − 1); pass 0 for a zero-temperature bath.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QsdParams {
    pub mass: f64,
    pub omega: f64,
    pub gamma: f64,
    pub hbar: f64,
    pub n_bar: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsdInitialKind {
    Coherent = 0,
    Fock = 1,
    Cat = 2,
}

/// Initial state: `alpha_re`/`alpha_im` for coherent and cat states,
/// `fock_n` for number states.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QsdInitial {
    pub kind: QsdInitialKind,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub fock_n: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QsdRunConfig {
    pub trajectories: usize,
    pub base_seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    /// 0 runs on the global thread pool.
    pub workers: usize,
    pub initial: QsdInitial,
}

/// Operators of the truncated model.
pub struct QsdModel {
    ops: OperatorSet,
}

/// Ensemble statistics of a finished run.
pub struct QsdEnsemble {
    stats: EnsembleStats,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QsdStatus {
    match e.exit_code() {
        2 => QsdStatus::InvalidArgument,
        _ => QsdStatus::Numerical,
    }
}

fn guard<F>(f: F) -> QsdStatus
where
    F: FnOnce() -> Result<(), (QsdStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QsdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside qsd".into());
            QsdStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (QsdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (QsdStatus, String) {
    (QsdStatus::NullPointer, format!("{what} is null"))
}

impl QsdInitial {
    fn to_core(self) -> InitialState {
        match self.kind {
            QsdInitialKind::Coherent => InitialState::Coherent { re: self.alpha_re, im: self.alpha_im },
            QsdInitialKind::Fock => InitialState::Fock { n: self.fock_n },
            QsdInitialKind::Cat => InitialState::Cat { re: self.alpha_re, im: self.alpha_im },
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qsd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminating NUL; 0 when there is none.
#[no_mangle]
pub extern "C" fn qsd_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len − 1` bytes). Returns the number of bytes written excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qsd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        // SAFETY: caller guarantees `len` writable bytes at `buf`, and n < len.
        unsafe {
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        n
    })
}

/// Builds the truncated operators for `n_f` Fock levels.
///
/// # Safety
/// `params` must point to a valid `QsdParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qsd_model_new(params: *const QsdParams, n_f: usize, out: *mut *mut QsdModel) -> QsdStatus {
    guard(|| {
        // SAFETY: null-checked; caller guarantees validity otherwise.
        let p = unsafe { params.as_ref() }.ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut mp = ModelParams {
            mass: p.mass,
            omega: p.omega,
            gamma: p.gamma,
            hbar: p.hbar,
            ..ModelParams::default()
        };
        if !(p.n_bar >= 0.0 && p.n_bar.is_finite()) {
            return Err((QsdStatus::InvalidArgument, format!("n_bar must be finite and ≥ 0, got {}", p.n_bar)));
        }
        mp.set_n_bar(p.n_bar);
        let ops = OperatorSet::new(mp, n_f).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(QsdModel { ops })) };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`qsd_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qsd_model_free(model: *mut QsdModel) {
    if !model.is_null() {
        // SAFETY: the handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Hilbert-space dimension of the model, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qsd_model_dim(model: *const QsdModel) -> usize {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { model.as_ref() }.map_or(0, |m| m.ops.dim)
}

/// Runs an ensemble of trajectories. The result is independent of `workers`.
///
/// # Safety
/// `model` and `cfg` must be live/valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qsd_ensemble_run(
    model: *const QsdModel,
    cfg: *const QsdRunConfig,
    out: *mut *mut QsdEnsemble,
) -> QsdStatus {
    guard(|| {
        // SAFETY: null-checked; caller guarantees validity otherwise.
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        // SAFETY: as above.
        let c = unsafe { cfg.as_ref() }.ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let integ = IntegratorConfig {
            dt: c.dt,
            t_end: c.t_end,
            seed: c.base_seed,
            record_stride: c.record_stride,
            renormalize: true,
            tail_tol: TAIL_TOL,
        };
        let mut ec = EnsembleConfig::new(c.trajectories, c.base_seed, integ, c.initial.to_core());
        ec.workers = c.workers;
        let stats = run_ensemble(&ec, &m.ops).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(QsdEnsemble { stats })) };
        Ok(())
    })
}

/// # Safety
/// `ens` must be null or a handle from [`qsd_ensemble_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qsd_ensemble_free(ens: *mut QsdEnsemble) {
    if !ens.is_null() {
        // SAFETY: the handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(ens) });
    }
}

/// Number of recorded samples, 0 for a null handle.
///
/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qsd_ensemble_samples(ens: *const QsdEnsemble) -> usize {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { ens.as_ref() }.map_or(0, |e| e.stats.times.len())
}

/// Number of observable columns; see [`qsd_observable_name`].
#[no_mangle]
pub extern "C" fn qsd_observable_count() -> usize {
    FIELD_NAMES.len()
}

/// Static NUL-terminated name of observable `index`, or null when out of range.
#[no_mangle]
pub extern "C" fn qsd_observable_name(index: usize) -> *const c_char {
    const NAMES: [&str; 9] = [
        "q_mean\0",
        "p_mean\0",
        "var_q\0",
        "var_p\0",
        "R\0",
        "P\0",
        "Q\0",
        "delta_alpha_sq\0",
        "n_mean\0",
    ];
    NAMES.get(index).map_or(ptr::null(), |s| s.as_ptr().cast())
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), (QsdStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < values.len() {
        return Err((
            QsdStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    // SAFETY: caller guarantees `len` ≥ values.len() writable doubles.
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
    Ok(())
}

/// Copies the sample times into `out` (capacity `len`).
///
/// # Safety
/// `ens` must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qsd_ensemble_times(ens: *const QsdEnsemble, out: *mut f64, len: usize) -> QsdStatus {
    guard(|| {
        // SAFETY: null-checked; caller guarantees validity otherwise.
        let e = unsafe { ens.as_ref() }.ok_or_else(|| null("ensemble"))?;
        // SAFETY: forwarded caller guarantee.
        unsafe { copy_out(&e.stats.times, out, len) }
    })
}

/// Copies the ensemble mean (`stderr == 0`) or standard error (`stderr != 0`)
/// of observable `index` at every sample into `out`.
///
/// # Safety
/// `ens` must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qsd_ensemble_series(
    ens: *const QsdEnsemble,
    index: usize,
    stderr: i32,
    out: *mut f64,
    len: usize,
) -> QsdStatus {
    guard(|| {
        // SAFETY: null-checked; caller guarantees validity otherwise.
        let e = unsafe { ens.as_ref() }.ok_or_else(|| null("ensemble"))?;
        if index >= FIELD_NAMES.len() {
            return Err((QsdStatus::InvalidArgument, format!("observable index {index} out of range")));
        }
        let src = if stderr != 0 { &e.stats.stderr } else { &e.stats.mean };
        let values: Vec<f64> = src.iter().map(|b| b.values()[index]).collect();
        // SAFETY: forwarded caller guarantee.
        unsafe { copy_out(&values, out, len) }
    })
}

/// Lindblad density matrix at time `t` from the pure initial state, written
/// row-major as interleaved (re, im) pairs; `len` must be at least 2·dim².
///
/// # Safety
/// `model` and `initial` must be valid; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qsd_oracle_density(
    model: *const QsdModel,
    initial: *const QsdInitial,
    t: f64,
    dt_oracle: f64,
    out: *mut f64,
    len: usize,
) -> QsdStatus {
    guard(|| {
        // SAFETY: null-checked; caller guarantees validity otherwise.
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        // SAFETY: as above.
        let init = unsafe { initial.as_ref() }.ok_or_else(|| null("initial"))?;
        let psi = init.to_core().build(m.ops.dim).map_err(core_err)?;
        let cfg = LindbladPropagatorConfig { dt_oracle, t_end: t };
        let rho = evolve(&DensityMatrix::from_pure(&psi), &m.ops, &cfg, &[t])
            .map_err(core_err)?
            .remove(0);
        let mat = rho.matrix();
        let n = m.ops.dim;
        let mut values = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(mat[(i, j)].re);
                values.push(mat[(i, j)].im);
            }
        }
        // SAFETY: forwarded caller guarantee.
        unsafe { copy_out(&values, out, len) }
    })
}
