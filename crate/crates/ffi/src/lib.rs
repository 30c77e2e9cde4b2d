//! C ABI over `monowave`.
//!
//! Objects are exposed as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible call returns an [`MwStatus`];
//! on failure the message is available from [`mw_last_error`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use monowave::config::{self, TaskKind};
use monowave::kinetics::{classify_bistability, EquilibriumReport, Kinetics, Stability};
use monowave::profiles::{heaviside_profile, Grid};
use monowave::pulsating::lambda1;
use monowave::run::{self, RunOptions};
use monowave::semiflow::{Scheme, Semiflow};
use monowave::waves::{construct_wave_direct, DirectWaveOptions, WaveSolution};
use monowave::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Precondition = 3,
    NoConvergence = 4,
    DomainTooSmall = 5,
    Config = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MwStability {
    Stable = 0,
    Unstable = 1,
    Marginal = 2,
    Unclassified = 3,
}

/// Reaction-diffusion kinetics.
pub struct MwKinetics {
    inner: Kinetics,
}

/// Equilibria of a kinetics with their stability labels.
pub struct MwEquilibria {
    inner: EquilibriumReport,
}

/// A traveling-wave solution.
pub struct MwWave {
    inner: WaveSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MwStatus {
    match e {
        Error::InvalidInput(_) | Error::GridMismatch(_) | Error::NonMonotone(_) | Error::StepSize(_) => {
            MwStatus::InvalidInput
        }
        Error::Precondition(_) | Error::OrderViolation { .. } => MwStatus::Precondition,
        Error::Convergence(_) | Error::NonFinite { .. } => MwStatus::NoConvergence,
        Error::DomainTooSmall { .. } => MwStatus::DomainTooSmall,
        Error::Config { .. } | Error::Format(_) => MwStatus::Config,
        Error::Io(_) => MwStatus::Io,
        _ => MwStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (MwStatus, String)>) -> MwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MwStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MwStatus::Panic
        }
    }
}

fn lib<T>(r: monowave::Result<T>) -> Result<T, (MwStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MwStatus, String) {
    (MwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MwStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MwStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Scalar cubic kinetics `u_t = u_xx + u(1 - u)(u - a)`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mw_kinetics_cubic(a: f64, out: *mut *mut MwKinetics) -> MwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(Kinetics::reaction_diffusion(
            monowave::kinetics::Reaction::Cubic { a },
            vec![1.0],
        ))?;
        *out = Box::into_raw(Box::new(MwKinetics { inner }));
        Ok(())
    })
}

/// Kinetics from the `[system]` table of a TOML run configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_kinetics_from_toml(toml: *const c_char, out: *mut *mut MwKinetics) -> MwStatus {
    guard(|| {
        let text = c_str(toml, "toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let loaded = lib(config::parse_str(text))?;
        let inner = lib(loaded.config.system.kinetics())?;
        *out = Box::into_raw(Box::new(MwKinetics { inner }));
        Ok(())
    })
}

/// # Safety
/// `k` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mw_kinetics_free(k: *mut MwKinetics) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Number of species.
///
/// # Safety
/// `k` must be a live handle and `n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_kinetics_species(k: *const MwKinetics, n: *mut usize) -> MwStatus {
    guard(|| {
        let k = borrow(k, "kinetics")?;
        if n.is_null() {
            return Err(null("n"));
        }
        *n = k.inner.n_species();
        Ok(())
    })
}

/// Finds and labels the equilibria.
///
/// # Safety
/// `k` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_equilibria(k: *const MwKinetics, out: *mut *mut MwEquilibria) -> MwStatus {
    guard(|| {
        let k = borrow(k, "kinetics")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(classify_bistability(&k.inner))?;
        *out = Box::into_raw(Box::new(MwEquilibria { inner }));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mw_equilibria_free(e: *mut MwEquilibria) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of equilibria and whether the bistable structure holds.
///
/// # Safety
/// `e` must be a live handle; `len` and `bistable` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mw_equilibria_len(e: *const MwEquilibria, len: *mut usize, bistable: *mut bool) -> MwStatus {
    guard(|| {
        let e = borrow(e, "equilibria")?;
        if len.is_null() || bistable.is_null() {
            return Err(null("len/bistable"));
        }
        *len = e.inner.equilibria.len();
        *bistable = e.inner.bistable;
        Ok(())
    })
}

/// Copies equilibrium `index` into `state` (capacity `cap`, one entry per
/// species) together with its label and stability indicator.
///
/// # Safety
/// `e` must be a live handle; `state` must hold `cap` doubles; `stability`
/// and `indicator` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mw_equilibria_get(
    e: *const MwEquilibria,
    index: usize,
    state: *mut f64,
    cap: usize,
    stability: *mut MwStability,
    indicator: *mut f64,
) -> MwStatus {
    guard(|| {
        let e = borrow(e, "equilibria")?;
        if state.is_null() || stability.is_null() || indicator.is_null() {
            return Err(null("output"));
        }
        let eq = e
            .inner
            .equilibria
            .get(index)
            .ok_or_else(|| (MwStatus::InvalidInput, format!("index {index} out of range")))?;
        if cap < eq.state.len() {
            return Err((MwStatus::BufferTooSmall, format!("need {} entries", eq.state.len())));
        }
        std::slice::from_raw_parts_mut(state, eq.state.len()).copy_from_slice(&eq.state);
        *stability = match eq.stability {
            Stability::Stable => MwStability::Stable,
            Stability::Unstable => MwStability::Unstable,
            Stability::Marginal => MwStability::Marginal,
            Stability::Unclassified => MwStability::Unclassified,
        };
        *indicator = eq.indicator;
        Ok(())
    })
}

/// Direct wave construction from a step between the bottom and top states
/// on `[x_min, x_max]` with spacing `dx`, evolved over `horizon`.
///
/// # Safety
/// `k` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_wave_direct(
    k: *const MwKinetics,
    x_min: f64,
    x_max: f64,
    dx: f64,
    horizon: f64,
    out: *mut *mut MwWave,
) -> MwStatus {
    guard(|| {
        let k = borrow(k, "kinetics")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let kin = &k.inner;
        let grid = lib(Grid::with_spacing(x_min, x_max, dx))?;
        let s = lib(Semiflow::auto(kin.clone(), grid.clone(), Scheme::ExplicitEuler))?;
        let init = lib(heaviside_profile(&grid, &kin.lift(&kin.bottom), &kin.lift(&kin.top), 0.5 * (x_min + x_max), 1.0))?;
        let inner = lib(construct_wave_direct(&s, &init, &DirectWaveOptions::new(horizon)))?;
        *out = Box::into_raw(Box::new(MwWave { inner }));
        Ok(())
    })
}

/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mw_wave_free(w: *mut MwWave) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Speed, wave residual and acceptance flag.
///
/// # Safety
/// `w` must be a live handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mw_wave_summary(
    w: *const MwWave,
    speed: *mut f64,
    residual: *mut f64,
    accepted: *mut bool,
) -> MwStatus {
    guard(|| {
        let w = borrow(w, "wave")?;
        if speed.is_null() || residual.is_null() || accepted.is_null() {
            return Err(null("output"));
        }
        *speed = w.inner.speed;
        *residual = w.inner.residual;
        *accepted = w.inner.accepted;
        Ok(())
    })
}

/// Grid size and state dimension of the wave profile.
///
/// # Safety
/// `w` must be a live handle; `n_points` and `dim` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mw_wave_profile_shape(w: *const MwWave, n_points: *mut usize, dim: *mut usize) -> MwStatus {
    guard(|| {
        let w = borrow(w, "wave")?;
        if n_points.is_null() || dim.is_null() {
            return Err(null("output"));
        }
        let p = w.inner.profile();
        *n_points = p.len();
        *dim = p.dim();
        Ok(())
    })
}

/// Copies the profile: `x` gets `n_points` nodes and `u` gets
/// `n_points * dim` values, node-major.
///
/// # Safety
/// `x` must hold `x_cap` doubles and `u` must hold `u_cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mw_wave_profile(
    w: *const MwWave,
    x: *mut f64,
    x_cap: usize,
    u: *mut f64,
    u_cap: usize,
) -> MwStatus {
    guard(|| {
        let w = borrow(w, "wave")?;
        if x.is_null() || u.is_null() {
            return Err(null("output"));
        }
        let p = w.inner.profile();
        let (n, d) = (p.len(), p.dim());
        if x_cap < n || u_cap < n * d {
            return Err((MwStatus::BufferTooSmall, format!("need {n} nodes and {} values", n * d)));
        }
        let xs = std::slice::from_raw_parts_mut(x, n);
        let us = std::slice::from_raw_parts_mut(u, n * d);
        for i in 0..n {
            xs[i] = p.grid().x(i);
            us[i * d..(i + 1) * d].copy_from_slice(p.value(i));
        }
        Ok(())
    })
}

/// Principal periodic eigenvalue at cell samples `u_bar` for
/// periodic-diffusion kinetics.
///
/// # Safety
/// `u_bar` must hold `n` doubles; `k` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mw_lambda1(k: *const MwKinetics, u_bar: *const f64, n: usize, out: *mut f64) -> MwStatus {
    guard(|| {
        let k = borrow(k, "kinetics")?;
        if u_bar.is_null() || out.is_null() {
            return Err(null("u_bar/out"));
        }
        let Some(m) = &k.inner.medium else {
            return Err((MwStatus::Precondition, "kinetics has no periodic medium".into()));
        };
        let u = std::slice::from_raw_parts(u_bar, n);
        let kin = &k.inner;
        let l = lib(lambda1(u, m, |v| kin.jacobian(0.0, &[v])[(0, 0)]))?;
        *out = l.lambda;
        Ok(())
    })
}

/// Runs a task from a config file as the command-line tool would, writing
/// artifacts and the registry record under `out_dir`. `exit_code` receives
/// the tool's exit code (0, 2, 3 or 4). `task` is a subcommand name.
///
/// # Safety
/// The strings must be NUL-terminated; `exit_code` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mw_run_config(
    config_path: *const c_char,
    task: *const c_char,
    out_dir: *const c_char,
    seed: u64,
    plots: bool,
    exit_code: *mut c_int,
) -> MwStatus {
    guard(|| {
        let path = c_str(config_path, "config_path")?;
        let task = c_str(task, "task")?;
        let out = c_str(out_dir, "out_dir")?;
        if exit_code.is_null() {
            return Err(null("exit_code"));
        }
        let kind: TaskKind = task_by_name(task)?;
        let loaded = lib(config::load(std::path::Path::new(path)))?;
        let opts = RunOptions {
            out: PathBuf::from(out),
            seed,
            plots,
        };
        match run::execute(kind, &loaded, &opts) {
            Ok((record, _)) => {
                *exit_code = record.exit_code;
                Ok(())
            }
            Err(e) => {
                *exit_code = run::status_of(&e) as c_int;
                Err((status_of(&e), e.to_string()))
            }
        }
    })
}

fn task_by_name(name: &str) -> Result<TaskKind, (MwStatus, String)> {
    let all = [
        TaskKind::Equilibria,
        TaskKind::Verify,
        TaskKind::Speed,
        TaskKind::Wave,
        TaskKind::Pulsating,
        TaskKind::Lambda1,
        TaskKind::Counterexample,
        TaskKind::Sweep,
    ];
    all.into_iter()
        .find(|t| t.name() == name)
        .ok_or_else(|| (MwStatus::InvalidInput, format!("unknown task `{name}`")))
}
