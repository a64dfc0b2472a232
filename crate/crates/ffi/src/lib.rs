//! C interface. Experiments and traces are opaque handles owned by the
//! caller and released with their `_free` function. Every fallible call
//! returns an [`HmpcStatus`]; the message of the most recent failure on the
//! calling thread is available from [`hmpc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use hmpc::cli::{Experiment, ExperimentConfig};
use hmpc::controllers::ControllerVariant;
use hmpc::sim::{self, compute_metrics, write_trace_file, SimTrace};
use hmpc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// The QP solver failed. A run still hands back its truncated trace.
    Solver = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmpcVariant {
    Smpc = 0,
    Hmpc = 1,
    HmpcPassive = 2,
    HmpcRobust = 3,
}

impl From<HmpcVariant> for ControllerVariant {
    fn from(v: HmpcVariant) -> Self {
        match v {
            HmpcVariant::Smpc => ControllerVariant::Smpc,
            HmpcVariant::Hmpc => ControllerVariant::Hmpc,
            HmpcVariant::HmpcPassive => ControllerVariant::HmpcPassive,
            HmpcVariant::HmpcRobust => ControllerVariant::HmpcRobust,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HmpcMetrics {
    pub cumulative_violation: f64,
    pub peak_violation: f64,
    pub position_rms: f64,
    pub energy_consumed: f64,
    pub position_violations: usize,
    pub steps: usize,
    pub completed: bool,
}

/// A validated experiment configuration.
pub struct HmpcExperiment {
    config: ExperimentConfig,
    base: PathBuf,
    built: Experiment,
}

/// A closed-loop trace.
pub struct HmpcTrace(SimTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("interior nul removed"));
}

fn status_of(e: &Error) -> HmpcStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => HmpcStatus::InvalidArgument,
        Error::Config { .. } => HmpcStatus::Config,
        Error::Solver { .. } => HmpcStatus::Solver,
        Error::TraceFormat { .. } | Error::Io(_) => HmpcStatus::Io,
    }
}

fn fail(status: HmpcStatus, message: impl Into<String>) -> HmpcStatus {
    set_error(message);
    status
}

fn guard(body: impl FnOnce() -> HmpcStatus) -> HmpcStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|_| fail(HmpcStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, HmpcStatus> {
    if ptr.is_null() {
        return Err(fail(HmpcStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(HmpcStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

fn build(config: ExperimentConfig, base: PathBuf) -> Result<HmpcExperiment, HmpcStatus> {
    match config.build(&base) {
        Ok(built) => Ok(HmpcExperiment { config, base, built }),
        Err(e) => Err(fail(status_of(&e), e.to_string())),
    }
}

unsafe fn emit<T>(out: *mut *mut T, value: Result<T, HmpcStatus>) -> HmpcStatus {
    match value {
        Ok(v) => {
            *out = Box::into_raw(Box::new(v));
            HmpcStatus::Ok
        }
        Err(status) => status,
    }
}

/// Message of the last failure on this thread, empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn hmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The built-in vehicle case study.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmpc_experiment_default(out: *mut *mut HmpcExperiment) -> HmpcStatus {
    if out.is_null() {
        return fail(HmpcStatus::NullPointer, "out is null");
    }
    guard(|| emit(out, build(ExperimentConfig::default(), PathBuf::from("."))))
}

/// Parses a TOML config. Relative scenario paths resolve against
/// `base_dir`, or the working directory when it is null.
///
/// # Safety
/// `text` and `base_dir` must be null or nul-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmpc_experiment_from_toml(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut HmpcExperiment,
) -> HmpcStatus {
    if out.is_null() {
        return fail(HmpcStatus::NullPointer, "out is null");
    }
    guard(|| {
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let base = if base_dir.is_null() {
            PathBuf::from(".")
        } else {
            match str_arg(base_dir, "base_dir") {
                Ok(b) => PathBuf::from(b),
                Err(s) => return s,
            }
        };
        let value = ExperimentConfig::from_toml(text)
            .map_err(|e| fail(status_of(&e), e.to_string()))
            .and_then(|config| build(config, base));
        emit(out, value)
    })
}

/// Reads a TOML config file.
///
/// # Safety
/// `path` must be nul-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmpc_experiment_load(path: *const c_char, out: *mut *mut HmpcExperiment) -> HmpcStatus {
    if out.is_null() {
        return fail(HmpcStatus::NullPointer, "out is null");
    }
    guard(|| {
        let path = match str_arg(path, "path") {
            Ok(p) => Path::new(p),
            Err(s) => return s,
        };
        let value = ExperimentConfig::load(path)
            .map(|(config, built)| HmpcExperiment {
                config,
                base: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
                built,
            })
            .map_err(|e| fail(status_of(&e), e.to_string()));
        emit(out, value)
    })
}

/// Replaces the single-layer horizon. The experiment is unchanged on error.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmpc_experiment_set_horizon_smpc(experiment: *mut HmpcExperiment, horizon: usize) -> HmpcStatus {
    let Some(exp) = experiment.as_mut() else {
        return fail(HmpcStatus::NullPointer, "experiment is null");
    };
    guard(|| {
        let mut config = exp.config.clone();
        config.horizons.smpc = horizon;
        match build(config, exp.base.clone()) {
            Ok(rebuilt) => {
                *exp = rebuilt;
                HmpcStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Configured number of simulated steps, 0 for a null handle.
///
/// # Safety
/// `experiment` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmpc_experiment_duration(experiment: *const HmpcExperiment) -> usize {
    experiment.as_ref().map_or(0, |e| e.built.duration)
}

/// # Safety
/// `experiment` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hmpc_experiment_free(experiment: *mut HmpcExperiment) {
    if !experiment.is_null() {
        drop(Box::from_raw(experiment));
    }
}

/// Simulates one controller variant. On a solver failure during the run
/// the truncated trace is still stored in `out` and `HMPC_STATUS_SOLVER`
/// is returned.
///
/// # Safety
/// `experiment` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmpc_run(
    experiment: *const HmpcExperiment,
    variant: HmpcVariant,
    out: *mut *mut HmpcTrace,
) -> HmpcStatus {
    let Some(exp) = experiment.as_ref() else {
        return fail(HmpcStatus::NullPointer, "experiment is null");
    };
    if out.is_null() {
        return fail(HmpcStatus::NullPointer, "out is null");
    }
    guard(|| {
        let e = &exp.built;
        match sim::run(&e.settings, variant.into(), &e.scenario, &e.x0, e.duration) {
            Ok(trace) => {
                let failure = trace.failure.clone();
                *out = Box::into_raw(Box::new(HmpcTrace(trace)));
                match failure {
                    Some(message) => fail(HmpcStatus::Solver, message),
                    None => HmpcStatus::Ok,
                }
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_free(trace: *mut HmpcTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of steps at which an input was applied. States are recorded for
/// one more step than this.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_steps(trace: *const HmpcTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.steps())
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_n_states(trace: *const HmpcTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.layout.n_states)
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_n_inputs(trace: *const HmpcTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.layout.n_inputs)
}

/// Whether the run stopped early on a solver failure.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_failed(trace: *const HmpcTrace) -> bool {
    trace.as_ref().is_some_and(|t| t.0.failure.is_some())
}

unsafe fn copy_row(
    trace: *const HmpcTrace,
    step: usize,
    buf: *mut f64,
    len: usize,
    pick: impl Fn(&SimTrace, usize) -> Option<&[f64]>,
) -> HmpcStatus {
    let Some(t) = trace.as_ref() else {
        return fail(HmpcStatus::NullPointer, "trace is null");
    };
    if buf.is_null() {
        return fail(HmpcStatus::NullPointer, "buf is null");
    }
    let Some(row) = pick(&t.0, step) else {
        return fail(HmpcStatus::InvalidArgument, format!("no such step {step}"));
    };
    if len < row.len() {
        return fail(HmpcStatus::InvalidArgument, format!("buffer holds {len} values, need {}", row.len()));
    }
    std::ptr::copy_nonoverlapping(row.as_ptr(), buf, row.len());
    HmpcStatus::Ok
}

/// Copies the state at `step` (0 through `hmpc_trace_steps`) into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_state(trace: *const HmpcTrace, step: usize, buf: *mut f64, len: usize) -> HmpcStatus {
    copy_row(trace, step, buf, len, |t, k| t.records.get(k).map(|r| r.state.as_slice()))
}

/// Copies the input applied at `step` (below `hmpc_trace_steps`) into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_input(trace: *const HmpcTrace, step: usize, buf: *mut f64, len: usize) -> HmpcStatus {
    copy_row(trace, step, buf, len, |t, k| {
        t.records.get(k).and_then(|r| r.input.as_ref()).map(|u| u.as_slice())
    })
}

/// Scores a trace with the experiment's metric settings.
///
/// # Safety
/// Both handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_metrics(
    trace: *const HmpcTrace,
    experiment: *const HmpcExperiment,
    out: *mut HmpcMetrics,
) -> HmpcStatus {
    let (Some(t), Some(exp)) = (trace.as_ref(), experiment.as_ref()) else {
        return fail(HmpcStatus::NullPointer, "trace or experiment is null");
    };
    if out.is_null() {
        return fail(HmpcStatus::NullPointer, "out is null");
    }
    guard(|| match compute_metrics(&t.0, &exp.built.metrics) {
        Ok(m) => {
            *out = HmpcMetrics {
                cumulative_violation: m.cumulative_violation,
                peak_violation: m.peak_violation,
                position_rms: m.position_rms,
                energy_consumed: m.energy_consumed,
                position_violations: m.position_violations,
                steps: m.steps,
                completed: m.completed,
            };
            HmpcStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    })
}

/// Writes the trace in the CLI's CSV format.
///
/// # Safety
/// `trace` must be a live handle; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn hmpc_trace_write_csv(trace: *const HmpcTrace, path: *const c_char) -> HmpcStatus {
    let Some(t) = trace.as_ref() else {
        return fail(HmpcStatus::NullPointer, "trace is null");
    };
    guard(|| {
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_trace_file(&t.0, Path::new(path)) {
            Ok(()) => HmpcStatus::Ok,
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
