//! C ABI for the `ncsim` simulator.
//!
//! Objects cross the boundary as opaque handles created by `ncs_*_new` or
//! `ncs_*_parse` style constructors and released with the matching
//! `ncs_*_free`. Every fallible call returns an [`NcsStatus`]; on failure a
//! message is kept per thread and can be read with [`ncs_last_error`].
//! Panics are caught at the boundary and reported as [`NcsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ncsim::aoi::{adra_mean_aoi, mse_of_age, nmse_of_age, optimize_adra, rr_mean_aoi, sa_mean_aoi};
use ncsim::control::{make_preset, LtiSystem, SystemClass};
use ncsim::experiment::{emit_results, parse_str, run_experiment, ExperimentResults, ExperimentSpec};
use ncsim::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numeric = 4,
    Domain = 5,
    Io = 6,
    NotFound = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

/// Plant presets.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcsClass {
    Easy = 0,
    Mid = 1,
    Hard = 2,
    Pendulum = 3,
}

impl From<NcsClass> for SystemClass {
    fn from(c: NcsClass) -> Self {
        match c {
            NcsClass::Easy => SystemClass::Easy,
            NcsClass::Mid => SystemClass::Mid,
            NcsClass::Hard => SystemClass::Hard,
            NcsClass::Pendulum => SystemClass::Pendulum,
        }
    }
}

/// A plant with its synthesized controller.
pub struct NcsSystem(LtiSystem);

/// A parsed, validated experiment description.
pub struct NcsExperiment(ExperimentSpec);

/// Finished replications of an experiment.
pub struct NcsResults(ExperimentResults);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> NcsStatus {
    match err {
        Error::Config(_) | Error::Dimension(_) => NcsStatus::Config,
        Error::Synthesis { .. } | Error::Numeric(_) | Error::Optimization(_) => NcsStatus::Numeric,
        Error::Domain(_) => NcsStatus::Domain,
        Error::Io(_) | Error::Csv(_) => NcsStatus::Io,
        Error::Invariant(_) => NcsStatus::Internal,
    }
}

/// Runs `f`, translating library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (NcsStatus, String)>) -> NcsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NcsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            NcsStatus::Panic
        }
    }
}

fn lib<T>(r: ncsim::Result<T>) -> Result<T, (NcsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), (NcsStatus, String)> {
    if p.is_null() {
        Err((NcsStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (NcsStatus, String)> {
    non_null(p, what)?;
    // SAFETY: caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (NcsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Copies `s` plus a terminating NUL into `buf`. `required` receives the
/// size needed including the NUL, even when the buffer is too small.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, required: *mut usize) -> Result<(), (NcsStatus, String)> {
    let need = s.len() + 1;
    if !required.is_null() {
        // SAFETY: non-null out pointer supplied by the caller.
        unsafe { *required = need };
    }
    if buf.is_null() || len < need {
        return Err((NcsStatus::BufferTooSmall, format!("buffer of {len} bytes, {need} needed")));
    }
    // SAFETY: `buf` holds at least `need` bytes per the check above.
    unsafe {
        ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ncs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ncs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a preset plant and synthesizes its LQR gain.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ncs_system_preset(class: NcsClass, out: *mut *mut NcsSystem) -> NcsStatus {
    guard(|| {
        non_null(out, "out")?;
        let sys = lib(make_preset(class.into()))?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(NcsSystem(sys))) };
        Ok(())
    })
}

/// Scalar plant `x' = a x + u + w` with unit weights and noise.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ncs_system_scalar(a: f64, out: *mut *mut NcsSystem) -> NcsStatus {
    guard(|| {
        non_null(out, "out")?;
        let sys = lib(LtiSystem::scalar("scalar", a).and_then(LtiSystem::synthesized))?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(NcsSystem(sys))) };
        Ok(())
    })
}

/// Releases a system handle. NULL is ignored.
///
/// # Safety
/// `sys` must come from an `ncs_system_*` constructor and not be used after.
#[no_mangle]
pub unsafe extern "C" fn ncs_system_free(sys: *mut NcsSystem) {
    if !sys.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// State dimension of `sys`.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_system_state_dim(sys: *const NcsSystem, out: *mut usize) -> NcsStatus {
    guard(|| {
        non_null(sys, "sys")?;
        non_null(out, "out")?;
        // SAFETY: both pointers checked non-null; `sys` is live per contract.
        unsafe { *out = (*sys).0.state_dim() };
        Ok(())
    })
}

/// Copies the feedback gain in row-major order into `buf`. `len` is the
/// buffer length in elements; `required` receives the element count.
///
/// # Safety
/// `sys` must be a live handle; `buf` must hold `len` doubles or be NULL;
/// `required` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ncs_system_gain(
    sys: *const NcsSystem,
    buf: *mut f64,
    len: usize,
    required: *mut usize,
) -> NcsStatus {
    guard(|| {
        non_null(sys, "sys")?;
        // SAFETY: checked non-null; live per contract.
        let gain = unsafe { (*sys).0.gain() };
        let need = gain.len();
        if !required.is_null() {
            // SAFETY: caller-supplied out pointer.
            unsafe { *required = need };
        }
        if buf.is_null() || len < need {
            return Err((NcsStatus::BufferTooSmall, format!("gain has {need} entries, buffer holds {len}")));
        }
        for (k, (i, j)) in (0..gain.nrows()).flat_map(|i| (0..gain.ncols()).map(move |j| (i, j))).enumerate() {
            // SAFETY: k < need <= len.
            unsafe { *buf.add(k) = gain[(i, j)] };
        }
        Ok(())
    })
}

/// Expected squared estimation error at age `age`.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_mse_of_age(sys: *const NcsSystem, age: u64, out: *mut f64) -> NcsStatus {
    guard(|| {
        non_null(sys, "sys")?;
        non_null(out, "out")?;
        // SAFETY: pointers checked non-null.
        unsafe { *out = mse_of_age(&(*sys).0, age) };
        Ok(())
    })
}

/// MSE at `age` divided by the MSE at age one.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_nmse_of_age(sys: *const NcsSystem, age: u64, out: *mut f64) -> NcsStatus {
    guard(|| {
        non_null(sys, "sys")?;
        non_null(out, "out")?;
        // SAFETY: pointers checked non-null.
        let v = lib(nmse_of_age(unsafe { &(*sys).0 }, age))?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Closed-form slotted-ALOHA mean AoI.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_sa_mean_aoi(n: usize, p: f64, out: *mut f64) -> NcsStatus {
    guard(|| {
        non_null(out, "out")?;
        let v = lib(sa_mean_aoi(n, p))?;
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}

/// Round-robin mean AoI, `(n + 1) / 2`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_rr_mean_aoi(n: usize, out: *mut f64) -> NcsStatus {
    guard(|| {
        non_null(out, "out")?;
        let v = lib(rr_mean_aoi(n))?;
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}

/// ADRA mean AoI at threshold `threshold` and access probability `p`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_adra_mean_aoi(n: usize, threshold: u32, p: f64, out: *mut f64) -> NcsStatus {
    guard(|| {
        non_null(out, "out")?;
        let v = lib(adra_mean_aoi(n, threshold, p))?;
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}

/// Age-optimal ADRA parameters for `n` nodes. Any out pointer may be NULL.
///
/// # Safety
/// Non-null out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ncs_optimize_adra(
    n: usize,
    threshold: *mut u32,
    p: *mut f64,
    mean_aoi: *mut f64,
) -> NcsStatus {
    guard(|| {
        let opt = lib(optimize_adra(n))?;
        // SAFETY: each pointer is written only when non-null.
        unsafe {
            if !threshold.is_null() {
                *threshold = opt.threshold;
            }
            if !p.is_null() {
                *p = opt.p;
            }
            if !mean_aoi.is_null() {
                *mean_aoi = opt.mean_aoi;
            }
        }
        Ok(())
    })
}

/// Parses a TOML experiment document. The document must name its scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_experiment_parse(toml: *const c_char, out: *mut *mut NcsExperiment) -> NcsStatus {
    guard(|| {
        non_null(out, "out")?;
        // SAFETY: string contract documented above.
        let text = unsafe { c_str(toml, "toml") }?;
        let spec = lib(parse_str(text, None))?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(NcsExperiment(spec))) };
        Ok(())
    })
}

/// Overrides the base seed and replication count; zero replications keeps
/// the parsed value.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ncs_experiment_set_seed(exp: *mut NcsExperiment, seed: u64, replications: usize) -> NcsStatus {
    guard(|| {
        non_null(exp, "exp")?;
        // SAFETY: checked non-null; live per contract.
        let spec = unsafe { &mut (*exp).0 };
        spec.seed = seed;
        if replications > 0 {
            spec.replications = replications;
        }
        Ok(())
    })
}

/// Releases an experiment handle. NULL is ignored.
///
/// # Safety
/// `exp` must come from [`ncs_experiment_parse`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn ncs_experiment_free(exp: *mut NcsExperiment) {
    if !exp.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(exp) });
    }
}

/// Runs every protocol and network size of `exp`. `jobs` of zero uses all
/// cores.
///
/// # Safety
/// `exp` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_experiment_run(
    exp: *const NcsExperiment,
    jobs: usize,
    out: *mut *mut NcsResults,
) -> NcsStatus {
    guard(|| {
        non_null(exp, "exp")?;
        non_null(out, "out")?;
        // SAFETY: checked non-null; live per contract.
        let spec = unsafe { &(*exp).0 };
        let res = lib(run_experiment(spec, (jobs > 0).then_some(jobs)))?;
        unsafe { *out = Box::into_raw(Box::new(NcsResults(res))) };
        Ok(())
    })
}

/// Number of (protocol, N) result sets.
///
/// # Safety
/// `res` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncs_results_len(res: *const NcsResults, out: *mut usize) -> NcsStatus {
    guard(|| {
        non_null(res, "res")?;
        non_null(out, "out")?;
        // SAFETY: checked non-null.
        unsafe { *out = (*res).0.sets.len() };
        Ok(())
    })
}

fn set_at(res: &NcsResults, index: usize) -> Result<&ncsim::experiment::RunSet, (NcsStatus, String)> {
    res.0
        .sets
        .get(index)
        .ok_or_else(|| (NcsStatus::InvalidArgument, format!("result index {index} out of range")))
}

/// Protocol label and network size of result set `index`. `label` receives
/// a NUL-terminated string; `required` the bytes needed.
///
/// # Safety
/// `res` must be a live handle; `label` must hold `len` bytes or be NULL;
/// `n` and `required` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ncs_results_describe(
    res: *const NcsResults,
    index: usize,
    label: *mut c_char,
    len: usize,
    required: *mut usize,
    n: *mut usize,
) -> NcsStatus {
    guard(|| {
        non_null(res, "res")?;
        // SAFETY: checked non-null; live per contract.
        let set = set_at(unsafe { &*res }, index)?;
        if !n.is_null() {
            unsafe { *n = set.n };
        }
        unsafe { write_str(&set.label(), label, len, required) }
    })
}

/// Replication mean and 99% half-width of a summary metric such as
/// `mean_aoi`, `lqg_cost`, `mean_nmse` or `fraction_hard`. The half-width
/// is NaN with a single replication.
///
/// # Safety
/// `res` must be a live handle, `metric` a NUL-terminated string, and the
/// out pointers valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn ncs_results_metric(
    res: *const NcsResults,
    index: usize,
    metric: *const c_char,
    mean: *mut f64,
    half_width: *mut f64,
) -> NcsStatus {
    guard(|| {
        non_null(res, "res")?;
        // SAFETY: checked non-null; live per contract.
        let set = set_at(unsafe { &*res }, index)?;
        let name = unsafe { c_str(metric, "metric") }?;
        let m = set
            .reps
            .metric(name)
            .ok_or_else(|| (NcsStatus::NotFound, format!("no metric named `{name}`")))?;
        unsafe {
            if !mean.is_null() {
                *mean = m.mean;
            }
            if !half_width.is_null() {
                *half_width = m.half_width.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Writes the CSV result files into directory `dir`, creating it if needed.
///
/// # Safety
/// `res` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ncs_results_write_csv(res: *const NcsResults, dir: *const c_char) -> NcsStatus {
    guard(|| {
        non_null(res, "res")?;
        let dir = unsafe { c_str(dir, "dir") }?;
        // SAFETY: checked non-null; live per contract.
        lib(emit_results(unsafe { &(*res).0 }, Path::new(dir)))?;
        Ok(())
    })
}

/// Releases a results handle. NULL is ignored.
///
/// # Safety
/// `res` must come from [`ncs_experiment_run`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn ncs_results_free(res: *mut NcsResults) {
    if !res.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(res) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping_covers_library_errors() {
        assert_eq!(status_of(&Error::Domain("x".into())), NcsStatus::Domain);
        assert_eq!(status_of(&Error::Config("x".into())), NcsStatus::Config);
    }

    #[test]
    fn short_buffers_report_the_needed_size() {
        let mut buf = [0 as c_char; 4];
        let mut need = 0;
        let err = unsafe { write_str("round_robin", buf.as_mut_ptr(), buf.len(), &mut need) }.unwrap_err();
        assert_eq!(err.0, NcsStatus::BufferTooSmall);
        assert_eq!(need, 12);
    }

    #[test]
    fn panics_become_status_codes() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, NcsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(ncs_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }
}
