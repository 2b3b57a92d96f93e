//! C ABI over `phasekit`.
//!
//! Objects are opaque handles created by `pk_*_new`/`pk_*_read`/filter calls
//! and released with the matching `pk_*_free`. Every fallible call returns a
//! [`PkStatus`]; on failure `pk_last_error()` describes the cause for the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use phasekit::filters::{boxcar_filter, goldstein_filter, BoxcarConfig, GoldsteinConfig};
use phasekit::geninsar::{coherence_from_sigma, filtered_phase, predict_full, COMBINER_CHUNK};
use phasekit::grid::{phase_to_phasor, CoherenceMap, PhaseImage};
use phasekit::mdn::{load_checkpoint, NetworkWeights};
use phasekit::metrics::{count_residues, phase_cosine_error, phase_rmse, residue_map, rrp_from_counts};
use phasekit::raster::{read_raster, write_raster, Raster};
use phasekit::simulator::{add_noise, NoiseSpec};
use phasekit::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Io = 4,
    Numeric = 5,
    Panic = 6,
}

/// Wrapped phase image.
pub struct PkPhase(PhaseImage);

/// Coherence map in [0, 1].
pub struct PkCoherence(CoherenceMap);

/// Trained filter network.
pub struct PkModel(NetworkWeights<f32>);

/// Scalar evaluation results.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PkMetrics {
    pub phase_rmse: f64,
    pub phase_cosine_error: f64,
    /// Residue reduction percentage; NaN when the noisy image has no residues.
    pub residue_reduction: f64,
    pub residues_before: u64,
    pub residues_after: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PkStatus {
    match e {
        Error::Format { .. } => PkStatus::Format,
        Error::Io { .. } => PkStatus::Io,
        Error::TrainingDiverged { .. } | Error::DegeneratePhasor { .. } => PkStatus::Numeric,
        _ => PkStatus::InvalidArgument,
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

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PkStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            PkStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            PkStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidValue("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f32], out: *mut f32, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output buffer"));
    }
    if len < src.len() {
        return Err(Error::InvalidValue(format!("buffer holds {len} values, {} needed", src.len())).into());
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `pk_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `width * height` row-major phase values (radians, wrapped on
/// input) into a new handle.
///
/// # Safety
/// `data` must point to `width * height` readable floats; `out` must be valid
/// for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_phase_new(width: usize, height: usize, data: *const f32, out: *mut *mut PkPhase) -> PkStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidValue("image size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, n);
        let img = PhaseImage::from_fn(width, height, |r, c| values[r * width + c] as f64);
        if img.data().is_empty() {
            return Err(Error::InvalidValue("image must not be empty".into()).into());
        }
        put(out, PkPhase(img))
    })
}

/// Reads a single-channel `.igrd` phase raster.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_phase_read(path: *const c_char, out: *mut *mut PkPhase) -> PkStatus {
    guard(|| {
        let img = read_raster(path_arg(path)?)?.into_wrapped_phase()?;
        put(out, PkPhase(img))
    })
}

/// # Safety
/// `phase` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pk_phase_write(phase: *const PkPhase, path: *const c_char) -> PkStatus {
    guard(|| {
        let p = handle(phase, "phase")?;
        write_raster(path_arg(path)?, &Raster::from(&p.0))?;
        Ok(())
    })
}

/// # Safety
/// `phase` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pk_phase_width(phase: *const PkPhase) -> usize {
    phase.as_ref().map_or(0, |p| p.0.width())
}

/// # Safety
/// `phase` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pk_phase_height(phase: *const PkPhase) -> usize {
    phase.as_ref().map_or(0, |p| p.0.height())
}

/// Copies the row-major values into `out`, which holds `len` floats.
///
/// # Safety
/// `phase` must be a live handle; `out` must be writable for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn pk_phase_copy(phase: *const PkPhase, out: *mut f32, len: usize) -> PkStatus {
    guard(|| copy_out(handle(phase, "phase")?.0.data(), out, len))
}

/// # Safety
/// `phase` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_phase_free(phase: *mut PkPhase) {
    if !phase.is_null() {
        drop(Box::from_raw(phase));
    }
}

/// # Safety
/// `coh` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pk_coherence_width(coh: *const PkCoherence) -> usize {
    coh.as_ref().map_or(0, |c| c.0.width())
}

/// # Safety
/// `coh` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pk_coherence_height(coh: *const PkCoherence) -> usize {
    coh.as_ref().map_or(0, |c| c.0.height())
}

/// # Safety
/// `coh` must be a live handle; `out` must be writable for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn pk_coherence_copy(coh: *const PkCoherence, out: *mut f32, len: usize) -> PkStatus {
    guard(|| copy_out(handle(coh, "coherence")?.0.data(), out, len))
}

/// # Safety
/// `coh` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pk_coherence_write(coh: *const PkCoherence, path: *const c_char) -> PkStatus {
    guard(|| {
        let c = handle(coh, "coherence")?;
        write_raster(path_arg(path)?, &Raster::from(&c.0))?;
        Ok(())
    })
}

/// # Safety
/// `coh` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_coherence_free(coh: *mut PkCoherence) {
    if !coh.is_null() {
        drop(Box::from_raw(coh));
    }
}

/// Adds Gaussian phase noise calibrated to coherence `gamma` in (0, 1].
///
/// # Safety
/// `phase` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_add_noise(phase: *const PkPhase, gamma: f64, seed: u64, out: *mut *mut PkPhase) -> PkStatus {
    guard(|| {
        let p = handle(phase, "phase")?;
        put(out, PkPhase(add_noise(&p.0, &NoiseSpec::uniform(gamma, seed))?))
    })
}

/// Boxcar filter with a `window`×`window` complex mean. `out_coh` may be NULL.
///
/// # Safety
/// `phase` must be a live handle; `out_phase` valid for a write; `out_coh`
/// NULL or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_boxcar(
    phase: *const PkPhase,
    window: usize,
    out_phase: *mut *mut PkPhase,
    out_coh: *mut *mut PkCoherence,
) -> PkStatus {
    guard(|| {
        let p = handle(phase, "phase")?;
        if out_phase.is_null() {
            return Err(Failure::Null("output phase"));
        }
        let (fp, fc) = boxcar_filter(&phase_to_phasor(&p.0), &BoxcarConfig { window })?;
        put(out_phase, PkPhase(fp))?;
        if !out_coh.is_null() {
            put(out_coh, PkCoherence(fc))?;
        }
        Ok(())
    })
}

/// Goldstein spectral filter (phase only).
///
/// # Safety
/// `phase` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_goldstein(
    phase: *const PkPhase,
    patch: usize,
    overlap: usize,
    alpha: f64,
    out: *mut *mut PkPhase,
) -> PkStatus {
    guard(|| {
        let p = handle(phase, "phase")?;
        let cfg = GoldsteinConfig {
            patch,
            overlap,
            alpha,
            ..GoldsteinConfig::default()
        };
        put(out, PkPhase(goldstein_filter(&phase_to_phasor(&p.0), &cfg)?))
    })
}

/// Loads an `IMDN` checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_model_load(path: *const c_char, out: *mut *mut PkModel) -> PkStatus {
    guard(|| put(out, PkModel(load_checkpoint(&path_arg(path)?)?.weights)))
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_model_free(model: *mut PkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Network filter: filtered phase and, if `out_coh` is not NULL, coherence.
///
/// # Safety
/// `model` and `phase` must be live handles; `out_phase` valid for a write;
/// `out_coh` NULL or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_model_filter(
    model: *const PkModel,
    phase: *const PkPhase,
    out_phase: *mut *mut PkPhase,
    out_coh: *mut *mut PkCoherence,
) -> PkStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let p = handle(phase, "phase")?;
        if out_phase.is_null() {
            return Err(Failure::Null("output phase"));
        }
        let field = predict_full(&m.0, &phase_to_phasor(&p.0), COMBINER_CHUNK)?;
        put(out_phase, PkPhase(filtered_phase(&field).0))?;
        if !out_coh.is_null() {
            put(out_coh, PkCoherence(coherence_from_sigma(&field)))?;
        }
        Ok(())
    })
}

/// Phase metrics of `filtered` against `truth`, with residues counted on
/// `noisy` and `filtered`.
///
/// # Safety
/// All handles must be live; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pk_metrics(
    truth: *const PkPhase,
    noisy: *const PkPhase,
    filtered: *const PkPhase,
    out: *mut PkMetrics,
) -> PkStatus {
    guard(|| {
        let t = &handle(truth, "truth")?.0;
        let n = &handle(noisy, "noisy")?.0;
        let f = &handle(filtered, "filtered")?.0;
        if out.is_null() {
            return Err(Failure::Null("metrics"));
        }
        if n.dims() != f.dims() {
            return Err(Error::Shape("noisy and filtered sizes differ".into()).into());
        }
        let before = count_residues(&residue_map(n)?);
        let after = count_residues(&residue_map(f)?);
        *out = PkMetrics {
            phase_rmse: phase_rmse(t, f)?,
            phase_cosine_error: phase_cosine_error(t, f)?,
            residue_reduction: rrp_from_counts(before, after).unwrap_or(f64::NAN),
            residues_before: before as u64,
            residues_after: after as u64,
        };
        Ok(())
    })
}
