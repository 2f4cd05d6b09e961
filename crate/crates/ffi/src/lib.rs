//! C ABI for `fringecorr`.
//!
//! Objects cross the boundary as opaque handles (`FcEventSet`, `FcGrid`,
//! `FcPerturbation`) created by `fc_*` constructors and released with the
//! matching `*_free`. Every fallible call returns an [`FcStatus`]; on failure
//! [`fc_last_error_message`] describes the error for the calling thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fringecorr::analytic::{default_m_max, g2_approx, reduced_contrast};
use fringecorr::bessel::bessel_j;
use fringecorr::correlator::{correlate, CorrelatorOptions};
use fringecorr::inference::{fit_fringe_at_tau0, histogram_contrast, reconstruct};
use fringecorr::simulator::{simulate, Perturbation, SimulationConfig};
use fringecorr::{io, CorrelationGrid, Error, EventSet, FringeModel, PerturbationSpec, ToneComponent};

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Parse = 4,
    Io = 5,
    Panic = 6,
}

impl From<&Error> for FcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Config { .. } | Error::KernelBudget { .. } => FcStatus::InvalidInput,
            Error::Numerical(_) => FcStatus::Numerical,
            Error::Parse { .. } => FcStatus::Parse,
            Error::Io { .. } => FcStatus::Io,
        }
    }
}

/// Time-sorted detector events.
pub struct FcEventSet(EventSet);

/// Normalized `g²(u, τ)` grid with its pair counts.
pub struct FcGrid(CorrelationGrid);

/// Tone list `φ(t) = Σ φ_j cos(2π f_j t + θ_j)`.
pub struct FcPerturbation(PerturbationSpec);

/// Fringe parameters of `g²(u, 0)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FcFringeFit {
    pub contrast_g2: f64,
    pub contrast_g2_se: f64,
    /// Period in mm.
    pub period_g2: f64,
    pub period_g2_se: f64,
    pub phase_offset: f64,
    pub baseline: f64,
    pub residual_rms: f64,
    /// Nonzero when the fringe amplitude is not distinguishable from noise.
    pub below_noise_floor: c_int,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FcStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            FcStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            FcStatus::from(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn path_arg(p: *const c_char, name: &'static str) -> Result<PathBuf, Failure> {
    let s = deref(p, name).map(|_| CStr::from_ptr(p))?;
    let s = s.to_str().map_err(|_| Error::invalid(format!("`{name}` is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(std::slice::from_raw_parts(deref(p, name)?, len))
}

unsafe fn spec_or_empty(p: *const FcPerturbation) -> PerturbationSpec {
    p.as_ref().map(|p| p.0.clone()).unwrap_or_default()
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the last failed call on this thread, or NULL after a
/// successful call. The pointer stays valid until the next `fc_*` call on
/// the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- perturbation

/// Builds a tone list from parallel arrays: frequencies in Hz, peak phase
/// deviations and phases in radians. `n` may be zero.
///
/// # Safety
/// Each array must hold `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_perturbation_new(
    frequencies_hz: *const f64,
    amplitudes: *const f64,
    phases: *const f64,
    n: usize,
    out_handle: *mut *mut FcPerturbation,
) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let (f, a, p) = (
            slice(frequencies_hz, n, "frequencies_hz")?,
            slice(amplitudes, n, "amplitudes")?,
            slice(phases, n, "phases")?,
        );
        let tones = (0..n).map(|i| ToneComponent::new(fringecorr::units::hz_to_angular(f[i]), a[i], p[i])).collect();
        *out_handle = boxed(FcPerturbation(PerturbationSpec::new(tones)?));
        Ok(())
    })
}

/// Parses `"HZ:AMP:PHASE;HZ:AMP:PHASE"` with angles in radians or multiples
/// of π (`"0.4pi"`).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_perturbation_parse(text: *const c_char, out_handle: *mut *mut FcPerturbation) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let text = CStr::from_ptr(deref(text, "text")?);
        let text = text.to_str().map_err(|_| Error::invalid("tone text is not valid UTF-8"))?;
        *out_handle = boxed(FcPerturbation(PerturbationSpec::parse(text)?));
        Ok(())
    })
}

/// Number of tones; 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_perturbation_len(p: *const FcPerturbation) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// `φ(t)` in radians; NaN for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_perturbation_evaluate(p: *const FcPerturbation, t: f64) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.0.evaluate(t))
}

/// # Safety
/// `p` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_perturbation_free(p: *mut FcPerturbation) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

// ---------------------------------------------------------------- events

/// Simulates `n_events` arrivals at `count_rate_hz` on a fringe of the given
/// contrast and period (mm) over a detector of `acquisition_length_mm`.
/// `perturbation` may be NULL for an unperturbed pattern.
///
/// # Safety
/// `perturbation` must be NULL or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulate(
    contrast: f64,
    period_mm: f64,
    perturbation: *const FcPerturbation,
    n_events: usize,
    count_rate_hz: f64,
    acquisition_length_mm: f64,
    seed: u64,
    out_handle: *mut *mut FcEventSet,
) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let cfg = SimulationConfig {
            model: FringeModel::new(contrast, period_mm)?,
            perturbation: Perturbation::Tones(spec_or_empty(perturbation)),
            n_events,
            count_rate: count_rate_hz,
            acquisition_length: acquisition_length_mm,
            seed,
        };
        *out_handle = boxed(FcEventSet(simulate(&cfg)?));
        Ok(())
    })
}

/// Builds an event set from parallel columns (seconds, millimetres).
///
/// # Safety
/// `t` and `y` must each hold `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_events_from_columns(
    t: *const f64,
    y: *const f64,
    n: usize,
    acquisition_time_s: f64,
    acquisition_length_mm: f64,
    out_handle: *mut *mut FcEventSet,
) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let (t, y) = (slice(t, n, "t")?.to_vec(), slice(y, n, "y")?.to_vec());
        *out_handle = boxed(FcEventSet(EventSet::from_columns(t, y, acquisition_time_s, acquisition_length_mm)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_events_load(path: *const c_char, out_handle: *mut *mut FcEventSet) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        *out_handle = boxed(FcEventSet(io::read_events(&path_arg(path, "path")?)?));
        Ok(())
    })
}

/// Writes the event file and its metadata sidecar.
///
/// # Safety
/// `events` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_events_save(events: *const FcEventSet, path: *const c_char) -> FcStatus {
    guard(|| {
        io::write_events(&path_arg(path, "path")?, &deref(events, "events")?.0)?;
        Ok(())
    })
}

/// Number of events; 0 for NULL.
///
/// # Safety
/// `events` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_events_len(events: *const FcEventSet) -> usize {
    events.as_ref().map_or(0, |e| e.0.len())
}

/// Acquisition time T in seconds; NaN for NULL.
///
/// # Safety
/// `events` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_events_acquisition_time(events: *const FcEventSet) -> f64 {
    events.as_ref().map_or(f64::NAN, |e| e.0.acquisition_time())
}

/// Acquisition length Y in mm; NaN for NULL.
///
/// # Safety
/// `events` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_events_acquisition_length(events: *const FcEventSet) -> f64 {
    events.as_ref().map_or(f64::NAN, |e| e.0.acquisition_length())
}

/// Copies the time and position columns into caller buffers of `capacity`
/// values each. Either buffer may be NULL to skip it. Fails without writing
/// if the capacity is smaller than [`fc_events_len`].
///
/// # Safety
/// `events` must be a live handle; non-NULL buffers must hold `capacity`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn fc_events_copy(
    events: *const FcEventSet,
    t_out: *mut f64,
    y_out: *mut f64,
    capacity: usize,
) -> FcStatus {
    guard(|| {
        let events = &deref(events, "events")?.0;
        if capacity < events.len() {
            return Err(Error::invalid(format!("buffer holds {capacity} values, {} needed", events.len())).into());
        }
        for (buf, src) in [(t_out, events.times()), (y_out, events.positions())] {
            if !buf.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
            }
        }
        Ok(())
    })
}

/// Contrast of the position histogram for a known period (mm).
///
/// # Safety
/// `events` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_events_histogram_contrast(
    events: *const FcEventSet,
    period_mm: f64,
    out_contrast: *mut f64,
) -> FcStatus {
    guard(|| {
        let out_contrast = out(out_contrast, "out")?;
        *out_contrast = histogram_contrast(&deref(events, "events")?.0, period_mm)?;
        Ok(())
    })
}

/// Removes a known perturbation: `y → y + (λ/2π) φ(t)`, folded back into
/// the window.
///
/// # Safety
/// `events` and `perturbation` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_reconstruct(
    events: *const FcEventSet,
    period_mm: f64,
    perturbation: *const FcPerturbation,
    out_handle: *mut *mut FcEventSet,
) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let events = &deref(events, "events")?.0;
        let spec = &deref(perturbation, "perturbation")?.0;
        *out_handle = boxed(FcEventSet(reconstruct(events, period_mm, spec)?));
        Ok(())
    })
}

/// # Safety
/// `events` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_events_free(events: *mut FcEventSet) {
    if !events.is_null() {
        drop(Box::from_raw(events));
    }
}

// ---------------------------------------------------------------- grid

/// Counts event pairs into `(u, τ)` bins and normalizes them. Ranges round
/// up to whole bins; `workers = 0` uses every available thread. The result
/// does not depend on `workers`.
///
/// # Safety
/// `events` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_correlate(
    events: *const FcEventSet,
    du_mm: f64,
    dtau_s: f64,
    tau_max_s: f64,
    u_max_mm: f64,
    workers: usize,
    out_handle: *mut *mut FcGrid,
) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let opts = CorrelatorOptions::new(du_mm, dtau_s, tau_max_s, u_max_mm).with_workers(workers);
        *out_handle = boxed(FcGrid(correlate(&deref(events, "events")?.0, &opts)?));
        Ok(())
    })
}

/// Reads a text or binary (`.fcg`) grid file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_load(path: *const c_char, out_handle: *mut *mut FcGrid) -> FcStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        *out_handle = boxed(FcGrid(io::read_grid(&path_arg(path, "path")?)?));
        Ok(())
    })
}

/// Writes a grid; the encoding follows the extension (`.fcg` is binary).
///
/// # Safety
/// `grid` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_save(grid: *const FcGrid, path: *const c_char) -> FcStatus {
    guard(|| {
        io::write_grid(&path_arg(path, "path")?, &deref(grid, "grid")?.0)?;
        Ok(())
    })
}

/// Bin counts along u and τ.
///
/// # Safety
/// `grid` must be a live handle; `n_u` and `n_tau` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_shape(grid: *const FcGrid, n_u: *mut usize, n_tau: *mut usize) -> FcStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        *out(n_u, "n_u")? = g.n_u;
        *out(n_tau, "n_tau")? = g.n_tau;
        Ok(())
    })
}

/// Bin sizes and ranges: `du` (mm), `dtau` (s), `u_max` (mm), `tau_max` (s).
///
/// # Safety
/// `grid` must be a live handle; all outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_geometry(
    grid: *const FcGrid,
    du_mm: *mut f64,
    dtau_s: *mut f64,
    u_max_mm: *mut f64,
    tau_max_s: *mut f64,
) -> FcStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        *out(du_mm, "du")? = g.du;
        *out(dtau_s, "dtau")? = g.dtau;
        *out(u_max_mm, "u_max")? = g.u_max;
        *out(tau_max_s, "tau_max")? = g.tau_max;
        Ok(())
    })
}

/// `g²` at bin `(iu, itau)` and its pair count. Invalid bins near the window
/// edge report 0 with `valid = 0`.
///
/// # Safety
/// `grid` must be a live handle; `value` must be writable; `count` and
/// `valid` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_bin(
    grid: *const FcGrid,
    iu: usize,
    itau: usize,
    value: *mut f64,
    count: *mut u64,
    valid: *mut c_int,
) -> FcStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        if iu >= g.n_u || itau >= g.n_tau {
            return Err(Error::invalid(format!("bin ({iu}, {itau}) outside {} x {}", g.n_u, g.n_tau)).into());
        }
        *out(value, "value")? = g.value(iu, itau);
        if let Some(c) = count.as_mut() {
            *c = g.count(iu, itau);
        }
        if let Some(v) = valid.as_mut() {
            *v = c_int::from(g.is_valid(iu, itau));
        }
        Ok(())
    })
}

/// Copies all values, row-major over `[iu][itau]`, into a buffer of
/// `capacity` values.
///
/// # Safety
/// `grid` must be a live handle; `values` must hold `capacity` writable
/// values.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_copy_values(grid: *const FcGrid, values: *mut f64, capacity: usize) -> FcStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        let dst = out(values, "values")?;
        if capacity < g.values.len() {
            return Err(Error::invalid(format!("buffer holds {capacity} values, {} needed", g.values.len())).into());
        }
        ptr::copy_nonoverlapping(g.values.as_ptr(), dst, g.values.len());
        Ok(())
    })
}

/// Fits `b + (K²/2) cos(k u + ψ)` at `τ = 0`.
///
/// # Safety
/// `grid` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_fit_fringe(grid: *const FcGrid, out_fit: *mut FcFringeFit) -> FcStatus {
    guard(|| {
        let out_fit = out(out_fit, "out")?;
        let f = fit_fringe_at_tau0(&deref(grid, "grid")?.0)?;
        *out_fit = FcFringeFit {
            contrast_g2: f.contrast_g2,
            contrast_g2_se: f.contrast_g2_se,
            period_g2: f.period_g2,
            period_g2_se: f.period_g2_se,
            phase_offset: f.phase_offset,
            baseline: f.baseline,
            residual_rms: f.residual_rms,
            below_noise_floor: c_int::from(f.below_noise_floor),
        };
        Ok(())
    })
}

/// # Safety
/// `grid` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_grid_free(grid: *mut FcGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

// ---------------------------------------------------------------- analytic

/// Time-averaged contrast `K Π J₀(φ_j)` of the perturbed pattern.
/// `perturbation` may be NULL.
///
/// # Safety
/// `perturbation` must be NULL or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_reduced_contrast(
    contrast: f64,
    period_mm: f64,
    perturbation: *const FcPerturbation,
    out_contrast: *mut f64,
) -> FcStatus {
    guard(|| {
        let out_contrast = out(out_contrast, "out")?;
        *out_contrast = reduced_contrast(&FringeModel::new(contrast, period_mm)?, &spec_or_empty(perturbation));
        Ok(())
    })
}

/// Approximate correlation function `g²(u, τ)` (trivial multiplets only),
/// with the default Bessel truncation. `perturbation` may be NULL.
///
/// # Safety
/// `perturbation` must be NULL or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_g2_approx(
    contrast: f64,
    period_mm: f64,
    perturbation: *const FcPerturbation,
    u_mm: f64,
    tau_s: f64,
    out_value: *mut f64,
) -> FcStatus {
    guard(|| {
        let out_value = out(out_value, "out")?;
        let spec = spec_or_empty(perturbation);
        let model = FringeModel::new(contrast, period_mm)?;
        *out_value = g2_approx(u_mm, tau_s, &model, &spec, default_m_max(&spec));
        Ok(())
    })
}

/// Bessel function of the first kind `J_n(x)` for integer order.
#[no_mangle]
pub extern "C" fn fc_bessel_j(n: c_int, x: f64) -> f64 {
    bessel_j(n, x)
}
