//! C ABI over `cqed-chip`.
//!
//! Every fallible function returns a [`CqedStatus`]. On failure a message
//! is kept per thread and can be read with [`cqed_last_error`]. Scenarios
//! and traces are opaque heap handles released by their `_free` function.
//! Panics never cross the boundary; they come back as `CQED_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cqed_chip::config::{ConfigDocument, ResolvedConfig};
use cqed_chip::magnetics::{waveguide_field_and_gradient, Wire, WireSet};
use cqed_chip::optics::{fit_mirror_radius, CavitySpec, FinesseSample};
use cqed_chip::servo::{run_scenario, Trace};
use cqed_chip::Error;

/// Status codes. 2, 3 and 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqedStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidInput = 2,
    InsufficientData = 3,
    Numerical = 4,
    Panic = 5,
}

impl From<&Error> for CqedStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            3 => CqedStatus::InsufficientData,
            4 => CqedStatus::Numerical,
            _ => CqedStatus::InvalidInput,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Run `f`, translating errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CqedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CqedStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer passed for {what}"));
            CqedStatus::NullArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            CqedStatus::from(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            CqedStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Core(Error::InvalidInput(format!("{what} is not valid UTF-8"))))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cqed_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cqed_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cqed_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------- optics

/// Cavity geometry, SI units.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqedCavitySpec {
    pub length_m: f64,
    pub curved_mirror_roc_m: f64,
    pub wavelength_m: f64,
    pub aperture_radius_m: f64,
    pub loss_chip: f64,
    pub loss_curved: f64,
}

impl From<CqedCavitySpec> for CavitySpec {
    fn from(c: CqedCavitySpec) -> Self {
        CavitySpec {
            length: c.length_m,
            curved_mirror_roc: c.curved_mirror_roc_m,
            wavelength: c.wavelength_m,
            aperture_radius: c.aperture_radius_m,
            loss_chip: c.loss_chip,
            loss_curved: c.loss_curved,
        }
    }
}

impl From<CavitySpec> for CqedCavitySpec {
    fn from(c: CavitySpec) -> Self {
        CqedCavitySpec {
            length_m: c.length,
            curved_mirror_roc_m: c.curved_mirror_roc,
            wavelength_m: c.wavelength,
            aperture_radius_m: c.aperture_radius,
            loss_chip: c.loss_chip,
            loss_curved: c.loss_curved,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CqedCavityDerived {
    pub waist_m: f64,
    pub diffraction_loss: f64,
    pub round_trip_loss: f64,
    pub finesse: f64,
    pub fsr_hz: f64,
    pub linewidth_hz: f64,
    pub cooperativity: f64,
    pub displacement_per_linewidth_m: f64,
}

/// Fill `out` with the default cavity.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one spec.
#[no_mangle]
pub unsafe extern "C" fn cqed_cavity_default(out: *mut CqedCavitySpec) -> CqedStatus {
    guard(|| {
        *self::out(out, "out")? = CavitySpec::default().into();
        Ok(())
    })
}

/// Derive mode waist, losses, finesse, linewidth and cooperativity.
///
/// # Safety
/// `spec` and `out` must be NULL or valid for one struct each.
#[no_mangle]
pub unsafe extern "C" fn cqed_cavity_derive(spec: *const CqedCavitySpec, out: *mut CqedCavityDerived) -> CqedStatus {
    guard(|| {
        let spec: CavitySpec = (*deref(spec, "spec")?).into();
        let out = self::out(out, "out")?;
        let d = spec.derive()?;
        *out = CqedCavityDerived {
            waist_m: d.waist,
            diffraction_loss: d.diffraction_loss,
            round_trip_loss: d.round_trip_loss,
            finesse: d.finesse,
            fsr_hz: d.fsr,
            linewidth_hz: d.linewidth_fwhm,
            cooperativity: d.cooperativity,
            displacement_per_linewidth_m: d.displacement_per_linewidth,
        };
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CqedRadiusFit {
    pub aperture_radius_m: f64,
    pub fixed_loss: f64,
    pub chi_squared: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Fit the effective mirror radius to finesse against length.
/// `sigma` may be NULL; then every point gets a 5% uncertainty.
/// `residuals`, when not NULL, receives `n` normalized residuals.
///
/// # Safety
/// `length_m`, `finesse` and (if given) `sigma` and `residuals` must hold
/// `n` doubles. `out` must be valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn cqed_fit_radius(
    length_m: *const f64,
    finesse: *const f64,
    sigma: *const f64,
    n: usize,
    roc_m: f64,
    wavelength_m: f64,
    out: *mut CqedRadiusFit,
    residuals: *mut f64,
) -> CqedStatus {
    guard(|| {
        let l = slice(length_m, n, "length_m")?;
        let f = slice(finesse, n, "finesse")?;
        let s = if sigma.is_null() { None } else { Some(slice(sigma, n, "sigma")?) };
        let out = self::out(out, "out")?;
        let samples: Vec<FinesseSample> = (0..n)
            .map(|i| FinesseSample { length: l[i], finesse: f[i], finesse_uncertainty: s.map(|s| s[i]) })
            .collect();
        let fit = fit_mirror_radius(&samples, roc_m, wavelength_m)?;
        *out = CqedRadiusFit {
            aperture_radius_m: fit.aperture_radius,
            fixed_loss: fit.fixed_loss,
            chi_squared: fit.chi_squared,
            iterations: fit.iterations as u64,
            converged: fit.converged,
        };
        if !residuals.is_null() {
            std::slice::from_raw_parts_mut(residuals, n).copy_from_slice(&fit.residuals);
        }
        Ok(())
    })
}

// ------------------------------------------------------------- magnetics

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqedWire {
    pub x_m: f64,
    pub z_m: f64,
    pub current_a: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CqedFieldGradient {
    /// Bx, By, Bz in tesla.
    pub field_t: [f64; 3],
    /// d(Bx, Bz)/d(x, z) in T/m, row-major.
    pub gradient_t_per_m: [f64; 4],
    pub magnitude_t: f64,
    pub transverse_gradient_t_per_m: f64,
}

/// Field and gradient of straight wires along y plus a uniform bias.
/// `bias_t` may be NULL for no bias.
///
/// # Safety
/// `wires` must hold `n_wires` entries, `bias_t` three doubles, `out` one struct.
#[no_mangle]
pub unsafe extern "C" fn cqed_wire_field(
    wires: *const CqedWire,
    n_wires: usize,
    bias_t: *const f64,
    x_m: f64,
    z_m: f64,
    out: *mut CqedFieldGradient,
) -> CqedStatus {
    guard(|| {
        let wires = slice(wires, n_wires, "wires")?;
        let bias = if bias_t.is_null() { [0.0; 3] } else { slice(bias_t, 3, "bias_t")?.try_into().unwrap() };
        let out = self::out(out, "out")?;
        let ws = WireSet {
            wires: wires.iter().map(|w| Wire { x: w.x_m, z: w.z_m, current: w.current_a }).collect(),
            bias_field: bias,
        };
        let g = waveguide_field_and_gradient(&ws, [x_m, z_m])?;
        *out = CqedFieldGradient {
            field_t: g.field,
            gradient_t_per_m: [g.gradient[0][0], g.gradient[0][1], g.gradient[1][0], g.gradient[1][1]],
            magnitude_t: g.magnitude(),
            transverse_gradient_t_per_m: g.transverse_gradient(),
        };
        Ok(())
    })
}

// --------------------------------------------------------- scenario/trace

/// Opaque resolved scenario.
pub struct CqedScenario(ResolvedConfig);

/// Opaque simulation trace.
pub struct CqedTrace(Trace);

fn boxed<T>(v: T, out: &mut *mut T) {
    *out = Box::into_raw(Box::new(v));
}

/// Parse a TOML scenario; missing sections take defaults.
///
/// # Safety
/// `toml` must be NULL or NUL-terminated; `out` must be valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cqed_scenario_parse(toml: *const c_char, out: *mut *mut CqedScenario) -> CqedStatus {
    guard(|| {
        let text = string(toml, "toml")?;
        let out = self::out(out, "out")?;
        boxed(CqedScenario(ConfigDocument::parse(text)?.resolve()?), out);
        Ok(())
    })
}

/// Load a TOML scenario from a file.
///
/// # Safety
/// As for [`cqed_scenario_parse`].
#[no_mangle]
pub unsafe extern "C" fn cqed_scenario_load(path: *const c_char, out: *mut *mut CqedScenario) -> CqedStatus {
    guard(|| {
        let path = string(path, "path")?;
        let out = self::out(out, "out")?;
        boxed(CqedScenario(cqed_chip::config::load_scenario(Path::new(path))?), out);
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn cqed_scenario_free(s: *mut CqedScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Fully filled TOML for the scenario. Free with [`cqed_string_free`].
///
/// # Safety
/// `s` must be a live handle; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cqed_scenario_to_toml(s: *const CqedScenario, out: *mut *mut c_char) -> CqedStatus {
    guard(|| {
        let s = deref(s, "scenario")?;
        let out = self::out(out, "out")?;
        let text = s.0.document.to_toml()?;
        *out = CString::new(text).map_err(|e| Error::InvalidInput(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Run the closed-loop simulation.
///
/// # Safety
/// `s` must be a live handle; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cqed_scenario_run(s: *const CqedScenario, out: *mut *mut CqedTrace) -> CqedStatus {
    guard(|| {
        let s = deref(s, "scenario")?;
        let out = self::out(out, "out")?;
        boxed(CqedTrace(run_scenario(&s.0.scenario)?), out);
        Ok(())
    })
}

/// # Safety
/// `t` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn cqed_trace_free(t: *mut CqedTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn cqed_trace_len(t: *const CqedTrace) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqedTraceColumn {
    TimeS = 0,
    OffsetHz = 1,
    PztV = 2,
    HeaterW = 3,
    RtdK = 4,
    Transmission = 5,
}

/// Borrow one column. `*data` stays valid while the trace lives.
///
/// # Safety
/// `t` must be a live handle; `data` and `len` valid for one value each.
/// Unknown `column` values give `CQED_ERR_INVALID_INPUT`.
#[no_mangle]
pub unsafe extern "C" fn cqed_trace_column(
    t: *const CqedTrace,
    column: u32,
    data: *mut *const f64,
    len: *mut usize,
) -> CqedStatus {
    guard(|| {
        let t = &deref(t, "trace")?.0;
        let data = out(data, "data")?;
        let len = out(len, "len")?;
        let v = match column {
            c if c == CqedTraceColumn::TimeS as u32 => &t.t,
            c if c == CqedTraceColumn::OffsetHz as u32 => &t.offset,
            c if c == CqedTraceColumn::PztV as u32 => &t.pzt,
            c if c == CqedTraceColumn::HeaterW as u32 => &t.heater,
            c if c == CqedTraceColumn::RtdK as u32 => &t.rtd,
            c if c == CqedTraceColumn::Transmission as u32 => &t.transmission,
            c => return Err(Error::InvalidInput(format!("unknown trace column {c}")).into()),
        };
        *data = v.as_ptr();
        *len = v.len();
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CqedTraceSummary {
    pub peak_abs_offset_hz: f64,
    pub peak_time_s: f64,
    pub linewidth_hz: f64,
    pub time_above_linewidth_s: f64,
    pub longest_above_linewidth_s: f64,
    pub settling_time_s: f64,
    pub rms_after_settling_hz: f64,
    pub unsampled_peak_abs_offset_hz: f64,
}

/// # Safety
/// `t` must be a live handle; `out` valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn cqed_trace_summary(t: *const CqedTrace, out: *mut CqedTraceSummary) -> CqedStatus {
    guard(|| {
        let t = &deref(t, "trace")?.0;
        let out = self::out(out, "out")?;
        let s = &t.summary;
        *out = CqedTraceSummary {
            peak_abs_offset_hz: s.peak_abs_offset_hz,
            peak_time_s: s.peak_time_s,
            linewidth_hz: s.linewidth_hz,
            time_above_linewidth_s: s.time_above_linewidth_s,
            longest_above_linewidth_s: s.longest_above_linewidth_s,
            settling_time_s: s.settling_time_s,
            rms_after_settling_hz: s.rms_after_settling_hz,
            unsampled_peak_abs_offset_hz: t.unsampled_peak_abs_offset_hz,
        };
        Ok(())
    })
}
