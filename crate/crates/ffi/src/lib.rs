//! C ABI for the freqmux simulator.
//!
//! Every function returns an [`FmStatus`]. On failure the message is kept in a
//! thread-local slot readable through [`fm_last_error`]. Objects are passed as
//! opaque handles that must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use freqmux::feedforward::simulate_feedforward_stream;
use freqmux::heralded::{gvd_parameter, purity_integral, HeraldedStateModel};
use freqmux::loss::{arm_efficiency, Arm, DetectorCase, LossTable};
use freqmux::scenario::ScenarioConfig;
use freqmux::serrodyne::{phase_jitter_purity, ShifterModel};
use freqmux::statistics::{analytic_counting, hom_visibility, monte_carlo_counting, MultiplexedStatisticsModel};
use freqmux::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    NotConverged = 4,
    Numeric = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmArm {
    Signal = 0,
    Herald = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmDetectorCase {
    Best = 0,
    Worst = 1,
}

/// Counting probabilities. Standard errors are zero for closed-form results.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FmCounting {
    pub p_h: f64,
    pub p_s: f64,
    pub p_sh: f64,
    pub g2_h: f64,
    pub se_p_sh: f64,
    pub se_g2_h: f64,
}

/// Scenario configuration.
pub struct FmConfig(ScenarioConfig);

/// Heralded-state model used by the purity integral.
pub struct FmStateModel(HeraldedStateModel);

/// Serrodyne frequency shifter.
pub struct FmShifter(ShifterModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FmStatus {
    match e {
        Error::InvalidParameter { .. }
        | Error::GridTooNarrow { .. }
        | Error::ZeroOverlap
        | Error::VacuousEvent { .. }
        | Error::ExpansionDomain { .. }
        | Error::Parse { .. } => FmStatus::InvalidArgument,
        Error::OutOfRange { .. } | Error::Overdrive { .. } => FmStatus::OutOfRange,
        Error::NotConverged { .. } => FmStatus::NotConverged,
        Error::ZeroEvidence | Error::DivisionByZero(_) | Error::Numeric(_) => FmStatus::Numeric,
        Error::Config(_) => FmStatus::Config,
        Error::Io(_) => FmStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (FmStatus, String)>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FmStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (FmStatus, String)>;
}

impl<T> IntoFfi<T> for freqmux::Result<T> {
    fn ffi(self) -> Result<T, (FmStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(name: &str) -> (FmStatus, String) {
    (FmStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn out<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, (FmStatus, String)> {
    ptr.as_mut().ok_or_else(|| null(name))
}

unsafe fn get<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, (FmStatus, String)> {
    ptr.as_ref().ok_or_else(|| null(name))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default scenario configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_config_default(out: *mut *mut FmConfig) -> FmStatus {
    guard(|| {
        *out_ptr(out)? = Box::into_raw(Box::new(FmConfig(ScenarioConfig::default())));
        Ok(())
    })
}

/// Parses a TOML configuration. Missing keys take their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_config_from_toml(toml: *const c_char, out: *mut *mut FmConfig) -> FmStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| (FmStatus::InvalidArgument, "configuration is not UTF-8".to_string()))?;
        let config = ScenarioConfig::from_toml(text).ffi()?;
        *slot = Box::into_raw(Box::new(FmConfig(config)));
        Ok(())
    })
}

unsafe fn out_ptr<'a, T>(out: *mut *mut T) -> Result<&'a mut *mut T, (FmStatus, String)> {
    out.as_mut().ok_or_else(|| null("out"))
}

/// # Safety
/// `config` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fm_config_free(config: *mut FmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// # Safety
/// `config` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn fm_config_set_seed(config: *mut FmConfig, seed: u64) -> FmStatus {
    guard(|| {
        out(config, "config")?.0.seed = seed;
        Ok(())
    })
}

/// State model from a configuration with the given spectrometer uncertainty
/// (frequency FWHM, GHz), ideal-detection flag and GVD parameter γ (s²).
///
/// # Safety
/// `config` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_state_model_new(
    config: *const FmConfig,
    uncertainty_fwhm_ghz: f64,
    ideal: bool,
    gamma: f64,
    out: *mut *mut FmStateModel,
) -> FmStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let c = get(config, "config")?;
        let m = c.0.state_model_with(uncertainty_fwhm_ghz, ideal, gamma).ffi()?;
        *slot = Box::into_raw(Box::new(FmStateModel(m)));
        Ok(())
    })
}

/// State model for the configuration as written.
///
/// # Safety
/// `config` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_state_model_from_config(config: *const FmConfig, out: *mut *mut FmStateModel) -> FmStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let m = get(config, "config")?.0.state_model().ffi()?;
        *slot = Box::into_raw(Box::new(FmStateModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fm_state_model_free(model: *mut FmStateModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Tr ρ² of the heralded signal state.
///
/// # Safety
/// `model` must be a valid handle and `purity` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_purity(model: *const FmStateModel, purity: *mut f64) -> FmStatus {
    guard(|| {
        let dst = out(purity, "purity")?;
        *dst = purity_integral(&get(model, "model")?.0).ffi()?;
        Ok(())
    })
}

/// GVD parameter in s² for dispersion D (ps/(nm·km)), length (m) and
/// wavelength (m).
///
/// # Safety
/// `gamma` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_gvd_parameter(
    dispersion_ps_nm_km: f64,
    length_m: f64,
    wavelength_m: f64,
    gamma: *mut f64,
) -> FmStatus {
    guard(|| {
        let dst = out(gamma, "gamma")?;
        *dst = gvd_parameter(dispersion_ps_nm_km, length_m, wavelength_m).ffi()?;
        Ok(())
    })
}

/// Shifter whose full drive gives `max_shift_hz`. Jitter in seconds.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_shifter_new(
    v_pi: f64,
    nu_rf_hz: f64,
    max_shift_hz: f64,
    sigma_jitter_s: f64,
    out: *mut *mut FmShifter,
) -> FmStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let m = ShifterModel::with_max_shift(v_pi, nu_rf_hz, max_shift_hz, sigma_jitter_s).ffi()?;
        *slot = Box::into_raw(Box::new(FmShifter(m)));
        Ok(())
    })
}

/// # Safety
/// `shifter` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fm_shifter_free(shifter: *mut FmShifter) {
    if !shifter.is_null() {
        drop(Box::from_raw(shifter));
    }
}

/// Signed frequency shift in Hz for drive amplitude `v0` (V).
///
/// # Safety
/// `shifter` must be a valid handle and `shift_hz` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_shift(shifter: *const FmShifter, v0: f64, shift_hz: *mut f64) -> FmStatus {
    guard(|| {
        let dst = out(shift_hz, "shift_hz")?;
        *dst = get(shifter, "shifter")?.0.shift_magnitude(v0).ffi()?;
        Ok(())
    })
}

/// Purity after a shift of `shift_hz` applied by a drive with timing jitter
/// `sigma_jitter_s` to a pulse of amplitude spectral std `sigma` (rad/s).
///
/// # Safety
/// `shifter` must be a valid handle and `purity` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_phase_jitter_purity(
    shifter: *const FmShifter,
    sigma_jitter_s: f64,
    sigma: f64,
    shift_hz: f64,
    purity: *mut f64,
) -> FmStatus {
    guard(|| {
        let dst = out(purity, "purity")?;
        *dst = phase_jitter_purity(sigma_jitter_s, sigma, shift_hz, &get(shifter, "shifter")?.0).ffi()?;
        Ok(())
    })
}

/// Counting statistics. `pulses == 0` selects the closed-form expansion,
/// otherwise a Monte Carlo run with `seed`.
///
/// # Safety
/// `result` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_counting(
    n_modes: u32,
    mu: f64,
    eta_s: f64,
    eta_h: f64,
    multiplexed: bool,
    pulses: u64,
    seed: u64,
    result: *mut FmCounting,
) -> FmStatus {
    guard(|| {
        let dst = out(result, "result")?;
        let m = MultiplexedStatisticsModel::new(n_modes as usize, mu, eta_s, eta_h, multiplexed).ffi()?;
        let r = if pulses == 0 {
            analytic_counting(&m)
        } else {
            monte_carlo_counting(&m, pulses, seed)
        }
        .ffi()?;
        *dst = FmCounting {
            p_h: r.p_h,
            p_s: r.p_s,
            p_sh: r.p_sh,
            g2_h: r.g2_h,
            se_p_sh: r.std_errors.p_sh,
            se_g2_h: r.std_errors.g2_h,
        };
        Ok(())
    })
}

/// HOM visibility `purity · (1 − g2_h)`.
///
/// # Safety
/// `visibility` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_hom_visibility(purity: f64, g2_h: f64, visibility: *mut f64) -> FmStatus {
    guard(|| {
        let dst = out(visibility, "visibility")?;
        *dst = hom_visibility(purity, g2_h).ffi()?;
        Ok(())
    })
}

/// Transmission of one arm under the laboratory loss table.
///
/// # Safety
/// `efficiency` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_arm_efficiency(case: FmDetectorCase, arm: FmArm, efficiency: *mut f64) -> FmStatus {
    guard(|| {
        let dst = out(efficiency, "efficiency")?;
        let case = match case {
            FmDetectorCase::Best => DetectorCase::Best,
            FmDetectorCase::Worst => DetectorCase::Worst,
        };
        let arm = match arm {
            FmArm::Signal => Arm::Signal,
            FmArm::Herald => Arm::Herald,
        };
        *dst = arm_efficiency(&LossTable::laboratory(case), arm);
        Ok(())
    })
}

/// Pearson correlations of the unshifted and shifted joint histograms of a
/// feed-forward stream, and the fraction of events passing the filter.
///
/// # Safety
/// `config` must be a valid handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fm_stream_correlations(
    config: *const FmConfig,
    pulses: u64,
    unshifted_r: *mut f64,
    shifted_r: *mut f64,
    passed_fraction: *mut f64,
) -> FmStatus {
    guard(|| {
        let c = &get(config, "config")?.0;
        let (a, b, p) = (
            out(unshifted_r, "unshifted_r")?,
            out(shifted_r, "shifted_r")?,
            out(passed_fraction, "passed_fraction")?,
        );
        let s = simulate_feedforward_stream(&c.stream_config().ffi()?, pulses, c.seed).ffi()?;
        *a = s.unshifted.correlation();
        *b = s.shifted.correlation();
        *p = s.passed_fraction();
        Ok(())
    })
}
