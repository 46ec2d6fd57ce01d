//! Unit helpers. Everything inside the crate works in SI with angular
//! frequencies in rad/s; these convert the lab units used in configs.

use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ordinary frequency in GHz to angular frequency in rad/s.
pub fn ghz_to_rad(ghz: f64) -> f64 {
    2.0 * PI * ghz * 1e9
}

/// Angular frequency in rad/s to ordinary frequency in GHz.
pub fn rad_to_ghz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e9)
}

/// Hz to rad/s.
pub fn hz_to_rad(hz: f64) -> f64 {
    2.0 * PI * hz
}

pub fn rad_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Vacuum wavelength (m) to angular frequency (rad/s).
pub fn wavelength_to_rad(lambda: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / lambda
}

pub fn ps(t: f64) -> f64 {
    t * 1e-12
}

/// A dispersion quoted in ps per GHz of ordinary frequency, as s per rad/s.
pub fn ps_per_ghz_to_s_per_rad(ps_per_ghz: f64) -> f64 {
    ps_per_ghz * 1e-12 / (2.0 * PI * 1e9)
}

/// FWHM of a Gaussian from its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
