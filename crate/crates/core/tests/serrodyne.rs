use std::f64::consts::PI;

use freqmux::grid::FrequencyGrid;
use freqmux::serrodyne::{
    apply_temporal_phase, build_lut, intensity_overlap, phase_jitter_purity, PhaseMode, ShifterModel, TimeWavepacket,
};
use freqmux::spectrometer::{GridDensity, SpectrometerModel};
use freqmux::units::{ghz_to_rad, wavelength_to_rad};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn omega_c() -> f64 {
    wavelength_to_rad(1535e-9)
}

fn omega_p() -> f64 {
    wavelength_to_rad(775e-9)
}

fn spectrometer() -> SpectrometerModel {
    SpectrometerModel::default_at(omega_p() - omega_c(), ghz_to_rad(120.0)).unwrap()
}

#[test]
fn lut_lands_posterior_mean_on_filter_center() {
    let spec = spectrometer();
    let shifter = ShifterModel::default_model();
    let lut = build_lut(&spec, omega_c(), omega_p(), &shifter).unwrap();
    let prior = GridDensity::uniform(FrequencyGrid::new(spec.reference_frequency, ghz_to_rad(500.0), 2001).unwrap());
    let half_spacing = 0.5 * spec.bin_frequency_width().unwrap();
    let mut checked = 0;
    for e in lut.entries().iter().filter(|e| e.in_range) {
        let post = spec.herald_posterior(&spec.outcome_for_bin(e.bin), &prior).unwrap();
        let landed = omega_p() - post.mean() + 2.0 * PI * e.shift;
        assert!(
            (landed - omega_c()).abs() <= half_spacing,
            "bin {}: {}",
            e.bin,
            landed - omega_c()
        );
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn heralds_in_the_shift_window_map_in_range() {
    let spec = spectrometer();
    let shifter = ShifterModel::default_model();
    let lut = build_lut(&spec, omega_c(), omega_p(), &shifter).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let (mut exact, mut measured) = (0, 0);
    for _ in 0..n {
        let omega = spec.reference_frequency + ghz_to_rad(rng.gen_range(-85.0..=85.0));
        let needed = (omega_c() - (omega_p() - omega)) / (2.0 * PI);
        if needed.abs() <= shifter.max_shift() {
            exact += 1;
        }
        let outcome = spec.sample_herald_event(omega, &mut rng);
        if outcome
            .time_bin_index
            .and_then(|b| lut.get(b))
            .is_some_and(|e| e.in_range)
        {
            measured += 1;
        }
    }
    assert!(exact as f64 / n as f64 >= 0.99);
    assert!(measured as f64 / n as f64 >= 0.97, "{}", measured as f64 / n as f64);
}

#[test]
fn sinusoidal_drive_keeps_spectral_overlap() {
    // calibration pulses carry the pump bandwidth
    let sigma = ghz_to_rad(50.95);
    let m = ShifterModel::default_model();
    let wp = TimeWavepacket::gaussian(sigma, 513, 8.0).unwrap();
    let a = apply_temporal_phase(&wp, m.v0_max, 0.0, &m, PhaseMode::Sinusoidal);
    let b = apply_temporal_phase(&wp, m.v0_max, 0.0, &m, PhaseMode::Linearized);
    let nus: Vec<f64> = (-400..=400).map(|k| m.max_shift() + k as f64 * 5e8).collect();
    let overlap = intensity_overlap(&a.spectrum(&nus), &b.spectrum(&nus));
    assert!(overlap >= 0.94, "{overlap}");
}

#[test]
fn phase_jitter_purity_decreases() {
    let m = ShifterModel::default_model();
    let sigma = ghz_to_rad(50.95);
    assert!((phase_jitter_purity(0.0, sigma, m.max_shift(), &m).unwrap() - 1.0).abs() < 1e-9);
    let mut last = 1.0;
    for ps in [1.0, 2.0, 4.0, 5.3, 8.0, 12.0, 16.0, 20.0] {
        let p = phase_jitter_purity(ps * 1e-12, sigma, m.max_shift(), &m).unwrap();
        assert!(p < last, "{ps} ps: {p} >= {last}");
        last = p;
    }
    assert!(phase_jitter_purity(5.3e-12, sigma, m.max_shift(), &m).unwrap() > 0.95);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_is_linear_in_drive(v in -1.0f64..1.0, k in -1.0f64..1.0) {
        let m = ShifterModel::default_model();
        let (v, kv) = (v * m.v0_max, k * v * m.v0_max);
        let s = m.shift_magnitude(v).unwrap();
        let ks = m.shift_magnitude(kv).unwrap();
        prop_assert!((ks - k * s).abs() <= 1e-12 * m.max_shift());
        prop_assert!((m.voltage_for_shift(s) - v).abs() <= 1e-12 * m.v0_max);
    }

    #[test]
    fn temporal_phase_preserves_norm(frac in -1.0f64..1.0, phase in -3.2f64..3.2, bw_ghz in 5.0f64..200.0) {
        let m = ShifterModel::default_model();
        let wp = TimeWavepacket::gaussian(ghz_to_rad(bw_ghz), 513, 7.0).unwrap();
        for mode in [PhaseMode::Sinusoidal, PhaseMode::Linearized] {
            let out = apply_temporal_phase(&wp, frac * m.v0_max, phase, &m, mode);
            prop_assert!((out.norm_squared() - wp.norm_squared()).abs() < 1e-9);
        }
    }
}

#[test]
fn overdrive_is_rejected() {
    let m = ShifterModel::default_model();
    assert!(m.shift_magnitude(1.01 * m.v0_max).is_err());
    assert_eq!(m.shift_magnitude(0.0).unwrap(), 0.0);
}
