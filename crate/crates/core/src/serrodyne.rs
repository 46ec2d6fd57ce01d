//! Serrodyne frequency shifting with a sinusoidally driven phase modulator.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::spectrometer::SpectrometerModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShifterModel {
    /// Half-wave voltage, V.
    pub v_pi: f64,
    /// Drive frequency, Hz.
    pub nu_rf: f64,
    pub v0_max: f64,
    /// RMS timing jitter of the drive relative to the photon, s.
    pub sigma_jitter: f64,
    /// Time at which the drive crosses zero with positive slope.
    pub t_lock: f64,
}

pub const DEFAULT_NU_RF: f64 = 8e9;
pub const DEFAULT_V_PI: f64 = 3.0;
pub const DEFAULT_MAX_SHIFT_HZ: f64 = 85e9;
pub const DEFAULT_SIGMA_JITTER: f64 = 5.3e-12;

impl ShifterModel {
    pub fn new(v_pi: f64, nu_rf: f64, v0_max: f64, sigma_jitter: f64) -> Result<Self> {
        if !(v_pi > 0.0 && v_pi.is_finite()) {
            return Err(Error::invalid("v_pi", "must be positive"));
        }
        if !(nu_rf > 0.0 && nu_rf.is_finite()) {
            return Err(Error::invalid("nu_rf", "must be positive"));
        }
        if !(v0_max >= 0.0 && v0_max.is_finite()) {
            return Err(Error::invalid("v0_max", "must be non-negative"));
        }
        if !(sigma_jitter >= 0.0 && sigma_jitter.is_finite()) {
            return Err(Error::invalid("sigma_jitter", "must be non-negative"));
        }
        Ok(Self {
            v_pi,
            nu_rf,
            v0_max,
            sigma_jitter,
            t_lock: 0.0,
        })
    }

    /// Model whose maximum drive gives the shift `max_shift_hz`.
    pub fn with_max_shift(v_pi: f64, nu_rf: f64, max_shift_hz: f64, sigma_jitter: f64) -> Result<Self> {
        let v0_max = max_shift_hz * v_pi / (PI * nu_rf);
        Self::new(v_pi, nu_rf, v0_max, sigma_jitter)
    }

    /// 8 GHz drive, ±85 GHz range, 5.3 ps drive jitter.
    pub fn default_model() -> Self {
        Self::with_max_shift(DEFAULT_V_PI, DEFAULT_NU_RF, DEFAULT_MAX_SHIFT_HZ, DEFAULT_SIGMA_JITTER)
            .expect("defaults are valid")
    }

    pub fn max_shift(&self) -> f64 {
        self.shift_unchecked(self.v0_max)
    }

    fn shift_unchecked(&self, v0: f64) -> f64 {
        PI * (v0 / self.v_pi) * self.nu_rf
    }

    /// Signed shift in Hz, `Δν = π (V₀/V_π) ν_RF`.
    pub fn shift_magnitude(&self, v0: f64) -> Result<f64> {
        if !(v0.abs() <= self.v0_max) {
            return Err(Error::Overdrive {
                v0,
                v0_max: self.v0_max,
            });
        }
        Ok(self.shift_unchecked(v0))
    }

    pub fn voltage_for_shift(&self, shift_hz: f64) -> f64 {
        shift_hz * self.v_pi / (PI * self.nu_rf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LutEntry {
    pub bin: i64,
    /// Herald frequency assigned to the bin, rad/s.
    pub herald_frequency: f64,
    /// Requested shift, Hz. Kept even when out of range.
    pub shift: f64,
    /// Drive amplitude; zero for out-of-range bins.
    pub v0: f64,
    pub drive_phase: f64,
    pub in_range: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardLut {
    entries: Vec<LutEntry>,
}

impl FeedForwardLut {
    pub fn entries(&self) -> &[LutEntry] {
        &self.entries
    }

    pub fn get(&self, bin: i64) -> Option<&LutEntry> {
        let first = self.entries.first()?.bin;
        let k = bin - first;
        if k < 0 {
            return None;
        }
        self.entries.get(k as usize)
    }

    /// Columns: bin, herald frequency (GHz), V₀ (V), in-range flag.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# bin herald_ghz v0_volts in_range")?;
        for e in &self.entries {
            writeln!(
                out,
                "{} {:.6} {:.9} {}",
                e.bin,
                e.herald_frequency / (2.0 * PI * 1e9),
                e.v0,
                u8::from(e.in_range)
            )?;
        }
        Ok(())
    }
}

/// One entry per calibrated herald bin. The shift moves the conditional
/// signal center `ω_p − ω_H` onto `target`; bins needing more than the
/// maximum shift are marked out of range.
pub fn build_lut(
    spectrometer: &SpectrometerModel,
    target: f64,
    pump_center: f64,
    model: &ShifterModel,
) -> Result<FeedForwardLut> {
    let bins = spectrometer
        .in_range_bins()
        .ok_or_else(|| Error::invalid("tdc_bin", "a lookup table needs a binned spectrometer"))?;
    let max = model.max_shift();
    let entries = bins
        .map(|bin| {
            let herald_frequency = spectrometer.bin_frequency(bin);
            let shift = (target - (pump_center - herald_frequency)) / (2.0 * PI);
            let in_range = shift.abs() <= max * (1.0 + 1e-12);
            LutEntry {
                bin,
                herald_frequency,
                shift,
                v0: if in_range {
                    model.voltage_for_shift(shift).clamp(-model.v0_max, model.v0_max)
                } else {
                    0.0
                },
                drive_phase: 0.0,
                in_range,
            }
        })
        .collect();
    Ok(FeedForwardLut { entries })
}

/// Complex envelope sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeWavepacket {
    pub t_start: f64,
    pub dt: f64,
    pub samples: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    Sinusoidal,
    /// Tangent of the sinusoid at the lock time.
    Linearized,
}

impl TimeWavepacket {
    /// Gaussian envelope `exp(-t²σ²/2)` for amplitude spectral std `sigma` (rad/s).
    pub fn gaussian(sigma: f64, points: usize, half_width_sigmas: f64) -> Result<Self> {
        if !(sigma > 0.0) || points < 2 {
            return Err(Error::invalid(
                "sigma",
                "need a positive bandwidth and at least two samples",
            ));
        }
        let half = half_width_sigmas / sigma;
        let dt = 2.0 * half / (points - 1) as f64;
        let samples = (0..points)
            .map(|k| {
                let t = -half + k as f64 * dt;
                Complex64::new((-0.5 * t * t * sigma * sigma).exp(), 0.0)
            })
            .collect();
        let mut wp = Self {
            t_start: -half,
            dt,
            samples,
        };
        wp.normalize();
        Ok(wp)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn norm_squared(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dt
    }

    fn normalize(&mut self) {
        let n = self.norm_squared().sqrt();
        self.samples.iter_mut().for_each(|z| *z /= n);
    }

    /// `S(ν) = ∫ A(t) e^{-i2πνt} dt`, ν a detuning in Hz.
    pub fn spectrum(&self, frequencies: &[f64]) -> Vec<Complex64> {
        frequencies
            .iter()
            .map(|&nu| {
                self.samples
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * Complex64::from_polar(self.dt, -2.0 * PI * nu * self.time(k)))
                    .sum()
            })
            .collect()
    }
}

/// Multiplies by the modulator phase. With `e^{iφ(t)}` and the spectrum
/// convention above, a positive `v0` moves the spectrum up.
pub fn apply_temporal_phase(
    wavepacket: &TimeWavepacket,
    v0: f64,
    drive_phase: f64,
    model: &ShifterModel,
    mode: PhaseMode,
) -> TimeWavepacket {
    let shift = model.shift_unchecked(v0);
    let beta = shift / model.nu_rf;
    let w = 2.0 * PI * model.nu_rf;
    let samples = wavepacket
        .samples
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let t = wavepacket.time(k) - model.t_lock;
            let phi = match mode {
                PhaseMode::Sinusoidal => beta * (w * t + drive_phase).sin(),
                PhaseMode::Linearized => beta * (drive_phase.sin() + w * t * drive_phase.cos()),
            };
            a * Complex64::from_polar(1.0, phi)
        })
        .collect();
    TimeWavepacket {
        t_start: wavepacket.t_start,
        dt: wavepacket.dt,
        samples,
    }
}

/// Normalized overlap of two intensity spectra, `∫I_a I_b / √(∫I_a² ∫I_b²)`.
pub fn intensity_overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let ia: Vec<f64> = a.iter().map(|z| z.norm_sqr()).collect();
    let ib: Vec<f64> = b.iter().map(|z| z.norm_sqr()).collect();
    let ab: f64 = ia.iter().zip(&ib).map(|(x, y)| x * y).sum();
    let aa: f64 = ia.iter().map(|x| x * x).sum();
    let bb: f64 = ib.iter().map(|x| x * x).sum();
    ab / (aa * bb).sqrt()
}

pub const PHASE_JITTER_NODES: usize = 64;
pub const PHASE_JITTER_TOLERANCE: f64 = 1e-4;

/// Purity of a pulse `exp(-t²σ²/2)` after a shift of `shift_hz` applied by a
/// drive whose timing is offset by a Gaussian `x` of std `sigma_jitter`:
/// `Σ P(x)P(x′) |⟨A(x)|A(x′)⟩|²`. The result is checked against a rule of
/// twice the order.
pub fn phase_jitter_purity(sigma_jitter: f64, sigma: f64, shift_hz: f64, model: &ShifterModel) -> Result<f64> {
    if !(sigma_jitter >= 0.0) {
        return Err(Error::invalid("sigma_jitter", "must be non-negative"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "must be positive"));
    }
    if sigma_jitter == 0.0 {
        return Ok(1.0);
    }
    let p = phase_jitter_purity_with(sigma_jitter, sigma, shift_hz, model, PHASE_JITTER_NODES);
    let q = phase_jitter_purity_with(sigma_jitter, sigma, shift_hz, model, 2 * PHASE_JITTER_NODES);
    if (p - q).abs() > PHASE_JITTER_TOLERANCE {
        return Err(Error::NotConverged {
            change: (p - q).abs(),
            tolerance: PHASE_JITTER_TOLERANCE,
        });
    }
    Ok(q.min(1.0))
}

fn phase_jitter_purity_with(sigma_jitter: f64, sigma: f64, shift_hz: f64, model: &ShifterModel, n: usize) -> f64 {
    let beta = shift_hz / model.nu_rf;
    let w = 2.0 * PI * model.nu_rf;
    let (xs, px) = GaussHermite::normal(n, sigma_jitter);
    let gh = GaussHermite::new(n);
    // weight e^{-σ²t²} → t = y/σ, normalized by √π
    let ts: Vec<f64> = gh.nodes.iter().map(|y| y / sigma).collect();
    let wt: Vec<f64> = gh.weights.iter().map(|w| w / PI.sqrt()).collect();
    let phases: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| ts.iter().map(|t| beta * (w * (t + x)).sin()).collect())
        .collect();
    let mut total = 0.0;
    for a in 0..n {
        for b in a..n {
            let ov: Complex64 = (0..n)
                .map(|k| Complex64::from_polar(wt[k], phases[a][k] - phases[b][k]))
                .sum();
            let term = px[a] * px[b] * ov.norm_sqr();
            total += if a == b { term } else { 2.0 * term };
        }
    }
    total
}
