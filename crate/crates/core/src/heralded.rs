//! Mixed state of the delivered signal photon and its purity.
//!
//! A herald measured at ω_H steers the shifter so the conditional signal
//! center `ω_p − ω_H` lands on the filter center ω_c. The true herald ω_i
//! differs from ω_H, so the delivered wavepacket, written in the output
//! detuning `u = ω_s − ω_c`, is
//!
//! `A(u) = N · F(u) · exp(−(u − (ω_H − ω_i))² / 2σ²) · exp(iγ (u + ω_p − ω_H − ω₀)²)`
//!
//! where the quadratic phase is picked up in the delay line, before the shift.
//! The state is `ρ = Σ P(ω_H) P(ω_i|ω_H) |A⟩⟨A|`.
//!
//! Squared overlaps depend only on the two Gaussian offsets and on
//! `κ = 2γ(ω_H' − ω_H)`, which is what [`purity_integral`] exploits.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::jsa::PumpEnvelope;
use crate::quadrature::pairwise_sum;
use crate::spectrometer::{GridDensity, HeraldOutcome, SpectrometerModel};
use crate::units::{ghz_to_rad, wavelength_to_rad, SPEED_OF_LIGHT};

pub const REFINEMENT_TOLERANCE: f64 = 1e-3;
/// Relative normalization below which a conditional wavepacket is vacuous.
pub const VACUOUS_LIMIT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Nodes across the filter passband.
    pub signal_points: usize,
    /// Nodes of ω_H when the spectrometer is unbinned.
    pub herald_points: usize,
    /// Nodes of ω_i about each ω_H.
    pub offset_points: usize,
    /// Half-width of the ω_i window in posterior standard deviations.
    pub offset_half_width: f64,
    /// Recompute on doubled grids and fail if the purity moves by more than 1e-3.
    pub check_refinement: bool,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            signal_points: 513,
            herald_points: 129,
            offset_points: 129,
            offset_half_width: 4.0,
            check_refinement: false,
        }
    }
}

impl QuadratureSettings {
    /// Scales every node count by `factor`, keeping counts odd and ≥ 9.
    pub fn scaled(&self, factor: f64) -> Self {
        let f = |n: usize| (((n - 1) as f64 * factor / 2.0).round() as usize * 2 + 1).max(9);
        Self {
            signal_points: f(self.signal_points),
            herald_points: f(self.herald_points),
            offset_points: f(self.offset_points),
            ..*self
        }
    }

    fn refined(&self) -> Self {
        Self {
            signal_points: 2 * (self.signal_points - 1) + 1,
            herald_points: 2 * (self.herald_points - 1) + 1,
            offset_points: 2 * (self.offset_points - 1) + 1,
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeraldedStateModel {
    /// Pump envelope; its center ω_p is also the drive reference ω_d.
    pub pump: PumpEnvelope,
    /// Output filter center ω_c.
    pub filter_center: f64,
    /// Full width of the top-hat output filter.
    pub filter_width: f64,
    /// GVD parameter γ, s².
    pub gamma: f64,
    /// Expansion frequency ω₀ of the dispersion.
    pub dispersion_reference: f64,
    pub spectrometer: SpectrometerModel,
    /// Marginal of the true herald frequency before measurement.
    pub herald_prior: GridDensity,
    /// Largest shift the modulator provides, rad/s. Heralds needing more are discarded.
    pub max_shift: f64,
    pub quadrature: QuadratureSettings,
}

pub const PUMP_SIGMA_GHZ: f64 = 50.95;
pub const FILTER_WIDTH_GHZ: f64 = 50.0;
pub const PUMP_WAVELENGTH: f64 = 775e-9;
pub const TARGET_WAVELENGTH: f64 = 1535e-9;
/// Herald acceptance span, rad/s.
pub const HERALD_SPAN: f64 = 1.11e12;
pub const MAX_SHIFT_GHZ: f64 = 85.0;

impl HeraldedStateModel {
    /// Laboratory defaults with the default jitter-limited spectrometer and no GVD.
    pub fn nominal() -> Self {
        let omega_p = wavelength_to_rad(PUMP_WAVELENGTH);
        let omega_c = wavelength_to_rad(TARGET_WAVELENGTH);
        let herald_center = omega_p - omega_c;
        let spectrometer =
            SpectrometerModel::default_at(herald_center, 0.5 * HERALD_SPAN).expect("default spectrometer");
        let prior_grid = FrequencyGrid::new(herald_center, HERALD_SPAN, 1025).expect("prior grid");
        Self {
            pump: PumpEnvelope::new(ghz_to_rad(PUMP_SIGMA_GHZ), omega_p).expect("pump"),
            filter_center: omega_c,
            filter_width: ghz_to_rad(FILTER_WIDTH_GHZ),
            gamma: 0.0,
            dispersion_reference: omega_c,
            spectrometer,
            herald_prior: GridDensity::uniform(prior_grid),
            max_shift: ghz_to_rad(MAX_SHIFT_GHZ),
            quadrature: QuadratureSettings::default(),
        }
    }

    pub fn with_ideal_spectrometer(mut self) -> Self {
        self.spectrometer = SpectrometerModel::ideal(
            self.spectrometer.reference_frequency,
            self.spectrometer.calibrated_half_range,
        )
        .expect("ideal spectrometer");
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.filter_width > 0.0 && self.filter_width.is_finite()) {
            return Err(Error::invalid("filter_width", "must be positive"));
        }
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be finite"));
        }
        for (name, v) in [
            ("filter_center", self.filter_center),
            ("dispersion_reference", self.dispersion_reference),
            ("pump.center", self.pump.center),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "frequencies must be positive"));
            }
        }
        if !(self.max_shift > 0.0) {
            return Err(Error::invalid("max_shift", "must be positive"));
        }
        let q = &self.quadrature;
        if q.signal_points < 3 || q.herald_points < 2 || q.offset_points < 3 || !(q.offset_half_width > 0.0) {
            return Err(Error::invalid("quadrature", "too few nodes"));
        }
        Ok(())
    }

    /// Output grid spanning the filter passband; the trapezoid gives its edge
    /// samples half weight.
    pub fn signal_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.filter_center, self.filter_width, self.quadrature.signal_points)
    }

    fn quadratic_offset(&self, omega_h: f64) -> f64 {
        self.pump.center - omega_h - self.dispersion_reference
    }

    /// Herald frequency whose partner needs no shift.
    pub fn degenerate_herald(&self) -> f64 {
        self.pump.center - self.filter_center
    }

    fn shift_in_range(&self, omega_h: f64) -> bool {
        (omega_h - self.degenerate_herald()).abs() <= self.max_shift * (1.0 + 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalWavepacket {
    pub herald_outcome: f64,
    pub herald_true: f64,
    pub grid: FrequencyGrid,
    pub amplitude: Vec<Complex64>,
}

impl ConditionalWavepacket {
    pub fn norm_squared(&self) -> f64 {
        let s: Vec<f64> = self.amplitude.iter().map(|a| a.norm_sqr()).collect();
        self.grid.integrate(&s)
    }

    /// `∫ A* B dω`.
    pub fn overlap(&self, other: &Self) -> Complex64 {
        let w = self.grid.weights();
        self.amplitude
            .iter()
            .zip(&other.amplitude)
            .zip(&w)
            .map(|((a, b), w)| a.conj() * b * *w)
            .sum()
    }

    pub fn mean_frequency(&self) -> f64 {
        let v = self.grid.values();
        let s: Vec<f64> = self.amplitude.iter().zip(&v).map(|(a, w)| a.norm_sqr() * w).collect();
        self.grid.integrate(&s)
    }
}

fn gaussian_profile(u: &[f64], offset: f64, sigma: f64) -> Vec<f64> {
    u.iter()
        .map(|x| (-(x - offset).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Normalizes a real profile against its weights; `None` when the filter
/// leaves less than [`VACUOUS_LIMIT`] of the untruncated Gaussian.
fn normalize_profile(mut b: Vec<f64>, weights: &[f64], sigma: f64) -> std::result::Result<Vec<f64>, f64> {
    let n2: f64 = b.iter().zip(weights).map(|(x, w)| x * x * w).sum();
    let full = sigma * PI.sqrt();
    if !(n2 > VACUOUS_LIMIT * full) {
        return Err(n2 / full);
    }
    let n = n2.sqrt();
    b.iter_mut().for_each(|x| *x /= n);
    Ok(b)
}

/// Delivered wavepacket for measured herald `omega_h` and true herald `omega_i`.
pub fn conditional_wavepacket(omega_h: f64, omega_i: f64, model: &HeraldedStateModel) -> Result<ConditionalWavepacket> {
    model.validate()?;
    let grid = model.signal_grid()?;
    let u: Vec<f64> = grid.values().iter().map(|w| w - model.filter_center).collect();
    let b = normalize_profile(
        gaussian_profile(&u, omega_h - omega_i, model.pump.sigma),
        &grid.weights(),
        model.pump.sigma,
    )
    .map_err(|norm| Error::VacuousEvent { norm })?;
    let d = model.quadratic_offset(omega_h);
    let amplitude = u
        .iter()
        .zip(&b)
        .map(|(x, a)| Complex64::from_polar(*a, model.gamma * (x + d).powi(2)))
        .collect();
    Ok(ConditionalWavepacket {
        herald_outcome: omega_h,
        herald_true: omega_i,
        grid,
        amplitude,
    })
}

/// The discrete mixture the state is built from: measured-herald nodes on a
/// uniform lattice, and for each a posterior over a shared set of offsets.
struct Mixture {
    u: Vec<f64>,
    wu: Vec<f64>,
    /// `ω_H − ω_i` at each offset node.
    offsets: Vec<f64>,
    /// Normalized real envelopes per offset; `None` where the event is vacuous.
    profiles: Vec<Option<Vec<f64>>>,
    herald: Vec<f64>,
    herald_step: f64,
    herald_mass: Vec<f64>,
    /// `posterior[h][j]`.
    posterior: Vec<Vec<f64>>,
}

fn posterior_std(model: &HeraldedStateModel) -> f64 {
    let s = model.spectrometer.frequency_std_dev();
    let b = model.spectrometer.bin_frequency_width().unwrap_or(0.0);
    (s * s + b * b / 12.0).sqrt()
}

fn build_mixture(model: &HeraldedStateModel, q: &QuadratureSettings) -> Result<Mixture> {
    model.validate()?;
    let spec = &model.spectrometer;
    let grid = FrequencyGrid::new(model.filter_center, model.filter_width, q.signal_points)?;
    let u: Vec<f64> = grid.values().iter().map(|w| w - model.filter_center).collect();
    let wu = grid.weights();

    // measured-herald lattice
    let (outcomes, herald_step): (Vec<HeraldOutcome>, f64) = match spec.in_range_bins() {
        Some(bins) => (
            bins.map(|k| spec.outcome_for_bin(k))
                .filter(|o| model.shift_in_range(o.inferred_frequency))
                .collect(),
            spec.bin_frequency_width().unwrap(),
        ),
        None => {
            let prior = model.herald_prior.grid();
            let lo = prior.start().max(model.degenerate_herald() - model.max_shift);
            let hi = prior.end().min(model.degenerate_herald() + model.max_shift);
            if !(hi > lo) {
                return Err(Error::ZeroEvidence);
            }
            let g = FrequencyGrid::new(0.5 * (lo + hi), hi - lo, q.herald_points)?;
            (
                g.values()
                    .into_iter()
                    .map(|w| HeraldOutcome {
                        time_bin_index: None,
                        inferred_frequency: w,
                    })
                    .collect(),
                g.step(),
            )
        }
    };
    if outcomes.is_empty() {
        return Err(Error::ZeroEvidence);
    }

    let sd = posterior_std(model);
    let ideal = sd == 0.0;
    let rel: Option<FrequencyGrid> = if ideal {
        None
    } else {
        Some(FrequencyGrid::new(
            0.0,
            2.0 * q.offset_half_width * sd,
            q.offset_points,
        )?)
    };
    let offsets: Vec<f64> = match &rel {
        Some(g) => g.values().iter().map(|r| -r).collect(),
        None => vec![0.0],
    };
    let profiles: Vec<Option<Vec<f64>>> = offsets
        .iter()
        .map(|&d| normalize_profile(gaussian_profile(&u, d, model.pump.sigma), &wu, model.pump.sigma).ok())
        .collect();

    let unbinned_trapezoid = spec.tdc_bin.is_none();
    let mut herald = Vec::with_capacity(outcomes.len());
    let mut herald_mass = Vec::with_capacity(outcomes.len());
    let mut posterior = Vec::with_capacity(outcomes.len());
    for (n, o) in outcomes.iter().enumerate() {
        let wh = o.inferred_frequency;
        let (evidence, post) = match &rel {
            None => (model.herald_prior.interpolate(wh), vec![1.0]),
            Some(g) => {
                let local = FrequencyGrid::new(wh, g.span(), g.len())?;
                let like = spec.likelihood(o, &local)?;
                let mass: Vec<f64> = local
                    .values()
                    .iter()
                    .zip(&like)
                    .enumerate()
                    .map(|(j, (w, l))| {
                        if profiles[j].is_some() {
                            l * model.herald_prior.interpolate(*w) * local.weight(j)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let z: f64 = mass.iter().sum();
                (z, mass.iter().map(|m| if z > 0.0 { m / z } else { 0.0 }).collect())
            }
        };
        // unbinned outcomes are a density over ω_H and need trapezoid weights
        let w = if unbinned_trapezoid && outcomes.len() > 1 && (n == 0 || n + 1 == outcomes.len()) {
            0.5
        } else {
            1.0
        };
        if evidence > 0.0 {
            herald.push(wh);
            herald_mass.push(evidence * w);
            posterior.push(post);
        }
    }
    let z: f64 = herald_mass.iter().sum();
    if !(z > 0.0) {
        return Err(Error::ZeroEvidence);
    }
    herald_mass.iter_mut().for_each(|m| *m /= z);
    Ok(Mixture {
        u,
        wu,
        offsets,
        profiles,
        herald,
        herald_step,
        herald_mass,
        posterior,
    })
}

fn purity_once(model: &HeraldedStateModel, q: &QuadratureSettings) -> Result<f64> {
    let m = build_mixture(model, q)?;
    let nj = m.offsets.len();
    let nu = m.u.len();
    let nh = m.herald.len();

    // C[j, u] = B_j(u) √w_u
    let sqrt_w: Vec<f64> = m.wu.iter().map(|w| w.sqrt()).collect();
    let c = DMatrix::from_fn(nj, nu, |j, k| match &m.profiles[j] {
        Some(b) => b[k] * sqrt_w[k],
        None => 0.0,
    });
    let ct = c.transpose();

    // lattice separations that actually occur
    let index: Vec<i64> = m
        .herald
        .iter()
        .map(|w| ((w - m.herald[0]) / m.herald_step).round() as i64)
        .collect();
    let max_sep = (index[nh - 1] - index[0]) as usize;
    let seps: Vec<usize> = if model.gamma == 0.0 {
        vec![0]
    } else {
        (0..=max_sep).collect()
    };

    // |G_κ|² for each separation
    let kernels: Vec<DMatrix<f64>> = seps
        .par_iter()
        .map(|&s| {
            let kappa = 2.0 * model.gamma * s as f64 * m.herald_step;
            let mut re = c.clone();
            let mut im = c.clone();
            for k in 0..nu {
                let (sn, cs) = (kappa * m.u[k]).sin_cos();
                re.column_mut(k).scale_mut(cs);
                im.column_mut(k).scale_mut(sn);
            }
            let gr = &re * &ct;
            let gi = &im * &ct;
            gr.zip_map(&gi, |a, b| a * a + b * b)
        })
        .collect();

    let p = DMatrix::from_fn(nj, nh, |j, h| m.posterior[h][j]);
    let per_herald: Vec<f64> = (0..nh)
        .into_par_iter()
        .map(|a| {
            let pa = p.column(a);
            let terms: Vec<f64> = (0..nh)
                .map(|b| {
                    let s = (index[a] - index[b]).unsigned_abs() as usize;
                    let k = if model.gamma == 0.0 { &kernels[0] } else { &kernels[s] };
                    let v = k * p.column(b);
                    m.herald_mass[b] * pa.dot(&v)
                })
                .collect();
            m.herald_mass[a] * pairwise_sum(&terms)
        })
        .collect();
    Ok(pairwise_sum(&per_herald))
}

/// `Tr ρ²` from the squared overlaps, without forming ρ.
pub fn purity_integral(model: &HeraldedStateModel) -> Result<f64> {
    let q = model.quadrature;
    let p = purity_once(model, &q)?;
    if q.check_refinement {
        let r = purity_once(model, &q.refined())?;
        if (r - p).abs() > REFINEMENT_TOLERANCE {
            return Err(Error::NotConverged {
                change: (r - p).abs(),
                tolerance: REFINEMENT_TOLERANCE,
            });
        }
    }
    Ok(p)
}

/// Density matrix in the quadrature-weighted basis, `ρ̃_{kl} = √w_k ρ(ω_k, ω_l) √w_l`,
/// so that trace and purity are plain matrix operations.
#[derive(Clone, Debug)]
pub struct DiscretizedDensityMatrix {
    pub grid: FrequencyGrid,
    pub matrix: DMatrix<Complex64>,
}

pub const HERMITIAN_TOLERANCE: f64 = 1e-9;
pub const TRACE_TOLERANCE: f64 = 1e-6;
pub const PSD_TOLERANCE: f64 = 1e-8;

impl DiscretizedDensityMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `Tr ρ² = ‖ρ‖_F²` for Hermitian ρ.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    /// `Σ λ²` from the spectrum.
    pub fn eigen_purity(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l * l).sum()
    }

    /// Checks trace, Hermiticity and positivity.
    pub fn validate(&self) -> Result<()> {
        let t = self.trace();
        if (t - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::Numeric(format!("trace {t} differs from 1")));
        }
        let h = self.hermiticity_error();
        if h > HERMITIAN_TOLERANCE {
            return Err(Error::Numeric(format!("not Hermitian: {h:.3e}")));
        }
        let min = self.eigenvalues().last().copied().unwrap_or(0.0);
        if min < -PSD_TOLERANCE {
            return Err(Error::Numeric(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Rows of `i j Re Im`.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# density matrix, weighted basis; grid center={:.17e} span={:.17e} points={}",
            self.grid.center(),
            self.grid.span(),
            self.grid.len()
        )?;
        writeln!(out, "# columns: i j re im")?;
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                let z = self.matrix[(i, j)];
                writeln!(out, "{i} {j} {:.17e} {:.17e}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// Materializes `ρ` on the signal grid. Vacuous events carry no weight.
pub fn assemble_density_matrix(model: &HeraldedStateModel) -> Result<DiscretizedDensityMatrix> {
    let m = build_mixture(model, &model.quadrature)?;
    let nu = m.u.len();
    let sqrt_w: Vec<f64> = m.wu.iter().map(|w| w.sqrt()).collect();
    let mut columns: Vec<Complex64> = Vec::new();
    let mut count = 0usize;
    for (h, &wh) in m.herald.iter().enumerate() {
        let d = model.quadratic_offset(wh);
        for (j, prof) in m.profiles.iter().enumerate() {
            let c = m.herald_mass[h] * m.posterior[h][j];
            let Some(b) = prof else { continue };
            if c <= 0.0 {
                continue;
            }
            let sc = c.sqrt();
            columns.extend(
                (0..nu).map(|k| Complex64::from_polar(sc * sqrt_w[k] * b[k], model.gamma * (m.u[k] + d).powi(2))),
            );
            count += 1;
        }
    }
    let x = DMatrix::from_vec(nu, count, columns);
    let matrix = &x * x.adjoint();
    Ok(DiscretizedDensityMatrix {
        grid: model.signal_grid()?,
        matrix,
    })
}

/// `γ = ½ β₂ L` with `β₂ = −D λ² / (2πc)`. `D` in ps/(nm·km), `L` and `λ` in m.
pub fn gvd_parameter(dispersion_ps_nm_km: f64, length: f64, wavelength: f64) -> Result<f64> {
    if !(length > 0.0 && wavelength > 0.0) || !dispersion_ps_nm_km.is_finite() {
        return Err(Error::invalid("gvd", "length and wavelength must be positive"));
    }
    let d = dispersion_ps_nm_km * 1e-6; // s/m²
    let beta2 = -d * wavelength * wavelength / (2.0 * PI * SPEED_OF_LIGHT);
    Ok(0.5 * beta2 * length)
}

/// Writes `parameter,purity` rows under a header naming the parameter.
pub fn write_sweep_csv<W: Write>(mut out: W, parameter: &str, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(out, "{parameter},purity")?;
    for (x, p) in rows {
        writeln!(out, "{x:.9e},{p:.9}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrometer::JitterDistribution;
    use crate::units::ps_per_ghz_to_s_per_rad;

    fn small() -> QuadratureSettings {
        QuadratureSettings {
            signal_points: 129,
            herald_points: 33,
            offset_points: 33,
            ..QuadratureSettings::default()
        }
    }

    fn model() -> HeraldedStateModel {
        let mut m = HeraldedStateModel::nominal();
        m.quadrature = small();
        m
    }

    #[test]
    fn gvd_examples() {
        assert_eq!(gvd_parameter(0.0, 300.0, 1535e-9).unwrap(), 0.0);
        let g = gvd_parameter(18.0, 300.0, 1535e-9).unwrap();
        assert!(g < 0.0);
        assert!(g.abs() > 3.2e-24 && g.abs() < 3.5e-24, "{g}");
        let g2 = gvd_parameter(18.0, 600.0, 1535e-9).unwrap();
        assert!((g2 / g - 2.0).abs() < 1e-12);
    }

    #[test]
    fn centered_wavepacket_is_real_gaussian() {
        let mut m = model().with_ideal_spectrometer();
        m.filter_width = 12.0 * m.pump.sigma;
        let wh = m.degenerate_herald();
        let a = conditional_wavepacket(wh, wh, &m).unwrap();
        assert!((a.norm_squared() - 1.0).abs() < 1e-9);
        assert!(a.amplitude.iter().all(|z| z.im.abs() < 1e-15));
        assert!((a.mean_frequency() - m.filter_center).abs() < 1e-6 * m.pump.sigma);
    }

    #[test]
    fn mis_heralded_wavepacket_is_offset() {
        let mut m = model().with_ideal_spectrometer();
        m.filter_width = 12.0 * m.pump.sigma;
        let wh = m.degenerate_herald();
        let wi = wh + ghz_to_rad(7.0);
        let a = conditional_wavepacket(wh, wi, &m).unwrap();
        assert!((a.mean_frequency() - (m.filter_center + wh - wi)).abs() < 1e-6 * m.pump.sigma);
    }

    #[test]
    fn filter_far_from_packet_is_vacuous() {
        let m = model();
        let wh = m.degenerate_herald();
        assert!(matches!(
            conditional_wavepacket(wh, wh + ghz_to_rad(2000.0), &m),
            Err(Error::VacuousEvent { .. })
        ));
    }

    #[test]
    fn perfect_source_is_pure() {
        let m = model().with_ideal_spectrometer();
        assert!((purity_integral(&m).unwrap() - 1.0).abs() < 1e-6);
        let rho = assemble_density_matrix(&m).unwrap();
        rho.validate().unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn density_routes_agree() {
        for m in [
            model(),
            model().with_ideal_spectrometer().with_gamma(3.4e-24),
            model().with_gamma(3.4e-24),
        ] {
            let p = purity_integral(&m).unwrap();
            let rho = assemble_density_matrix(&m).unwrap();
            rho.validate().unwrap();
            assert!((rho.purity() - p).abs() < 1e-4, "{} vs {p}", rho.purity());
            assert!((rho.eigen_purity() - rho.purity()).abs() < 1e-6);
        }
    }

    #[test]
    fn wider_jitter_lowers_purity() {
        let mut last = 1.0 + 1e-12;
        for ghz in [2.0, 10.0, 20.0, 30.0, 40.0] {
            let mut m = model();
            let sigma_t = ghz_to_rad(ghz) * ps_per_ghz_to_s_per_rad(16.0);
            m.spectrometer.jitter = JitterDistribution::gaussian(sigma_t).unwrap();
            let p = purity_integral(&m).unwrap();
            assert!(p < last, "{ghz}: {p}");
            last = p;
        }
    }

    #[test]
    fn larger_gvd_lowers_purity() {
        let mut last = 1.0 + 1e-12;
        for g in [1e-24, 2e-24, 3.4e-24, 6e-24, 1e-23] {
            let p = purity_integral(&model().with_ideal_spectrometer().with_gamma(g)).unwrap();
            assert!(p < last, "{g}: {p}");
            last = p;
        }
        // only |γ| matters
        let a = purity_integral(&model().with_gamma(3.4e-24)).unwrap();
        let b = purity_integral(&model().with_gamma(-3.4e-24)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn refinement_check_runs() {
        let mut m = model().with_gamma(3.4e-24);
        m.quadrature.check_refinement = true;
        assert!(purity_integral(&m).is_ok());
    }

    #[test]
    fn sweep_csv_format() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, "gamma", &[(1e-24, 0.99), (2e-24, 0.98)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next(), Some("gamma,purity"));
        assert_eq!(s.lines().count(), 3);
    }
}
