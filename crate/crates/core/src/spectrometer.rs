//! Time-of-flight herald spectrometer: a dispersive delay maps frequency to
//! arrival time, the detector adds jitter, and a TDC bins the timestamp.

use std::io::BufRead;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::units::{ghz_to_rad, ps, ps_per_ghz_to_s_per_rad, FWHM_PER_SIGMA};

/// Timing jitter of the herald detection chain, as a density over time offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JitterDistribution {
    /// Zero jitter.
    None,
    Gaussian {
        sigma_t: f64,
    },
    /// Piecewise-constant density. Each sample owns the interval between the
    /// midpoints to its neighbours; `mass` sums to one.
    Tabulated {
        offsets: Vec<f64>,
        mass: Vec<f64>,
    },
}

impl JitterDistribution {
    pub fn gaussian(sigma_t: f64) -> Result<Self> {
        if !(sigma_t >= 0.0 && sigma_t.is_finite()) {
            return Err(Error::invalid("sigma_t", "must be non-negative"));
        }
        Ok(if sigma_t == 0.0 {
            Self::None
        } else {
            Self::Gaussian { sigma_t }
        })
    }

    /// Histogram of (offset in s, count). Counts are normalized here.
    pub fn tabulated(offsets: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        if offsets.len() != counts.len() || offsets.len() < 2 {
            return Err(Error::invalid("jitter", "need at least two (offset, count) rows"));
        }
        if offsets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("jitter", "offsets must be strictly increasing"));
        }
        if counts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::invalid("jitter", "counts must be non-negative"));
        }
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("jitter", "histogram is empty"));
        }
        Ok(Self::Tabulated {
            offsets,
            mass: counts.iter().map(|c| c / total).collect(),
        })
    }

    /// Reads two whitespace- or comma-separated columns: offset (ps), count.
    pub fn read_histogram<R: BufRead>(input: R) -> Result<Self> {
        let mut offsets = Vec::new();
        let mut counts = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = t
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let bad = |m: String| Error::Parse {
                line: idx + 1,
                message: m,
            };
            if cols.len() != 2 {
                return Err(bad(format!("expected 2 columns, found {}", cols.len())));
            }
            let o: f64 = cols[0].parse().map_err(|e| bad(format!("{e}")))?;
            let c: f64 = cols[1].parse().map_err(|e| bad(format!("{e}")))?;
            offsets.push(ps(o));
            counts.push(c);
        }
        Self::tabulated(offsets, counts)
    }

    fn cell_edges(offsets: &[f64]) -> Vec<f64> {
        let n = offsets.len();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(offsets[0] - 0.5 * (offsets[1] - offsets[0]));
        for w in offsets.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(offsets[n - 1] + 0.5 * (offsets[n - 1] - offsets[n - 2]));
        edges
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Self::None => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Gaussian { sigma_t } => 0.5 * (1.0 + erf(t / (std::f64::consts::SQRT_2 * sigma_t))),
            Self::Tabulated { offsets, mass } => {
                let edges = Self::cell_edges(offsets);
                let mut acc = 0.0;
                for (k, m) in mass.iter().enumerate() {
                    let (a, b) = (edges[k], edges[k + 1]);
                    if t >= b {
                        acc += m;
                    } else {
                        if t > a {
                            acc += m * (t - a) / (b - a);
                        }
                        break;
                    }
                }
                acc.min(1.0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Tabulated { offsets, mass } => offsets.iter().zip(mass).map(|(o, m)| o * m).sum(),
            _ => 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Gaussian { sigma_t } => *sigma_t,
            Self::Tabulated { offsets, mass } => {
                // piecewise-uniform cells add w²/12 each
                let edges = Self::cell_edges(offsets);
                let mu = self.mean();
                let mut var = 0.0;
                for k in 0..mass.len() {
                    let w = edges[k + 1] - edges[k];
                    var += mass[k] * ((offsets[k] - mu).powi(2) + w * w / 12.0);
                }
                var.sqrt()
            }
        }
    }

    /// Offsets beyond which the density is negligible (or exactly zero).
    fn support(&self) -> (f64, f64) {
        match self {
            Self::None => (0.0, 0.0),
            Self::Gaussian { sigma_t } => (-12.0 * sigma_t, 12.0 * sigma_t),
            Self::Tabulated { offsets, .. } => {
                let e = Self::cell_edges(offsets);
                (e[0], e[e.len() - 1])
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Gaussian { sigma_t } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma_t * z
            }
            Self::Tabulated { offsets, mass } => {
                let edges = Self::cell_edges(offsets);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for k in 0..mass.len() {
                    if u < acc + mass[k] || k + 1 == mass.len() {
                        let frac = if mass[k] > 0.0 {
                            ((u - acc) / mass[k]).clamp(0.0, 1.0)
                        } else {
                            0.5
                        };
                        return edges[k] + frac * (edges[k + 1] - edges[k]);
                    }
                    acc += mass[k];
                }
                unreachable!()
            }
        }
    }
}

/// Density over angular frequency sampled on a grid, normalized to unit
/// trapezoidal integral.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: FrequencyGrid,
    density: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: FrequencyGrid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::invalid("density", "length does not match grid"));
        }
        if density.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::invalid("density", "must be non-negative and finite"));
        }
        let z = grid.integrate(&density);
        if !(z > 0.0) {
            return Err(Error::invalid("density", "integrates to zero"));
        }
        Ok(Self {
            density: density.iter().map(|d| d / z).collect(),
            grid,
        })
    }

    pub fn uniform(grid: FrequencyGrid) -> Self {
        let n = grid.len();
        Self::new(grid, vec![1.0; n]).expect("uniform density is valid")
    }

    pub fn from_fn(grid: FrequencyGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let d = grid.values().into_iter().map(f).collect();
        Self::new(grid, d)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    /// Probability mass per node (density times quadrature weight).
    pub fn masses(&self) -> Vec<f64> {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| d * self.grid.weight(i))
            .collect()
    }

    /// Linear interpolation between nodes, zero outside the grid.
    pub fn interpolate(&self, omega: f64) -> f64 {
        let x = (omega - self.grid.start()) / self.grid.step();
        let last = (self.grid.len() - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return 0.0;
        }
        let x = x.clamp(0.0, last);
        let k = (x.floor() as usize).min(self.grid.len() - 2);
        let f = x - k as f64;
        self.density[k] * (1.0 - f) + self.density[k + 1] * f
    }

    pub fn mean(&self) -> f64 {
        let g: Vec<f64> = self
            .grid
            .values()
            .iter()
            .zip(&self.density)
            .map(|(w, d)| w * d)
            .collect();
        self.grid.integrate(&g)
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let g: Vec<f64> = self
            .grid
            .values()
            .iter()
            .zip(&self.density)
            .map(|(w, d)| (w - m).powi(2) * d)
            .collect();
        self.grid.integrate(&g).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldOutcome {
    /// TDC bin, `None` for an unbinned (ideal) spectrometer.
    pub time_bin_index: Option<i64>,
    pub inferred_frequency: f64,
}

/// Distribution of TDC bins for one true herald frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    pub first_bin: i64,
    pub probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn probability(&self, bin: i64) -> f64 {
        let k = bin - self.first_bin;
        if k < 0 {
            0.0
        } else {
            self.probabilities.get(k as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn bins(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(k, p)| (self.first_bin + k as i64, *p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrometerModel {
    /// Group delay per unit angular frequency, s/(rad/s).
    pub dispersion: f64,
    /// TDC bin width in s. `None` time-stamps exactly.
    pub tdc_bin: Option<f64>,
    pub jitter: JitterDistribution,
    pub reference_frequency: f64,
    /// Arrival time of the reference frequency.
    pub t0: f64,
    /// Calibrated half-range about the reference, rad/s.
    pub calibrated_half_range: f64,
}

/// FBG dispersion in ps/GHz.
pub const DEFAULT_DISPERSION_PS_PER_GHZ: f64 = 16.0;
pub const DEFAULT_TDC_BIN_PS: f64 = 33.0;
/// Frequency FWHM of the default jitter, GHz.
pub const DEFAULT_UNCERTAINTY_GHZ: f64 = 10.0;

impl SpectrometerModel {
    pub fn new(
        dispersion: f64,
        tdc_bin: Option<f64>,
        jitter: JitterDistribution,
        reference_frequency: f64,
        calibrated_half_range: f64,
    ) -> Result<Self> {
        if !(dispersion.is_finite() && dispersion != 0.0) {
            return Err(Error::invalid("dispersion", "must be non-zero"));
        }
        if let Some(b) = tdc_bin {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid("tdc_bin", "must be positive"));
            }
        }
        if !(reference_frequency > 0.0) {
            return Err(Error::invalid("reference_frequency", "must be positive"));
        }
        if !(calibrated_half_range > 0.0) {
            return Err(Error::invalid("calibrated_half_range", "must be positive"));
        }
        Ok(Self {
            dispersion,
            tdc_bin,
            jitter,
            reference_frequency,
            t0: 0.0,
            calibrated_half_range,
        })
    }

    /// 16 ps/GHz, 33 ps bins, Gaussian jitter of 10 GHz FWHM in frequency.
    pub fn default_at(reference_frequency: f64, calibrated_half_range: f64) -> Result<Self> {
        let d = ps_per_ghz_to_s_per_rad(DEFAULT_DISPERSION_PS_PER_GHZ);
        let sigma_omega = ghz_to_rad(DEFAULT_UNCERTAINTY_GHZ) / FWHM_PER_SIGMA;
        Self::new(
            d,
            Some(ps(DEFAULT_TDC_BIN_PS)),
            JitterDistribution::gaussian(sigma_omega * d)?,
            reference_frequency,
            calibrated_half_range,
        )
    }

    /// Perfect frequency resolution.
    pub fn ideal(reference_frequency: f64, calibrated_half_range: f64) -> Result<Self> {
        Self::new(
            ps_per_ghz_to_s_per_rad(DEFAULT_DISPERSION_PS_PER_GHZ),
            None,
            JitterDistribution::None,
            reference_frequency,
            calibrated_half_range,
        )
    }

    pub fn is_ideal(&self) -> bool {
        self.tdc_bin.is_none() && self.jitter == JitterDistribution::None
    }

    /// Jitter expressed as a frequency standard deviation (rad/s).
    pub fn frequency_std_dev(&self) -> f64 {
        self.jitter.std_dev() / self.dispersion.abs()
    }

    pub fn in_range(&self, omega: f64) -> bool {
        (omega - self.reference_frequency).abs() <= self.calibrated_half_range * (1.0 + 1e-12)
    }

    pub fn frequency_to_arrival_time(&self, omega_i: f64) -> Result<f64> {
        if !self.in_range(omega_i) {
            return Err(Error::OutOfRange { frequency: omega_i });
        }
        Ok(self.arrival_time_unchecked(omega_i))
    }

    fn arrival_time_unchecked(&self, omega: f64) -> f64 {
        self.t0 + self.dispersion * (omega - self.reference_frequency)
    }

    pub fn arrival_time_to_frequency(&self, t: f64) -> f64 {
        self.reference_frequency + (t - self.t0) / self.dispersion
    }

    /// Bin containing `t`; centers sit on `t0 + k·bin` and ties go toward `t0`.
    pub fn bin_index(&self, t: f64) -> Option<i64> {
        self.tdc_bin.map(|b| {
            let x = (t - self.t0) / b;
            (x.signum() * (x.abs() - 0.5).ceil()) as i64
        })
    }

    pub fn bin_frequency(&self, bin: i64) -> f64 {
        let b = self.tdc_bin.unwrap_or(0.0);
        self.arrival_time_to_frequency(self.t0 + bin as f64 * b)
    }

    /// Frequency width of one TDC bin.
    pub fn bin_frequency_width(&self) -> Option<f64> {
        self.tdc_bin.map(|b| b / self.dispersion.abs())
    }

    /// Bins whose center frequency lies in the calibrated range.
    pub fn in_range_bins(&self) -> Option<std::ops::RangeInclusive<i64>> {
        let w = self.bin_frequency_width()?;
        let k = (self.calibrated_half_range / w * (1.0 + 1e-12)).floor() as i64;
        Some(-k..=k)
    }

    /// P(bin | ω_i), covering every bin with non-negligible probability.
    /// For an unbinned spectrometer this is an error; use
    /// [`Self::outcome_density`] instead.
    pub fn conditional_outcome_distribution(&self, omega_i: f64) -> Result<OutcomeDistribution> {
        let b = self
            .tdc_bin
            .ok_or_else(|| Error::invalid("tdc_bin", "unbinned spectrometer has no discrete outcomes"))?;
        if !self.in_range(omega_i) {
            return Err(Error::OutOfRange { frequency: omega_i });
        }
        let t = self.arrival_time_unchecked(omega_i);
        let (lo, hi) = self.jitter.support();
        let first = self.bin_index(t + lo).unwrap() - 1;
        let last = self.bin_index(t + hi).unwrap() + 1;
        if let JitterDistribution::None = self.jitter {
            let k = self.bin_index(t).unwrap();
            return Ok(OutcomeDistribution {
                first_bin: k,
                probabilities: vec![1.0],
            });
        }
        let probabilities = (first..=last)
            .map(|k| {
                let c = self.t0 + k as f64 * b;
                let (a, z) = (c - 0.5 * b - t, c + 0.5 * b - t);
                (self.jitter.cdf(z) - self.jitter.cdf(a)).max(0.0)
            })
            .collect();
        Ok(OutcomeDistribution {
            first_bin: first,
            probabilities,
        })
    }

    /// Likelihood of `outcome` at every node of a ω_i grid.
    pub fn likelihood(&self, outcome: &HeraldOutcome, grid: &FrequencyGrid) -> Result<Vec<f64>> {
        match (outcome.time_bin_index, self.tdc_bin) {
            (Some(k), Some(b)) => Ok(grid
                .values()
                .iter()
                .map(|&w| {
                    let t = self.arrival_time_unchecked(w);
                    let c = self.t0 + k as f64 * b;
                    match self.jitter {
                        JitterDistribution::None => {
                            if self.bin_index(t) == Some(k) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        _ => (self.jitter.cdf(c + 0.5 * b - t) - self.jitter.cdf(c - 0.5 * b - t)).max(0.0),
                    }
                })
                .collect()),
            (None, None) => {
                let s = self.frequency_std_dev();
                if s == 0.0 {
                    let mut l = vec![0.0; grid.len()];
                    if let Some(j) = grid.nearest(outcome.inferred_frequency) {
                        l[j] = 1.0;
                    }
                    Ok(l)
                } else {
                    let d = self.outcome_density_point(outcome.inferred_frequency, grid);
                    Ok(d)
                }
            }
            _ => Err(Error::invalid(
                "outcome",
                "outcome does not match the spectrometer binning",
            )),
        }
    }

    fn outcome_density_point(&self, omega_h: f64, grid: &FrequencyGrid) -> Vec<f64> {
        let eps = 1e-3 * self.frequency_std_dev();
        grid.values()
            .iter()
            .map(|&w| {
                let a = self.dispersion * (omega_h - eps - w);
                let b = self.dispersion * (omega_h + eps - w);
                (self.jitter.cdf(a.max(b)) - self.jitter.cdf(a.min(b))) / (2.0 * eps)
            })
            .collect()
    }

    /// Probability of `outcome` under `prior` (the Bayes denominator).
    pub fn evidence(&self, outcome: &HeraldOutcome, prior: &GridDensity) -> Result<f64> {
        let l = self.likelihood(outcome, prior.grid())?;
        let f: Vec<f64> = l.iter().zip(prior.values()).map(|(a, b)| a * b).collect();
        if self.is_ideal() {
            // delta likelihood: evidence is the prior density at the node
            return Ok(f.iter().cloned().fold(0.0, f64::max));
        }
        Ok(prior.grid().integrate(&f))
    }

    /// P(ω_i | outcome) on the prior's grid.
    pub fn herald_posterior(&self, outcome: &HeraldOutcome, prior: &GridDensity) -> Result<GridDensity> {
        let l = self.likelihood(outcome, prior.grid())?;
        let f: Vec<f64> = l.iter().zip(prior.values()).map(|(a, b)| a * b).collect();
        if f.iter().all(|x| *x <= 0.0) {
            return Err(Error::ZeroEvidence);
        }
        GridDensity::new(prior.grid().clone(), f)
    }

    pub fn outcome_for_bin(&self, bin: i64) -> HeraldOutcome {
        HeraldOutcome {
            time_bin_index: Some(bin),
            inferred_frequency: self.bin_frequency(bin),
        }
    }

    /// Draws one herald measurement for a photon at `omega_i`.
    pub fn sample_herald_event<R: Rng + ?Sized>(&self, omega_i: f64, rng: &mut R) -> HeraldOutcome {
        let t = self.arrival_time_unchecked(omega_i) + self.jitter.sample(rng);
        match self.bin_index(t) {
            Some(k) => self.outcome_for_bin(k),
            None => HeraldOutcome {
                time_bin_index: None,
                inferred_frequency: self.arrival_time_to_frequency(t),
            },
        }
    }
}
