//! Joint spectral amplitudes on a pair of frequency grids, and the Schmidt
//! purity of the heralded marginal.
//!
//! Amplitudes are normalized in the continuum sense,
//! `∫∫ |f(ω_s, ω_i)|² dω_s dω_i = 1`, with trapezoidal weights. For the
//! Schmidt decomposition the square roots of the weights are folded into the
//! matrix, so its singular values squared are the Schmidt weights directly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::window::SpectralWindow;

/// Edge amplitude allowed relative to the peak before a build is rejected.
pub const TRUNCATION_LIMIT: f64 = 1e-6;
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpEnvelope {
    /// Amplitude standard deviation in rad/s: `exp(-(Δω)²/(2σ²))`.
    pub sigma: f64,
    /// Pump center (rad/s). Energy conservation puts the ridge at `ω_s + ω_i = center`.
    pub center: f64,
}

impl PumpEnvelope {
    pub fn new(sigma: f64, center: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("pump width must be positive, got {sigma}"),
            ));
        }
        if !(center > 0.0 && center.is_finite()) {
            return Err(Error::invalid("center", "pump center must be positive"));
        }
        Ok(Self { sigma, center })
    }

    pub fn amplitude(&self, omega_s: f64, omega_i: f64) -> f64 {
        let x = omega_s + omega_i - self.center;
        (-x * x / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Phase-matching factor. Flat unless a Gaussian in the difference
/// frequency `ω_s − ω_i` is requested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum PhaseMatching {
    #[default]
    Flat,
    Gaussian {
        sigma: f64,
        difference_center: f64,
    },
}

impl PhaseMatching {
    fn factor(&self, omega_s: f64, omega_i: f64) -> f64 {
        match *self {
            PhaseMatching::Flat => 1.0,
            PhaseMatching::Gaussian {
                sigma,
                difference_center,
            } => {
                let x = omega_s - omega_i - difference_center;
                (-x * x / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Truncation {
    /// Fail with [`Error::GridTooNarrow`] when the envelope is cut at an edge.
    #[default]
    Reject,
    Allow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Signal,
    Herald,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpectralAmplitude {
    signal_grid: FrequencyGrid,
    herald_grid: FrequencyGrid,
    /// Rows index the signal grid, columns the herald grid.
    amplitude: DMatrix<Complex64>,
}

#[derive(Clone, Debug)]
pub struct FilterOutcome {
    pub jsa: JointSpectralAmplitude,
    /// Probability that a pair survives the window, i.e. the pre-renormalization norm².
    pub transmitted: f64,
}

impl JointSpectralAmplitude {
    /// Wraps an amplitude matrix and normalizes it.
    pub fn from_matrix(
        signal_grid: FrequencyGrid,
        herald_grid: FrequencyGrid,
        amplitude: DMatrix<Complex64>,
    ) -> Result<Self> {
        if amplitude.nrows() != signal_grid.len() || amplitude.ncols() != herald_grid.len() {
            return Err(Error::invalid(
                "amplitude",
                format!(
                    "shape {}x{} does not match grids {}x{}",
                    amplitude.nrows(),
                    amplitude.ncols(),
                    signal_grid.len(),
                    herald_grid.len()
                ),
            ));
        }
        if amplitude.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numeric("non-finite amplitude entry".into()));
        }
        let mut jsa = Self {
            signal_grid,
            herald_grid,
            amplitude,
        };
        let norm2 = jsa.norm_squared();
        if norm2 <= 0.0 {
            return Err(Error::ZeroOverlap);
        }
        jsa.amplitude /= Complex64::new(norm2.sqrt(), 0.0);
        Ok(jsa)
    }

    fn from_real_fn(
        signal_grid: &FrequencyGrid,
        herald_grid: &FrequencyGrid,
        f: impl Fn(f64, f64) -> f64,
    ) -> DMatrix<Complex64> {
        let ws = signal_grid.values();
        let wh = herald_grid.values();
        DMatrix::from_fn(ws.len(), wh.len(), |r, c| Complex64::new(f(ws[r], wh[c]), 0.0))
    }

    pub fn signal_grid(&self) -> &FrequencyGrid {
        &self.signal_grid
    }

    pub fn herald_grid(&self) -> &FrequencyGrid {
        &self.herald_grid
    }

    pub fn amplitude(&self) -> &DMatrix<Complex64> {
        &self.amplitude
    }

    pub fn norm_squared(&self) -> f64 {
        let ws = self.signal_grid.weights();
        let wh = self.herald_grid.weights();
        let mut acc = 0.0;
        for (c, wc) in wh.iter().enumerate() {
            let col: f64 = ws
                .iter()
                .enumerate()
                .map(|(r, w)| w * self.amplitude[(r, c)].norm_sqr())
                .sum();
            acc += wc * col;
        }
        acc
    }

    /// Multiplies every entry by `e^{iθ}`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let mut out = self.clone();
        out.amplitude *= Complex64::from_polar(1.0, theta);
        out
    }

    /// Signal and herald roles exchanged.
    pub fn transposed(&self) -> Self {
        Self {
            signal_grid: self.herald_grid.clone(),
            herald_grid: self.signal_grid.clone(),
            amplitude: self.amplitude.transpose(),
        }
    }

    /// Pointwise window on one axis followed by renormalization.
    pub fn apply_filter(&self, axis: Axis, window: &SpectralWindow) -> Result<FilterOutcome> {
        let grid = match axis {
            Axis::Signal => &self.signal_grid,
            Axis::Herald => &self.herald_grid,
        };
        if let Some((lo, hi)) = window.support() {
            if hi < grid.start() || lo > grid.end() {
                return Err(Error::ZeroOverlap);
            }
        }
        let factors: Vec<f64> = grid.values().iter().map(|&w| window.amplitude(w)).collect();
        let mut amplitude = self.amplitude.clone();
        for (k, &t) in factors.iter().enumerate() {
            match axis {
                Axis::Signal => amplitude.row_mut(k).scale_mut(t),
                Axis::Herald => amplitude.column_mut(k).scale_mut(t),
            }
        }
        let filtered = Self {
            signal_grid: self.signal_grid.clone(),
            herald_grid: self.herald_grid.clone(),
            amplitude,
        };
        let transmitted = filtered.norm_squared();
        if transmitted <= f64::MIN_POSITIVE {
            return Err(Error::ZeroOverlap);
        }
        let jsa = Self::from_matrix(filtered.signal_grid, filtered.herald_grid, filtered.amplitude)?;
        Ok(FilterOutcome { jsa, transmitted })
    }

    /// Schmidt weights λ_k (descending, summing to one).
    pub fn schmidt_weights(&self) -> Result<Vec<f64>> {
        let ws: Vec<f64> = self.signal_grid.weights().iter().map(|w| w.sqrt()).collect();
        let wh: Vec<f64> = self.herald_grid.weights().iter().map(|w| w.sqrt()).collect();
        let real = self.amplitude.iter().all(|z| z.im == 0.0);
        let mut singular = if real {
            let m = DMatrix::from_fn(ws.len(), wh.len(), |r, c| self.amplitude[(r, c)].re * ws[r] * wh[c]);
            m.try_svd(false, false, 1e-14, 10_000)
                .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?
                .singular_values
                .as_slice()
                .to_vec()
        } else {
            let m = DMatrix::from_fn(ws.len(), wh.len(), |r, c| self.amplitude[(r, c)] * (ws[r] * wh[c]));
            m.try_svd(false, false, 1e-14, 10_000)
                .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?
                .singular_values
                .as_slice()
                .to_vec()
        };
        let mut lambdas: Vec<f64> = singular.iter_mut().map(|s| *s * *s).collect();
        let total: f64 = lambdas.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numeric("zero Schmidt spectrum".into()));
        }
        lambdas.iter_mut().for_each(|l| *l /= total);
        lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(lambdas)
    }

    /// `Σ λ_k²`, the purity of either reduced state.
    pub fn schmidt_purity(&self) -> Result<f64> {
        Ok(self.schmidt_weights()?.iter().map(|l| l * l).sum())
    }

    /// Pearson correlation between ω_s and ω_i under the joint intensity.
    pub fn intensity_correlation(&self) -> f64 {
        let ws = self.signal_grid.values();
        let wh = self.herald_grid.values();
        let qs = self.signal_grid.weights();
        let qh = self.herald_grid.weights();
        let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
        for r in 0..ws.len() {
            for c in 0..wh.len() {
                let p = self.amplitude[(r, c)].norm_sqr() * qs[r] * qh[c];
                m0 += p;
                mx += p * ws[r];
                my += p * wh[c];
            }
        }
        let (mx, my) = (mx / m0, my / m0);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for r in 0..ws.len() {
            for c in 0..wh.len() {
                let p = self.amplitude[(r, c)].norm_sqr() * qs[r] * qh[c];
                let (dx, dy) = (ws[r] - mx, wh[c] - my);
                sxx += p * dx * dx;
                syy += p * dy * dy;
                sxy += p * dx * dy;
            }
        }
        sxy / (sxx * syy).sqrt()
    }

    /// Writes the columnar text form: `#` header lines, then `ω_s ω_i Re Im` rows.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::new();
        writeln!(header, "# freqmux-jsa v1").unwrap();
        for (name, g) in [("signal_grid", &self.signal_grid), ("herald_grid", &self.herald_grid)] {
            writeln!(
                header,
                "# {name} center={:.17e} span={:.17e} points={}",
                g.center(),
                g.span(),
                g.len()
            )
            .unwrap();
        }
        writeln!(header, "# columns: omega_s omega_i re im").unwrap();
        out.write_all(header.as_bytes())?;
        let ws = self.signal_grid.values();
        let wh = self.herald_grid.values();
        for (r, s) in ws.iter().enumerate() {
            for (c, h) in wh.iter().enumerate() {
                let z = self.amplitude[(r, c)];
                writeln!(out, "{:.17e} {:.17e} {:.17e} {:.17e}", s, h, z.re, z.im)?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut grids: [Option<FrequencyGrid>; 2] = [None, None];
        let mut entries = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('#') {
                let rest = rest.trim();
                let slot = if rest.starts_with("signal_grid") {
                    0
                } else if rest.starts_with("herald_grid") {
                    1
                } else {
                    continue;
                };
                grids[slot] = Some(parse_grid_header(rest, lineno)?);
                continue;
            }
            let cols: Vec<&str> = t.split_whitespace().collect();
            if cols.len() != 4 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 4 columns, found {}", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })
            };
            entries.push(Complex64::new(parse(cols[2])?, parse(cols[3])?));
        }
        let [Some(sg), Some(hg)] = grids else {
            return Err(Error::Parse {
                line: 0,
                message: "missing grid header".into(),
            });
        };
        if entries.len() != sg.len() * hg.len() {
            return Err(Error::Parse {
                line: 0,
                message: format!("expected {} rows, found {}", sg.len() * hg.len(), entries.len()),
            });
        }
        let m = DMatrix::from_row_slice(sg.len(), hg.len(), &entries);
        Self::from_matrix(sg, hg, m)
    }
}

fn parse_grid_header(text: &str, line: usize) -> Result<FrequencyGrid> {
    let mut center = None;
    let mut span = None;
    let mut points = None;
    for tok in text.split_whitespace().skip(1) {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("malformed token `{tok}`"),
        })?;
        let bad = |e: String| Error::Parse { line, message: e };
        match k {
            "center" => center = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "span" => span = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "points" => points = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            _ => {}
        }
    }
    match (center, span, points) {
        (Some(c), Some(s), Some(p)) => FrequencyGrid::new(c, s, p),
        _ => Err(Error::Parse {
            line,
            message: "grid header needs center, span and points".into(),
        }),
    }
}

fn edge_ratio(samples: &[f64]) -> f64 {
    let peak = samples.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return f64::INFINITY;
    }
    samples[0].max(samples[samples.len() - 1]) / peak
}

fn check_truncation(ratio: f64, policy: Truncation) -> Result<()> {
    if policy == Truncation::Reject && !(ratio <= TRUNCATION_LIMIT) {
        Err(Error::GridTooNarrow {
            ratio,
            limit: TRUNCATION_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Pump-envelope JSA, `f ∝ α(ω_s + ω_i)·φ(ω_s, ω_i)`, rejecting truncated grids.
pub fn build_anticorrelated_jsa(
    pump: &PumpEnvelope,
    signal_grid: &FrequencyGrid,
    herald_grid: &FrequencyGrid,
) -> Result<JointSpectralAmplitude> {
    build_anticorrelated_jsa_with(pump, PhaseMatching::Flat, signal_grid, herald_grid, Truncation::Reject)
}

pub fn build_anticorrelated_jsa_with(
    pump: &PumpEnvelope,
    phase_matching: PhaseMatching,
    signal_grid: &FrequencyGrid,
    herald_grid: &FrequencyGrid,
    truncation: Truncation,
) -> Result<JointSpectralAmplitude> {
    // the slices through the grid centers must decay inside the grids
    let row: Vec<f64> = signal_grid
        .values()
        .iter()
        .map(|&s| pump.amplitude(s, herald_grid.center()))
        .collect();
    let col: Vec<f64> = herald_grid
        .values()
        .iter()
        .map(|&h| pump.amplitude(signal_grid.center(), h))
        .collect();
    check_truncation(edge_ratio(&row).max(edge_ratio(&col)), truncation)?;
    let m = JointSpectralAmplitude::from_real_fn(signal_grid, herald_grid, |s, h| {
        pump.amplitude(s, h) * phase_matching.factor(s, h)
    });
    JointSpectralAmplitude::from_matrix(signal_grid.clone(), herald_grid.clone(), m)
}

/// Gaussian marginal parameters for separable and correlated test states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMarginals {
    pub signal_sigma: f64,
    pub herald_sigma: f64,
    pub signal_center: f64,
    pub herald_center: f64,
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp()
}

/// Outer product of two Gaussian amplitudes.
pub fn build_factorable_jsa(
    marginals: &GaussianMarginals,
    signal_grid: &FrequencyGrid,
    herald_grid: &FrequencyGrid,
) -> Result<JointSpectralAmplitude> {
    let GaussianMarginals {
        signal_sigma,
        herald_sigma,
        signal_center,
        herald_center,
    } = *marginals;
    if !(signal_sigma > 0.0) {
        return Err(Error::invalid("signal_sigma", "must be positive"));
    }
    if !(herald_sigma > 0.0) {
        return Err(Error::invalid("herald_sigma", "must be positive"));
    }
    let a: Vec<f64> = signal_grid
        .values()
        .iter()
        .map(|&s| gauss(s - signal_center, signal_sigma))
        .collect();
    let b: Vec<f64> = herald_grid
        .values()
        .iter()
        .map(|&h| gauss(h - herald_center, herald_sigma))
        .collect();
    check_truncation(edge_ratio(&a).max(edge_ratio(&b)), Truncation::Reject)?;
    let m = DMatrix::from_fn(a.len(), b.len(), |r, c| Complex64::new(a[r] * b[c], 0.0));
    JointSpectralAmplitude::from_matrix(signal_grid.clone(), herald_grid.clone(), m)
}

/// Gaussian with independent widths along the sum and difference diagonals,
/// `exp(-u²/2σ_u² - v²/2σ_v²)` with `u, v = (Δs ± Δh)/√2`.
pub fn build_correlated_gaussian_jsa(
    sum_sigma: f64,
    difference_sigma: f64,
    signal_center: f64,
    herald_center: f64,
    signal_grid: &FrequencyGrid,
    herald_grid: &FrequencyGrid,
) -> Result<JointSpectralAmplitude> {
    if !(sum_sigma > 0.0 && difference_sigma > 0.0) {
        return Err(Error::invalid("sigma", "diagonal widths must be positive"));
    }
    let f = |s: f64, h: f64| {
        let (x, y) = (s - signal_center, h - herald_center);
        let u = (x + y) * std::f64::consts::FRAC_1_SQRT_2;
        let v = (x - y) * std::f64::consts::FRAC_1_SQRT_2;
        gauss(u, sum_sigma) * gauss(v, difference_sigma)
    };
    let row: Vec<f64> = signal_grid.values().iter().map(|&s| f(s, herald_center)).collect();
    let col: Vec<f64> = herald_grid.values().iter().map(|&h| f(signal_center, h)).collect();
    check_truncation(edge_ratio(&row).max(edge_ratio(&col)), Truncation::Reject)?;
    let m = JointSpectralAmplitude::from_real_fn(signal_grid, herald_grid, f);
    JointSpectralAmplitude::from_matrix(signal_grid.clone(), herald_grid.clone(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ghz_to_rad;

    fn pump() -> PumpEnvelope {
        PumpEnvelope::new(ghz_to_rad(50.95), ghz_to_rad(2.0 * 193_500.0)).unwrap()
    }

    fn grids(pump: &PumpEnvelope, n: usize, half_sigmas: f64) -> (FrequencyGrid, FrequencyGrid) {
        let c = 0.5 * pump.center;
        (
            FrequencyGrid::around(c, pump.sigma, half_sigmas, n).unwrap(),
            FrequencyGrid::around(c, pump.sigma, half_sigmas, n).unwrap(),
        )
    }

    #[test]
    fn anticorrelated_is_normalized_and_real() {
        let p = pump();
        let (s, h) = grids(&p, 129, 6.0);
        let jsa = build_anticorrelated_jsa(&p, &s, &h).unwrap();
        assert!((jsa.norm_squared() - 1.0).abs() < NORM_TOLERANCE);
        assert!(jsa.amplitude().iter().all(|z| z.im == 0.0 && z.re >= 0.0));
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let p = pump();
        let (s, h) = grids(&p, 65, 3.0);
        assert!(matches!(
            build_anticorrelated_jsa(&p, &s, &h),
            Err(Error::GridTooNarrow { .. })
        ));
        assert!(build_anticorrelated_jsa_with(&p, PhaseMatching::Flat, &s, &h, Truncation::Allow).is_ok());
    }

    #[test]
    fn herald_slice_is_gaussian_about_conjugate() {
        let p = pump();
        let (s, h) = grids(&p, 257, 6.0);
        let jsa = build_anticorrelated_jsa(&p, &s, &h).unwrap();
        let r = 100;
        let ws = s.value(r);
        let row: Vec<f64> = (0..h.len()).map(|c| jsa.amplitude()[(r, c)].re).collect();
        let peak = row.iter().cloned().fold(0.0, f64::max);
        for (c, a) in row.iter().enumerate() {
            let x = h.value(c) - (p.center - ws);
            let expect = peak * (-x * x / (2.0 * p.sigma * p.sigma)).exp();
            assert!((a - expect).abs() < 1e-9 * peak.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn flat_envelope_limit_is_single_mode() {
        let p = PumpEnvelope::new(1e6 * ghz_to_rad(50.0), ghz_to_rad(400_000.0)).unwrap();
        let s = FrequencyGrid::new(ghz_to_rad(200_000.0), ghz_to_rad(100.0), 65).unwrap();
        let h = s.clone();
        let jsa = build_anticorrelated_jsa_with(&p, PhaseMatching::Flat, &s, &h, Truncation::Allow).unwrap();
        assert!((jsa.schmidt_purity().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn factorable_has_unit_purity() {
        let s = FrequencyGrid::around(0.0, 1.0, 7.0, 101).unwrap();
        let h = FrequencyGrid::around(5.0, 2.0, 7.0, 81).unwrap();
        let m = GaussianMarginals {
            signal_sigma: 1.0,
            herald_sigma: 2.0,
            signal_center: 0.0,
            herald_center: 5.0,
        };
        let jsa = build_factorable_jsa(&m, &s, &h).unwrap();
        assert!((jsa.schmidt_purity().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_pass_filter_is_identity() {
        let p = pump();
        let (s, h) = grids(&p, 65, 6.0);
        let jsa = build_anticorrelated_jsa(&p, &s, &h).unwrap();
        let out = jsa.apply_filter(Axis::Signal, &SpectralWindow::AllPass).unwrap();
        assert!((out.transmitted - 1.0).abs() < 1e-12);
        assert!((&out.jsa.amplitude - &jsa.amplitude).norm() < 1e-12);
    }

    #[test]
    fn disjoint_filter_is_an_error() {
        let p = pump();
        let (s, h) = grids(&p, 65, 6.0);
        let jsa = build_anticorrelated_jsa(&p, &s, &h).unwrap();
        let far = SpectralWindow::top_hat(s.end() + ghz_to_rad(500.0), ghz_to_rad(50.0)).unwrap();
        assert!(matches!(jsa.apply_filter(Axis::Signal, &far), Err(Error::ZeroOverlap)));
    }

    #[test]
    fn text_round_trip() {
        let p = pump();
        let (s, h) = grids(&p, 17, 6.0);
        let jsa = build_anticorrelated_jsa(&p, &s, &h).unwrap().with_global_phase(0.3);
        let mut buf = Vec::new();
        jsa.write_text(&mut buf).unwrap();
        let back = JointSpectralAmplitude::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.signal_grid(), jsa.signal_grid());
        assert!((&back.amplitude - &jsa.amplitude).norm() < 1e-12);
    }

    #[test]
    fn malformed_text_is_reported() {
        let err = JointSpectralAmplitude::read_text("# signal_grid center=0 span=1 points=2\n1 2 3\n".as_bytes());
        assert!(matches!(err, Err(Error::Parse { line: 2, .. })));
    }
}
