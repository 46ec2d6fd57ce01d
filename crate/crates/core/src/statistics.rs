//! Counting statistics of a multiplexed source built from independent
//! thermal frequency modes, lossy arms and threshold detectors.
//!
//! On a herald click the first clicking mode is routed to the output and
//! the others are rejected by the output filter. Without a herald, mode 0
//! reaches the output. The output feeds a 50:50 split onto S1 and S2; S is
//! a click on either.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplexedStatisticsModel {
    pub n_modes: usize,
    /// Mean pair number per mode per pulse.
    pub mu: f64,
    pub eta_s: f64,
    pub eta_h: f64,
    pub multiplexing_enabled: bool,
}

impl MultiplexedStatisticsModel {
    pub fn new(n_modes: usize, mu: f64, eta_s: f64, eta_h: f64, multiplexing_enabled: bool) -> Result<Self> {
        let m = Self {
            n_modes,
            mu,
            eta_s,
            eta_h,
            multiplexing_enabled,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 1 {
            return Err(Error::invalid("n_modes", "need at least one mode"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", "must be non-negative"));
        }
        for (name, e) in [("eta_s", self.eta_s), ("eta_h", self.eta_h)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid(name, "efficiency must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Modes that can deliver a photon.
    pub fn active_modes(&self) -> usize {
        if self.multiplexing_enabled {
            self.n_modes
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub p_h: f64,
    pub p_s: f64,
    pub p_sh: f64,
    pub p_s1s2h: f64,
    pub p_s1h: f64,
    pub p_s2h: f64,
    pub g2_h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingResult {
    pub p_h: f64,
    pub p_s: f64,
    pub p_sh: f64,
    pub p_s1s2h: f64,
    pub p_s1h: f64,
    pub p_s2h: f64,
    /// NaN when undefined (no heralded signal).
    pub g2_h: f64,
    /// `None` for closed-form results.
    pub pulses: Option<u64>,
    pub seed: Option<u64>,
    pub std_errors: StandardErrors,
}

fn g2(p_s1s2h: f64, p_h: f64, p_s1h: f64, p_s2h: f64) -> f64 {
    let d = p_s1h * p_s2h;
    if d > 0.0 {
        p_s1s2h * p_h / d
    } else {
        f64::NAN
    }
}

impl CountingResult {
    pub fn csv_header() -> &'static str {
        "config_hash,n_modes,mu,eta_s,eta_h,multiplexed,p_h,p_s,p_sh,g2_h,se_p_sh,se_g2_h,pulses,seed"
    }

    pub fn csv_row(&self, model: &MultiplexedStatisticsModel, config_hash: &str) -> String {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{config_hash},{},{},{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.3e},{:.3e},{},{}",
            model.n_modes,
            model.mu,
            model.eta_s,
            model.eta_h,
            u8::from(model.multiplexing_enabled),
            self.p_h,
            self.p_s,
            self.p_sh,
            self.g2_h,
            self.std_errors.p_sh,
            self.std_errors.g2_h,
            opt(self.pulses),
            opt(self.seed)
        )
    }
}

pub fn write_csv<W: Write>(
    mut out: W,
    rows: &[(MultiplexedStatisticsModel, CountingResult)],
    config_hash: &str,
) -> Result<()> {
    writeln!(out, "{}", CountingResult::csv_header())?;
    for (m, r) in rows {
        writeln!(out, "{}", r.csv_row(m, config_hash))?;
    }
    Ok(())
}

/// Number of addressable modes, shift range over photon bandwidth.
pub fn effective_mode_count(shift_range: f64, photon_bandwidth: f64) -> Result<f64> {
    if !(shift_range > 0.0 && photon_bandwidth > 0.0) {
        return Err(Error::invalid(
            "bandwidth",
            "shift range and bandwidth must be positive",
        ));
    }
    Ok(shift_range / photon_bandwidth)
}

// Detectors a single pair can reach: the herald, or one of S1/S2.
const H: u8 = 1;
const S1: u8 = 2;
const S2: u8 = 4;

/// Probability that one pair fires none of `detectors`.
fn silent(detectors: u8, eta_s: f64, eta_h: f64) -> f64 {
    let h = if detectors & H != 0 { 1.0 - eta_h } else { 1.0 };
    let mut s = 1.0;
    if detectors & S1 != 0 {
        s -= 0.5 * eta_s;
    }
    if detectors & S2 != 0 {
        s -= 0.5 * eta_s;
    }
    h * s
}

/// Event "every group has a click and no detector in `quiet` fires",
/// as `Σ c_k z_k^n` over pair number n (inclusion–exclusion).
fn event_terms(groups: &[u8], quiet: u8, eta_s: f64, eta_h: f64) -> Vec<(f64, f64)> {
    let mut terms = Vec::new();
    for subset in 0u32..(1 << groups.len()) {
        let mut mask = quiet;
        for (k, g) in groups.iter().enumerate() {
            if subset & (1 << k) != 0 {
                mask |= g;
            }
        }
        let sign = if subset.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        terms.push((sign, silent(mask, eta_s, eta_h)));
    }
    terms
}

/// Exact thermal average, `E[z^n] = 1/(1 + μ(1 − z))`.
fn thermal_exact(terms: &[(f64, f64)], mu: f64) -> f64 {
    terms.iter().map(|(c, z)| c / (1.0 + mu * (1.0 - z))).sum()
}

/// Second order in μ: `μ f(1) + μ² (f(2) − 2 f(1))`, with `f(0)` kept.
fn thermal_second_order(terms: &[(f64, f64)], mu: f64) -> f64 {
    let f = |n: i32| -> f64 { terms.iter().map(|(c, z)| c * z.powi(n)).sum() };
    let f0 = f(0);
    f0 + mu * (f(1) - f0) + mu * mu * (f(2) - 2.0 * f(1) + f0)
}

pub const EXPANSION_LIMIT: f64 = 0.1;

fn counting_with(model: &MultiplexedStatisticsModel, avg: impl Fn(&[(f64, f64)], f64) -> f64) -> CountingResult {
    let (es, eh, mu) = (model.eta_s, model.eta_h, model.mu);
    let n = model.active_modes() as i32;
    let p1 = |groups: &[u8], quiet: u8| avg(&event_terms(groups, quiet, es, eh), mu);
    let no_h = p1(&[], H);
    // Σ_{k<N} P(no herald)^k
    let gain: f64 = (0..n).map(|k| no_h.powi(k)).sum();
    let p_h = 1.0 - no_h.powi(n);
    let p_sh = gain * p1(&[H, S1 | S2], 0);
    let p_s1h = gain * p1(&[H, S1], 0);
    let p_s2h = gain * p1(&[H, S2], 0);
    let p_s1s2h = gain * p1(&[H, S1, S2], 0);
    let p_s = p_sh + no_h.powi(n - 1) * p1(&[S1 | S2], H);
    CountingResult {
        p_h,
        p_s,
        p_sh,
        p_s1s2h,
        p_s1h,
        p_s2h,
        g2_h: g2(p_s1s2h, p_h, p_s1h, p_s2h),
        pulses: None,
        seed: None,
        std_errors: StandardErrors::default(),
    }
}

/// Small-squeezing closed forms, second order in μ. Requires `μ·N < 0.1`.
pub fn analytic_counting(model: &MultiplexedStatisticsModel) -> Result<CountingResult> {
    model.validate()?;
    let value = model.mu * model.active_modes() as f64;
    if !(value < EXPANSION_LIMIT) {
        return Err(Error::ExpansionDomain {
            value,
            limit: EXPANSION_LIMIT,
        });
    }
    Ok(counting_with(model, thermal_second_order))
}

/// Exact probabilities from the thermal generating function, any μ.
pub fn exact_counting(model: &MultiplexedStatisticsModel) -> Result<CountingResult> {
    model.validate()?;
    Ok(counting_with(model, thermal_exact))
}

#[derive(Default, Clone, Copy)]
struct Tally {
    h: u64,
    s: u64,
    sh: u64,
    s1h: u64,
    s2h: u64,
    s1s2h: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.h += o.h;
        self.s += o.s;
        self.sh += o.sh;
        self.s1h += o.s1h;
        self.s2h += o.s2h;
        self.s1s2h += o.s1s2h;
    }
}

/// Pulses handled by one RNG stream.
pub const PULSES_PER_STREAM: u64 = 1 << 16;

fn binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p == 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

fn simulate_chunk(model: &MultiplexedStatisticsModel, pulses: u64, seed: u64, stream: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let modes = model.active_modes();
    let geometric = Geometric::new(1.0 / (1.0 + model.mu)).expect("valid geometric");
    let mut t = Tally::default();
    let mut pairs = vec![0u64; modes];
    for _ in 0..pulses {
        for p in pairs.iter_mut() {
            *p = if model.mu == 0.0 { 0 } else { geometric.sample(&mut rng) };
        }
        let mut routed = None;
        for (k, &n) in pairs.iter().enumerate() {
            if n > 0 && binomial(n, model.eta_h, &mut rng) > 0 {
                routed = Some(k);
                break;
            }
        }
        let heralded = routed.is_some();
        let n = pairs[routed.unwrap_or(0)];
        let s = binomial(n, model.eta_s, &mut rng);
        let s1 = binomial(s, 0.5, &mut rng);
        let (c1, c2) = (s1 > 0, s - s1 > 0);
        if heralded {
            t.h += 1;
            t.sh += u64::from(c1 || c2);
            t.s1h += u64::from(c1);
            t.s2h += u64::from(c2);
            t.s1s2h += u64::from(c1 && c2);
        }
        t.s += u64::from(c1 || c2);
    }
    t
}

/// Monte Carlo over `pulses` pulses. Stream `k` of the seeded generator
/// handles pulses `[k·2¹⁶, (k+1)·2¹⁶)`, so the counts do not depend on the
/// number of workers.
pub fn monte_carlo_counting(model: &MultiplexedStatisticsModel, pulses: u64, seed: u64) -> Result<CountingResult> {
    model.validate()?;
    if pulses == 0 {
        return Err(Error::invalid("pulses", "must be positive"));
    }
    let streams = pulses.div_ceil(PULSES_PER_STREAM);
    let tallies: Vec<Tally> = (0..streams)
        .into_par_iter()
        .map(|k| {
            let n = PULSES_PER_STREAM.min(pulses - k * PULSES_PER_STREAM);
            simulate_chunk(model, n, seed, k)
        })
        .collect();
    let mut t = Tally::default();
    tallies.iter().for_each(|x| t.add(x));

    let n = pulses as f64;
    let p = |c: u64| c as f64 / n;
    let se = |c: u64| {
        let q = p(c);
        (q * (1.0 - q) / n).sqrt()
    };
    let (p_s1s2h, p_h, p_s1h, p_s2h) = (p(t.s1s2h), p(t.h), p(t.s1h), p(t.s2h));
    let g = g2(p_s1s2h, p_h, p_s1h, p_s2h);
    // delta method on the four counts, treated as independent
    let rel2: f64 = [t.s1s2h, t.h, t.s1h, t.s2h]
        .iter()
        .map(|&c| if c > 0 { 1.0 / c as f64 } else { f64::INFINITY })
        .sum();
    Ok(CountingResult {
        p_h,
        p_s: p(t.s),
        p_sh: p(t.sh),
        p_s1s2h,
        p_s1h,
        p_s2h,
        g2_h: g,
        pulses: Some(pulses),
        seed: Some(seed),
        std_errors: StandardErrors {
            p_h: se(t.h),
            p_s: se(t.s),
            p_sh: se(t.sh),
            p_s1s2h: se(t.s1s2h),
            p_s1h: se(t.s1h),
            p_s2h: se(t.s2h),
            g2_h: if g.is_finite() { g.abs() * rel2.sqrt() } else { f64::NAN },
        },
    })
}

/// Klyshko estimators `(P(S,H)/P(H), P(S,H)/P(S))`.
pub fn klyshko_efficiencies(counts: &CountingResult) -> Result<(f64, f64)> {
    if !(counts.p_h > 0.0) {
        return Err(Error::DivisionByZero("eta_s (no herald clicks)"));
    }
    if !(counts.p_s > 0.0) {
        return Err(Error::DivisionByZero("eta_h (no signal clicks)"));
    }
    Ok((counts.p_sh / counts.p_h, counts.p_sh / counts.p_s))
}

/// `V = purity · (1 − g²_H)`, clamped to `[0, 1]`.
pub fn hom_visibility(purity: f64, g2_h: f64) -> Result<f64> {
    if !(purity > 0.0 && purity <= 1.0) {
        return Err(Error::invalid("purity", "must lie in (0, 1]"));
    }
    if !(g2_h >= 0.0 && g2_h.is_finite()) {
        return Err(Error::invalid("g2_h", "must be non-negative"));
    }
    Ok((purity * (1.0 - g2_h)).clamp(0.0, 1.0))
}

/// Above this visibility, interference of independent sources is non-classical.
pub const CLASSICAL_VISIBILITY_BOUND: f64 = 0.5;

/// Normalized coincidences `R(t) = 1 − V exp(−(σ t/√2)²)` for photons with
/// amplitude spectral std `bandwidth` (rad/s).
pub fn hom_dip_curve(purity: f64, g2_h: f64, bandwidth: f64, delays: &[f64]) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth", "must be positive"));
    }
    let v = hom_visibility(purity, g2_h)?;
    let s = bandwidth / std::f64::consts::SQRT_2;
    Ok(delays.iter().map(|t| 1.0 - v * (-(s * t).powi(2)).exp()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomReport {
    pub visibility: f64,
    pub non_classical: bool,
    pub measured: f64,
    pub measured_error: f64,
    /// Model minus measurement.
    pub gap: f64,
}

/// Measured dip visibility and its uncertainty.
pub const MEASURED_VISIBILITY: (f64, f64) = (0.61, 0.04);

pub fn hom_report(purity: f64, g2_h: f64) -> Result<HomReport> {
    let v = hom_visibility(purity, g2_h)?;
    Ok(HomReport {
        visibility: v,
        non_classical: v > CLASSICAL_VISIBILITY_BOUND,
        measured: MEASURED_VISIBILITY.0,
        measured_error: MEASURED_VISIBILITY.1,
        gap: v - MEASURED_VISIBILITY.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(mu: f64, eta_s: f64, eta_h: f64) -> MultiplexedStatisticsModel {
        MultiplexedStatisticsModel::new(1, mu, eta_s, eta_h, false).unwrap()
    }

    #[test]
    fn mode_count_examples() {
        assert_eq!(effective_mode_count(60e9, 60e9).unwrap(), 1.0);
        assert!((effective_mode_count(170e9, 60e9).unwrap() - 2.8333).abs() < 1e-3);
        assert!((effective_mode_count(170e9, 50e9).unwrap() - 3.4).abs() < 1e-12);
        assert!(effective_mode_count(0.0, 1.0).is_err());
    }

    #[test]
    fn thermal_g2_is_four_mu_for_weak_heralding() {
        let r = analytic_counting(&single(0.01, 1.0, 1e-3)).unwrap();
        assert!((r.g2_h - 0.04).abs() < 1e-3, "{}", r.g2_h);
        // general leading order 2μ(2 − η_h)
        let r = analytic_counting(&single(0.01, 0.5, 0.6)).unwrap();
        assert!((r.g2_h - 2.0 * 0.01 * 1.4).abs() < 2e-3, "{}", r.g2_h);
    }

    #[test]
    fn no_pairs_gives_undefined_g2() {
        let r = analytic_counting(&single(0.0, 0.5, 0.5)).unwrap();
        assert_eq!(r.p_sh, 0.0);
        assert!(r.g2_h.is_nan());
    }

    #[test]
    fn expansion_domain_enforced() {
        let m = MultiplexedStatisticsModel::new(5, 0.03, 0.5, 0.5, true).unwrap();
        assert!(matches!(analytic_counting(&m), Err(Error::ExpansionDomain { .. })));
        assert!(exact_counting(&m).is_ok());
    }

    #[test]
    fn single_mode_coincidence_is_mu_eta_eta() {
        let r = analytic_counting(&single(1e-4, 0.3, 0.2)).unwrap();
        assert!((r.p_sh / (1e-4 * 0.3 * 0.2) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn multiplexing_scales_coincidences_not_g2() {
        let one = analytic_counting(&MultiplexedStatisticsModel::new(3, 0.01, 0.5, 0.5, false).unwrap()).unwrap();
        let three = analytic_counting(&MultiplexedStatisticsModel::new(3, 0.01, 0.5, 0.5, true).unwrap()).unwrap();
        let ratio = three.p_sh / one.p_sh;
        assert!((ratio - 3.0).abs() < 0.05, "{ratio}");
        assert!((three.g2_h - one.g2_h).abs() < 1e-12);
        let e1 = exact_counting(&MultiplexedStatisticsModel::new(3, 0.01, 0.5, 0.5, false).unwrap()).unwrap();
        let e3 = exact_counting(&MultiplexedStatisticsModel::new(3, 0.01, 0.5, 0.5, true).unwrap()).unwrap();
        assert!((e3.g2_h - e1.g2_h).abs() < 1e-12);
    }

    #[test]
    fn second_order_tracks_exact() {
        let m = MultiplexedStatisticsModel::new(3, 0.005, 0.4, 0.7, true).unwrap();
        let a = analytic_counting(&m).unwrap();
        let e = exact_counting(&m).unwrap();
        for (x, y) in [(a.p_h, e.p_h), (a.p_sh, e.p_sh), (a.p_s, e.p_s), (a.p_s1s2h, e.p_s1s2h)] {
            assert!((x / y - 1.0).abs() < 0.02, "{x} vs {y}");
        }
    }

    #[test]
    fn lossless_single_mode_monte_carlo() {
        let m = single(0.01, 1.0, 1.0);
        let r = monte_carlo_counting(&m, 200_000, 7).unwrap();
        let exact = exact_counting(&m).unwrap();
        assert!((r.p_sh - exact.p_sh).abs() < 3.0 * r.std_errors.p_sh);
        assert!((r.p_sh - 0.01).abs() < 3.0 * r.std_errors.p_sh + 2e-4);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let m = MultiplexedStatisticsModel::new(3, 0.02, 0.3, 0.4, true).unwrap();
        let a = monte_carlo_counting(&m, 150_000, 99).unwrap();
        let b = monte_carlo_counting(&m, 150_000, 99).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_counting(&m, 150_000, 100).unwrap();
        assert_ne!(a.p_h, c.p_h);
    }

    #[test]
    fn klyshko_needs_clicks() {
        let r = analytic_counting(&single(0.0, 0.5, 0.5)).unwrap();
        assert!(matches!(klyshko_efficiencies(&r), Err(Error::DivisionByZero(_))));
        let r = exact_counting(&single(1e-4, 1.0, 1.0)).unwrap();
        let (s, h) = klyshko_efficiencies(&r).unwrap();
        assert!((s - 1.0).abs() < 1e-3 && (h - 1.0).abs() < 1e-3);
    }

    #[test]
    fn hom_examples() {
        assert_eq!(hom_visibility(1.0, 0.0).unwrap(), 1.0);
        assert!((hom_visibility(1.0, 0.14).unwrap() - 0.86).abs() < 1e-12);
        assert!((hom_visibility(0.84, 0.14).unwrap() - 0.72).abs() < 0.01);
        assert!(hom_visibility(0.0, 0.1).is_err());
        assert!(hom_visibility(0.5, -0.1).is_err());
        let r = hom_report(0.84, 0.14).unwrap();
        assert!(r.non_classical);
        assert!((r.gap - (0.7224 - 0.61)).abs() < 1e-9);
    }

    #[test]
    fn dip_curve_shape() {
        let c = hom_dip_curve(0.84, 0.14, 2e11, &[0.0, 1e-12, 1e-9]).unwrap();
        assert!((c[0] - (1.0 - 0.84 * 0.86)).abs() < 1e-12);
        assert!(c[1] > c[0] && c[1] < 1.0);
        assert!((c[2] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn probabilities_are_consistent(n in 1usize..6, mu in 0.0f64..0.3, es in 0.0f64..=1.0, eh in 0.0f64..=1.0, mux: bool) {
            let m = MultiplexedStatisticsModel::new(n, mu, es, eh, mux).unwrap();
            let r = exact_counting(&m).unwrap();
            for p in [r.p_h, r.p_s, r.p_sh, r.p_s1h, r.p_s2h, r.p_s1s2h] {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
            }
            prop_assert!(r.p_sh <= r.p_h.min(r.p_s) + 1e-12);
            prop_assert!(r.p_s1s2h <= r.p_s1h.min(r.p_s2h) + 1e-12);
        }

        #[test]
        fn visibility_is_monotone(p in 0.01f64..=1.0, g in 0.0f64..2.0, dp in 0.0f64..0.5, dg in 0.0f64..0.5) {
            let v = hom_visibility(p, g).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(hom_visibility(p, g + dg).unwrap() <= v);
            prop_assert!(hom_visibility((p + dp).min(1.0), g).unwrap() >= v);
        }
    }
}
