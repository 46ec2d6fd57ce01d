use std::collections::BTreeMap;

use freqmux::grid::FrequencyGrid;
use freqmux::spectrometer::{GridDensity, SpectrometerModel};
use freqmux::units::{ghz_to_rad, wavelength_to_rad};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn model() -> SpectrometerModel {
    SpectrometerModel::default_at(wavelength_to_rad(1535e-9), ghz_to_rad(120.0)).unwrap()
}

#[test]
fn sampled_bins_follow_outcome_distribution() {
    let m = model();
    let omega = m.reference_frequency + ghz_to_rad(13.3);
    let expected = m.conditional_outcome_distribution(omega).unwrap();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for _ in 0..n {
        let bin = m.sample_herald_event(omega, &mut rng).time_bin_index.unwrap();
        *counts.entry(bin).or_default() += 1;
    }
    // pool the tails so every cell expects at least five counts
    let (mut cells, mut acc_e, mut acc_o) = (Vec::new(), 0.0, 0.0);
    let lo = *counts.keys().next().unwrap().min(&expected.first_bin);
    let hi = *counts
        .keys()
        .last()
        .unwrap()
        .max(&(expected.first_bin + expected.probabilities.len() as i64));
    for bin in lo..=hi {
        acc_e += expected.probability(bin) * n as f64;
        acc_o += counts.get(&bin).copied().unwrap_or(0) as f64;
        if acc_e >= 5.0 {
            cells.push((acc_o, acc_e));
            acc_e = 0.0;
            acc_o = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += acc_o;
        last.1 += acc_e;
    }
    let chi2: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (cells.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2} on {dof} dof, p = {p}");
}

#[test]
fn arrival_time_is_monotone_over_range() {
    let m = model();
    let half = m.calibrated_half_range;
    let ts: Vec<f64> = (-100..=100)
        .map(|k| {
            m.frequency_to_arrival_time(m.reference_frequency + half * k as f64 / 100.0)
                .unwrap()
        })
        .collect();
    let up = ts.windows(2).all(|w| w[1] > w[0]);
    let down = ts.windows(2).all(|w| w[1] < w[0]);
    assert!(up || down);
    assert!(m
        .frequency_to_arrival_time(m.reference_frequency + 1.01 * half)
        .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn posterior_is_a_density(detune_ghz in -100.0f64..100.0) {
        let m = model();
        let prior = GridDensity::uniform(FrequencyGrid::new(m.reference_frequency, ghz_to_rad(400.0), 801).unwrap());
        let t = m.frequency_to_arrival_time(m.reference_frequency + ghz_to_rad(detune_ghz)).unwrap();
        let bin = m.bin_index(t).unwrap();
        let post = m.herald_posterior(&m.outcome_for_bin(bin), &prior).unwrap();
        let mass: f64 = post.masses().iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-9);
        prop_assert!(post.values().iter().all(|&v| v >= 0.0));
        // a flat prior centers the posterior on the bin
        prop_assert!((post.mean() - m.bin_frequency(bin)).abs() < ghz_to_rad(0.05));
    }
}
