//! Acceptance criteria at default settings. One PASS/FAIL line each; the
//! process exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use freqmux::feedforward::simulate_feedforward_stream;
use freqmux::grid::FrequencyGrid;
use freqmux::heralded::{assemble_density_matrix, gvd_parameter, purity_integral};
use freqmux::jsa::{build_anticorrelated_jsa, Axis, JointSpectralAmplitude, PumpEnvelope};
use freqmux::loss::{arm_efficiency, Arm, DetectorCase, LossTable};
use freqmux::scenario::ScenarioConfig;
use freqmux::serrodyne::{apply_temporal_phase, phase_jitter_purity, PhaseMode, ShifterModel, TimeWavepacket};
use freqmux::statistics::{
    analytic_counting, effective_mode_count, hom_visibility, klyshko_efficiencies, monte_carlo_counting,
    MultiplexedStatisticsModel,
};
use freqmux::units::{ghz_to_rad, wavelength_to_rad};
use freqmux::window::SpectralWindow;
use nalgebra::DMatrix;
use num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> freqmux::Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn purity_jitter(c: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let p = purity_integral(&c.state_model_with(10.0, false, 0.0)?)?;
    outcome(within(p, 0.92, 0.02), format!("purity {p:.4}, target 0.92 ± 0.02"))
}

fn purity_gvd(c: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let gamma = gvd_parameter(18.0, 300.0, 1535e-9)?;
    let p = purity_integral(&c.state_model_with(0.0, true, gamma)?)?;
    outcome(within(p, 0.95, 0.02), format!("purity {p:.4}, target 0.95 ± 0.02"))
}

fn purity_combined(c: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let gamma = gvd_parameter(18.0, 300.0, 1535e-9)?;
    let p = purity_integral(&c.state_model_with(10.0, false, gamma)?)?;
    outcome(within(p, 0.84, 0.02), format!("purity {p:.4}, target 0.84 ± 0.02"))
}

fn gvd(_: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let g = gvd_parameter(18.0, 300.0, 1535e-9)?.abs();
    outcome(
        (3.2e-24..=3.5e-24).contains(&g),
        format!("|gamma| {g:.4e} s^2, target [3.2e-24, 3.5e-24]"),
    )
}

fn hom(_: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let pure = hom_visibility(1.0, 0.14)?;
    let mixed = hom_visibility(0.84, 0.14)?;
    outcome(
        within(pure, 0.86, 0.005) && within(mixed, 0.72, 0.01),
        format!(
            "V {pure:.4} (0.86 ± 0.005), {mixed:.4} (0.72 ± 0.01); measured 0.61 ± 0.04, gap {:.2}",
            mixed - 0.61
        ),
    )
}

fn statistics(c: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let pulses = 1_000_000;
    let mu = 0.01;
    // weak herald, where g2 → 4μ for a threshold detector
    let single = monte_carlo_counting(&MultiplexedStatisticsModel::new(1, mu, 1.0, 0.1, true)?, pulses, c.seed)?;
    let g2_ok = (single.g2_h - 4.0 * mu).abs() <= 3.0 * single.std_errors.g2_h;
    let n = effective_mode_count(170.0, 60.0)?.round() as usize;
    let st = &c.statistics;
    let mux = MultiplexedStatisticsModel::new(n, mu, st.eta_s, st.eta_h, true)?;
    let one = MultiplexedStatisticsModel {
        multiplexing_enabled: false,
        ..mux
    };
    let ratio = analytic_counting(&mux)?.p_sh / analytic_counting(&one)?.p_sh;
    let (a, b) = (
        monte_carlo_counting(&mux, pulses, c.seed + 1)?,
        monte_carlo_counting(&one, pulses, c.seed + 2)?,
    );
    let mc_ratio = a.p_sh / b.p_sh;
    let se = a.std_errors.g2_h.hypot(b.std_errors.g2_h);
    let g2_flat = (a.g2_h - b.g2_h).abs() <= 3.0 * se || !(se.is_finite());
    outcome(
        g2_ok && (2.2..=3.4).contains(&ratio) && (2.2..=3.4).contains(&mc_ratio) && g2_flat,
        format!(
            "g2 {:.4} ± {:.4} vs 4mu {:.3}; N {n}, enhancement {ratio:.3} (MC {mc_ratio:.3}), target [2.2, 3.4]",
            single.g2_h,
            single.std_errors.g2_h,
            4.0 * mu
        ),
    )
}

fn loss(c: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let t = LossTable::laboratory(DetectorCase::Best);
    let (s, h) = (arm_efficiency(&t, Arm::Signal), arm_efficiency(&t, Arm::Herald));
    let pulses = 1_000_000u64;
    let mc = monte_carlo_counting(
        &MultiplexedStatisticsModel::new(1, 0.01, 0.14, 0.13, true)?,
        pulses,
        c.seed,
    )?;
    let (es, eh) = klyshko_efficiencies(&mc)?;
    let se_s = (es * (1.0 - es) / (mc.p_h * pulses as f64)).sqrt();
    let se_h = (eh * (1.0 - eh) / (mc.p_s * pulses as f64)).sqrt();
    let closed = (es - 0.14).abs() <= 3.0 * se_s && (eh - 0.13).abs() <= 3.0 * se_h;
    outcome(
        within(s, 0.13, 0.005) && within(h, 0.12, 0.005) && closed,
        format!("arms {s:.4}/{h:.4} vs 0.13/0.12 ± 0.005; Klyshko {es:.4} ± {se_s:.4}, {eh:.4} ± {se_h:.4}"),
    )
}

fn properties(c: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };
    let pump = PumpEnvelope::new(ghz_to_rad(50.95), wavelength_to_rad(775e-9))?;
    let center = 0.5 * pump.center;
    let g = FrequencyGrid::around(center, pump.sigma, 6.0, 129)?;
    let jsa = build_anticorrelated_jsa(&pump, &g, &g)?;
    let filtered = jsa.apply_filter(Axis::Signal, &SpectralWindow::top_hat(center, ghz_to_rad(50.0))?)?;
    check(
        "JSA normalization",
        (jsa.norm_squared() - 1.0).abs() < 1e-9 && (filtered.jsa.norm_squared() - 1.0).abs() < 1e-9,
    );

    let gamma = c.gamma()?;
    let mut models = Vec::new();
    for (u, ideal, gm) in [
        (0.0, true, 0.0),
        (10.0, false, 0.0),
        (0.0, true, gamma),
        (10.0, false, gamma),
    ] {
        let mut m = c.state_model_with(u, ideal, gm)?;
        m.quadrature = m.quadrature.scaled(0.5);
        models.push(m);
    }
    for m in &models {
        let rho = assemble_density_matrix(m)?;
        check("density matrix state", rho.validate().is_ok());
    }

    // Schmidt purity of a filtered JSA with Gaussian herald acceptance against the mixture integral
    let acceptance = ghz_to_rad(10.0);
    let mut m = c.state_model_with(10.0, false, 0.0)?;
    m.spectrometer.tdc_bin = None;
    m.quadrature = m.quadrature.scaled(0.5);
    let integral = purity_integral(&m)?;
    let s = FrequencyGrid::new(m.filter_center, m.filter_width, 257)?;
    let hc = m.degenerate_herald();
    let window = SpectralWindow::gaussian(hc, acceptance)?;
    let h = FrequencyGrid::around(hc, acceptance / freqmux::units::FWHM_PER_SIGMA, 8.0, 257)?;
    let amp = DMatrix::from_fn(s.len(), h.len(), |r, k| {
        Complex64::new(
            pump.amplitude(s.value(r), h.value(k)) * window.amplitude(h.value(k)),
            0.0,
        )
    });
    let schmidt = JointSpectralAmplitude::from_matrix(s, h, amp)?.schmidt_purity()?;
    check("Schmidt vs integral", (schmidt - integral).abs() <= 1e-2);

    let mut last = f64::INFINITY;
    for u in [0.0, 10.0, 20.0, 40.0] {
        let mut m = c.state_model_with(u, u == 0.0, 0.0)?;
        m.quadrature = m.quadrature.scaled(0.5);
        let p = purity_integral(&m)?;
        check("purity monotone in jitter", p <= last + 1e-9);
        last = p;
    }
    last = f64::INFINITY;
    for l in [10.0, 150.0, 300.0, 600.0] {
        let mut m = c.state_model_with(0.0, true, gvd_parameter(c.fibre.dispersion_ps_nm_km, l, 1535e-9)?)?;
        m.quadrature = m.quadrature.scaled(0.5);
        let p = purity_integral(&m)?;
        check("purity monotone in gamma", p <= last + 1e-9);
        last = p;
    }
    let shifter = ShifterModel::default_model();
    last = f64::INFINITY;
    for ps in [0.0, 2.0, 5.3, 10.0, 20.0] {
        let p = phase_jitter_purity(ps * 1e-12, pump.sigma, shifter.max_shift(), &shifter)?;
        check("purity decreasing in drive jitter", p < last);
        last = p;
    }

    let mut seed = c.seed;
    for n in [1, 2, 3] {
        for eta in [0.12, 0.5, 1.0] {
            let m = MultiplexedStatisticsModel::new(n, 0.02, eta, eta, true)?;
            let a = analytic_counting(&m)?;
            let mc = monte_carlo_counting(&m, 1_000_000, seed)?;
            seed += 1;
            check(
                "analytic vs Monte Carlo",
                (mc.p_sh - a.p_sh).abs() <= 3.0 * mc.std_errors.p_sh,
            );
        }
    }

    for k in [-1.0, -0.3, 0.25, 0.9] {
        let v = 0.7 * shifter.v0_max;
        check(
            "shift linearity",
            (shifter.shift_magnitude(k * v)? - k * shifter.shift_magnitude(v)?).abs() <= 1e-12 * shifter.max_shift(),
        );
    }
    let wp = TimeWavepacket::gaussian(pump.sigma, 513, 8.0)?;
    for mode in [PhaseMode::Sinusoidal, PhaseMode::Linearized] {
        let out = apply_temporal_phase(&wp, shifter.v0_max, 0.3, &shifter, mode);
        check(
            "norm preservation",
            (out.norm_squared() - wp.norm_squared()).abs() < 1e-9,
        );
    }

    let mut m = c.state_model()?;
    m.quadrature.check_refinement = true;
    check("grid refinement", purity_integral(&m).is_ok());

    let sc = c.stream_config()?;
    let a = simulate_feedforward_stream(&sc, 20_000, c.seed)?;
    let b = simulate_feedforward_stream(&sc, 20_000, c.seed)?;
    check("fixed-seed reproducibility", a == b);

    failed.dedup();
    let detail = if failed.is_empty() {
        "all property checks hold".to_string()
    } else {
        format!("failed: {}", failed.join(", "))
    };
    outcome(failed.is_empty(), detail)
}

fn stream(c: &ScenarioConfig) -> freqmux::Result<Outcome> {
    let out = simulate_feedforward_stream(&c.stream_config()?, 100_000, c.seed)?;
    let (r0, r1) = (out.unshifted.correlation(), out.shifted.correlation());
    outcome(
        r0 <= -0.9 && r1.abs() < 0.2,
        format!("unshifted r {r0:.3} (<= -0.9), shifted r {r1:.3} (|r| < 0.2)"),
    )
}

type Criterion = fn(&ScenarioConfig) -> freqmux::Result<Outcome>;

fn main() -> ExitCode {
    let config = ScenarioConfig::default();
    let criteria: [(&str, Criterion, u64); 9] = [
        ("1 purity, spectrometer jitter only", purity_jitter, 120),
        ("2 purity, fibre GVD only", purity_gvd, 120),
        ("3 purity, combined", purity_combined, 600),
        ("4 GVD conversion", gvd, 1),
        ("5 HOM visibility chain", hom, 1),
        ("6 photon statistics", statistics, 300),
        ("7 loss budget", loss, 60),
        ("8 property suites", properties, 600),
        ("9 feed-forward stream", stream, 120),
    ];
    let mut all = true;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let result = f(&config);
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= pass;
        println!(
            "{} criterion {name}: {detail}; {:.2} s (budget {budget} s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
