//! Scenario configuration and the runner behind the command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feedforward::{simulate_feedforward_stream, write_events_csv, HistogramAxes, StreamConfig};
use crate::grid::FrequencyGrid;
use crate::heralded::{gvd_parameter, purity_integral, write_sweep_csv, HeraldedStateModel, QuadratureSettings};
use crate::jsa::PumpEnvelope;
use crate::loss::{arm_efficiency, reconcile, Arm, DetectorCase, LossTable, Measured};
use crate::serrodyne::{build_lut, phase_jitter_purity, ShifterModel};
use crate::spectrometer::{GridDensity, JitterDistribution, SpectrometerModel};
use crate::statistics::{
    effective_mode_count, exact_counting, hom_dip_curve, hom_report, hom_visibility, monte_carlo_counting, write_csv,
    MultiplexedStatisticsModel,
};
use crate::units::{ghz_to_rad, ps, ps_per_ghz_to_s_per_rad, wavelength_to_rad, FWHM_PER_SIGMA};

/// The documented default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PurityJitter,
    PurityGvd,
    PurityCombined,
    StatsSweep,
    JointSpectrum,
    HomDip,
    LossBudget,
    LutDump,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::PurityJitter => "purity-jitter",
            Scenario::PurityGvd => "purity-gvd",
            Scenario::PurityCombined => "purity-combined",
            Scenario::StatsSweep => "stats-sweep",
            Scenario::JointSpectrum => "joint-spectrum",
            Scenario::HomDip => "hom-dip",
            Scenario::LossBudget => "loss-budget",
            Scenario::LutDump => "lut-dump",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub pump_wavelength_nm: f64,
    pub target_wavelength_nm: f64,
    pub pump_sigma_ghz: f64,
    pub filter_width_ghz: f64,
    pub herald_span_rad_s: f64,
    pub prior_points: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            pump_wavelength_nm: 775.0,
            target_wavelength_nm: 1535.0,
            pump_sigma_ghz: 50.95,
            filter_width_ghz: 50.0,
            herald_span_rad_s: 1.11e12,
            prior_points: 1025,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrometerConfig {
    pub ideal: bool,
    pub dispersion_ps_per_ghz: f64,
    pub tdc_bin_ps: f64,
    pub uncertainty_fwhm_ghz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter_histogram: Option<PathBuf>,
}

impl Default for SpectrometerConfig {
    fn default() -> Self {
        Self {
            ideal: false,
            dispersion_ps_per_ghz: 16.0,
            tdc_bin_ps: 33.0,
            uncertainty_fwhm_ghz: 10.0,
            jitter_histogram: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FibreConfig {
    pub dispersion_ps_nm_km: f64,
    pub length_m: f64,
}

impl Default for FibreConfig {
    fn default() -> Self {
        Self {
            dispersion_ps_nm_km: 18.0,
            length_m: 300.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShifterConfig {
    pub v_pi: f64,
    pub nu_rf_ghz: f64,
    pub max_shift_ghz: f64,
    pub sigma_jitter_ps: f64,
}

impl Default for ShifterConfig {
    fn default() -> Self {
        Self {
            v_pi: 3.0,
            nu_rf_ghz: 8.0,
            max_shift_ghz: 85.0,
            sigma_jitter_ps: 5.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub signal_points: usize,
    pub herald_points: usize,
    pub offset_points: usize,
    pub offset_half_width: f64,
    pub check_refinement: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let q = QuadratureSettings::default();
        Self {
            signal_points: q.signal_points,
            herald_points: q.herald_points,
            offset_points: q.offset_points,
            offset_half_width: q.offset_half_width,
            check_refinement: q.check_refinement,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_modes: Option<usize>,
    pub shift_range_ghz: f64,
    pub photon_bandwidth_ghz: f64,
    pub mu_values: Vec<f64>,
    pub eta_s: f64,
    pub eta_h: f64,
    pub pulses: u64,
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        Self {
            n_modes: None,
            shift_range_ghz: 170.0,
            photon_bandwidth_ghz: 60.0,
            mu_values: vec![0.001, 0.002, 0.005, 0.01, 0.02],
            eta_s: 0.13,
            eta_h: 0.12,
            pulses: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub pulses: u64,
    pub shifting: bool,
    pub generation_half_range_ghz: f64,
    pub histogram_half_range_ghz: f64,
    pub histogram_bins: usize,
    pub eta_s: f64,
    pub eta_h: f64,
    pub write_events: bool,
}

impl Default for StreamSection {
    fn default() -> Self {
        Self {
            pulses: 100_000,
            shifting: true,
            generation_half_range_ghz: 400.0,
            histogram_half_range_ghz: 200.0,
            histogram_bins: 64,
            eta_s: 1.0,
            eta_h: 1.0,
            write_events: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomConfig {
    pub purity: f64,
    pub g2_h: f64,
    pub bandwidth_ghz: f64,
    pub delay_half_range_ps: f64,
    pub delay_points: usize,
}

impl Default for HomConfig {
    fn default() -> Self {
        Self {
            purity: 0.84,
            g2_h: 0.14,
            bandwidth_ghz: 14.43,
            delay_half_range_ps: 100.0,
            delay_points: 201,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub detector_case: DetectorCase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    pub klyshko_signal: f64,
    pub klyshko_herald_low: f64,
    pub klyshko_herald_high: f64,
    pub tolerance: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            detector_case: DetectorCase::Best,
            table: None,
            klyshko_signal: 0.14,
            klyshko_herald_low: 0.11,
            klyshko_herald_high: 0.15,
            tolerance: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub uncertainty_fwhm_ghz: Vec<f64>,
    pub fibre_length_m: Vec<f64>,
    pub phase_jitter_ps: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            uncertainty_fwhm_ghz: vec![0.0, 5.0, 10.0, 20.0, 40.0],
            fibre_length_m: vec![0.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            phase_jitter_ps: vec![0.0, 2.0, 4.0, 5.3, 8.0, 12.0, 16.0, 20.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid_scale: f64,
    pub source: SourceConfig,
    pub spectrometer: SpectrometerConfig,
    pub fibre: FibreConfig,
    pub shifter: ShifterConfig,
    pub quadrature: QuadratureConfig,
    pub statistics: StatisticsConfig,
    pub stream: StreamSection,
    pub hom: HomConfig,
    pub loss: LossConfig,
    pub sweep: SweepConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::PurityCombined,
            seed: 1,
            output_dir: PathBuf::from("freqmux-out"),
            grid_scale: 1.0,
            source: SourceConfig::default(),
            spectrometer: SpectrometerConfig::default(),
            fibre: FibreConfig::default(),
            shifter: ShifterConfig::default(),
            quadrature: QuadratureConfig::default(),
            statistics: StatisticsConfig::default(),
            stream: StreamSection::default(),
            hom: HomConfig::default(),
            loss: LossConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn field_error(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

fn require(ok: bool, field: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(field_error(field, message))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Canonical TOML of every effective setting.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_toml`], ignoring
    /// the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))[..16].to_string()
    }

    /// Checks every field against the preconditions of the model it feeds.
    pub fn validate(&self) -> Result<()> {
        require(
            self.grid_scale > 0.0 && self.grid_scale.is_finite(),
            "grid_scale",
            "must be positive",
        )?;
        let s = &self.source;
        require(
            s.pump_wavelength_nm > 0.0,
            "source.pump_wavelength_nm",
            "must be positive",
        )?;
        require(
            s.target_wavelength_nm > s.pump_wavelength_nm,
            "source.target_wavelength_nm",
            "must exceed the pump wavelength",
        )?;
        require(s.pump_sigma_ghz > 0.0, "source.pump_sigma_ghz", "must be positive")?;
        require(s.filter_width_ghz > 0.0, "source.filter_width_ghz", "must be positive")?;
        require(
            s.herald_span_rad_s > 0.0,
            "source.herald_span_rad_s",
            "must be positive",
        )?;
        require(s.prior_points >= 3, "source.prior_points", "need at least 3 nodes")?;
        let sp = &self.spectrometer;
        require(
            sp.dispersion_ps_per_ghz > 0.0,
            "spectrometer.dispersion_ps_per_ghz",
            "must be positive",
        )?;
        require(sp.tdc_bin_ps >= 0.0, "spectrometer.tdc_bin_ps", "must be non-negative")?;
        require(
            sp.uncertainty_fwhm_ghz >= 0.0,
            "spectrometer.uncertainty_fwhm_ghz",
            "must be non-negative",
        )?;
        require(self.fibre.length_m >= 0.0, "fibre.length_m", "must be non-negative")?;
        self.shifter_model()?;
        let q = &self.quadrature;
        require(
            q.signal_points >= 3,
            "quadrature.signal_points",
            "need at least 3 nodes",
        )?;
        require(
            q.herald_points >= 2,
            "quadrature.herald_points",
            "need at least 2 nodes",
        )?;
        require(
            q.offset_points >= 3,
            "quadrature.offset_points",
            "need at least 3 nodes",
        )?;
        require(
            q.offset_half_width > 0.0,
            "quadrature.offset_half_width",
            "must be positive",
        )?;
        let st = &self.statistics;
        require(
            !st.mu_values.is_empty(),
            "statistics.mu_values",
            "need at least one value",
        )?;
        require(st.pulses > 0, "statistics.pulses", "must be positive")?;
        require(st.n_modes != Some(0), "statistics.n_modes", "need at least one mode")?;
        for &mu in &st.mu_values {
            MultiplexedStatisticsModel::new(self.mode_count()?, mu, st.eta_s, st.eta_h, true)
                .map_err(|e| field_error("statistics", e))?;
        }
        let sm = &self.stream;
        require(sm.pulses > 0, "stream.pulses", "must be positive")?;
        require(sm.histogram_bins > 0, "stream.histogram_bins", "must be positive")?;
        require(
            sm.histogram_half_range_ghz > 0.0,
            "stream.histogram_half_range_ghz",
            "must be positive",
        )?;
        require(
            sm.generation_half_range_ghz > 0.0,
            "stream.generation_half_range_ghz",
            "must be positive",
        )?;
        require((0.0..=1.0).contains(&sm.eta_s), "stream.eta_s", "must lie in [0, 1]")?;
        require((0.0..=1.0).contains(&sm.eta_h), "stream.eta_h", "must lie in [0, 1]")?;
        let h = &self.hom;
        require((0.0..=1.0).contains(&h.purity), "hom.purity", "must lie in [0, 1]")?;
        require(h.g2_h >= 0.0, "hom.g2_h", "must be non-negative")?;
        require(h.bandwidth_ghz > 0.0, "hom.bandwidth_ghz", "must be positive")?;
        require(h.delay_points >= 2, "hom.delay_points", "need at least 2 points")?;
        require(
            h.delay_half_range_ps > 0.0,
            "hom.delay_half_range_ps",
            "must be positive",
        )?;
        let l = &self.loss;
        require(
            l.klyshko_herald_low <= l.klyshko_herald_high,
            "loss.klyshko_herald_low",
            "must not exceed the high end",
        )?;
        require(l.tolerance >= 0.0, "loss.tolerance", "must be non-negative")?;
        require(
            self.sweep.uncertainty_fwhm_ghz.iter().all(|&u| u >= 0.0),
            "sweep.uncertainty_fwhm_ghz",
            "values must be non-negative",
        )?;
        require(
            self.sweep.fibre_length_m.iter().all(|&u| u >= 0.0),
            "sweep.fibre_length_m",
            "values must be non-negative",
        )?;
        require(
            self.sweep.phase_jitter_ps.iter().all(|&u| u >= 0.0),
            "sweep.phase_jitter_ps",
            "values must be non-negative",
        )?;
        Ok(())
    }

    pub fn mode_count(&self) -> Result<usize> {
        match self.statistics.n_modes {
            Some(n) => Ok(n),
            None => {
                let n = effective_mode_count(self.statistics.shift_range_ghz, self.statistics.photon_bandwidth_ghz)
                    .map_err(|e| field_error("statistics.shift_range_ghz", e))?;
                Ok((n.round() as usize).max(1))
            }
        }
    }

    pub fn shifter_model(&self) -> Result<ShifterModel> {
        let s = &self.shifter;
        ShifterModel::with_max_shift(s.v_pi, s.nu_rf_ghz * 1e9, s.max_shift_ghz * 1e9, ps(s.sigma_jitter_ps))
            .map_err(|e| field_error("shifter", e))
    }

    fn gamma_for_length(&self, length: f64) -> Result<f64> {
        if length == 0.0 {
            return Ok(0.0);
        }
        gvd_parameter(
            self.fibre.dispersion_ps_nm_km,
            length,
            self.source.target_wavelength_nm * 1e-9,
        )
        .map_err(|e| field_error("fibre", e))
    }

    pub fn gamma(&self) -> Result<f64> {
        self.gamma_for_length(self.fibre.length_m)
    }

    fn spectrometer_model(&self, uncertainty_fwhm_ghz: f64, ideal: bool) -> Result<SpectrometerModel> {
        let sp = &self.spectrometer;
        let reference = wavelength_to_rad(self.source.pump_wavelength_nm * 1e-9)
            - wavelength_to_rad(self.source.target_wavelength_nm * 1e-9);
        let half = 0.5 * self.source.herald_span_rad_s;
        let d = ps_per_ghz_to_s_per_rad(sp.dispersion_ps_per_ghz);
        if ideal {
            return SpectrometerModel::new(d, None, JitterDistribution::None, reference, half)
                .map_err(|e| field_error("spectrometer", e));
        }
        let jitter = match &sp.jitter_histogram {
            Some(path) => {
                let f = fs::File::open(path).map_err(|e| field_error("spectrometer.jitter_histogram", e))?;
                JitterDistribution::read_histogram(BufReader::new(f))
                    .map_err(|e| field_error("spectrometer.jitter_histogram", e))?
            }
            None => JitterDistribution::gaussian(ghz_to_rad(uncertainty_fwhm_ghz) / FWHM_PER_SIGMA * d)
                .map_err(|e| field_error("spectrometer.uncertainty_fwhm_ghz", e))?,
        };
        let tdc = (sp.tdc_bin_ps > 0.0).then(|| ps(sp.tdc_bin_ps));
        SpectrometerModel::new(d, tdc, jitter, reference, half).map_err(|e| field_error("spectrometer", e))
    }

    /// Heralded-state model with the configured spectrometer at the given
    /// uncertainty, or an ideal one.
    pub fn state_model_with(&self, uncertainty_fwhm_ghz: f64, ideal: bool, gamma: f64) -> Result<HeraldedStateModel> {
        let s = &self.source;
        let omega_p = wavelength_to_rad(s.pump_wavelength_nm * 1e-9);
        let omega_c = wavelength_to_rad(s.target_wavelength_nm * 1e-9);
        let spectrometer = self.spectrometer_model(uncertainty_fwhm_ghz, ideal || self.spectrometer.ideal)?;
        let prior_grid = FrequencyGrid::new(omega_p - omega_c, s.herald_span_rad_s, s.prior_points)
            .map_err(|e| field_error("source.herald_span_rad_s", e))?;
        let q = &self.quadrature;
        let quadrature = QuadratureSettings {
            signal_points: q.signal_points,
            herald_points: q.herald_points,
            offset_points: q.offset_points,
            offset_half_width: q.offset_half_width,
            check_refinement: q.check_refinement,
        }
        .scaled(self.grid_scale);
        let model = HeraldedStateModel {
            pump: PumpEnvelope::new(ghz_to_rad(s.pump_sigma_ghz), omega_p).map_err(|e| field_error("source", e))?,
            filter_center: omega_c,
            filter_width: ghz_to_rad(s.filter_width_ghz),
            gamma,
            dispersion_reference: omega_c,
            spectrometer,
            herald_prior: GridDensity::uniform(prior_grid),
            max_shift: ghz_to_rad(self.shifter.max_shift_ghz),
            quadrature,
        };
        model.validate().map_err(|e| field_error("source", e))?;
        Ok(model)
    }

    /// Configured spectrometer and fibre.
    pub fn state_model(&self) -> Result<HeraldedStateModel> {
        self.state_model_with(self.spectrometer.uncertainty_fwhm_ghz, false, self.gamma()?)
    }

    pub fn stream_config(&self) -> Result<StreamConfig> {
        let sm = &self.stream;
        Ok(StreamConfig {
            state: self.state_model_with(self.spectrometer.uncertainty_fwhm_ghz, false, 0.0)?,
            shifter: self.shifter_model()?,
            shifting_enabled: sm.shifting,
            eta_s: sm.eta_s,
            eta_h: sm.eta_h,
            generation_half_range_ghz: sm.generation_half_range_ghz,
            axes: HistogramAxes {
                half_range_ghz: sm.histogram_half_range_ghz,
                bins: sm.histogram_bins,
            },
        })
    }

    pub fn loss_table(&self) -> Result<LossTable> {
        match &self.loss.table {
            Some(path) => {
                let f = fs::File::open(path).map_err(|e| field_error("loss.table", e))?;
                LossTable::from_csv(f).map_err(|e| field_error("loss.table", e))
            }
            None => Ok(LossTable::laboratory(self.loss.detector_case)),
        }
    }
}

/// A target the summary checks against.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    fn within(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: format!("{target} ± {tolerance}"),
            pass: (value - target).abs() <= tolerance,
        }
    }

    fn between(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: format!("[{lo}, {hi}]"),
            pass: (lo..=hi).contains(&value),
        }
    }

    fn flag(name: &str, value: f64, target: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            target: target.into(),
            pass,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub values: Vec<(String, f64)>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Summary {
    fn value(&mut self, key: &str, v: f64) {
        self.values.push((key.to_string(), v));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self, scenario: Scenario) -> String {
        let mut out = format!("scenario {}\n", scenario.name());
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {}", fmt_value(*v));
        }
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {}: {} (target {})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                fmt_value(c.value),
                c.target
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

fn fmt_value(v: f64) -> String {
    if v == 0.0 || (1e-3..1e6).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    /// Effective configuration; rerunning it reproduces every data file.
    pub config: String,
    pub wall_time_s: f64,
    pub files: Vec<FileRecord>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub summary: Summary,
    pub manifest: Manifest,
}

type Outputs = Vec<(String, Vec<u8>)>;

/// Runs the configured scenario and writes its data files, `summary.txt`
/// and `manifest.json` into the output directory.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    log::info!(
        "running {} (seed {}, grid scale {})",
        config.scenario.name(),
        config.seed,
        config.grid_scale
    );
    let (files, summary) = compute(config)?;
    log::info!("computed in {:.2} s", started.elapsed().as_secs_f64());
    fs::create_dir_all(&config.output_dir)?;
    let mut records = Vec::new();
    for (name, bytes) in &files {
        fs::write(config.output_dir.join(name), bytes)?;
        log::debug!("wrote {name} ({} bytes)", bytes.len());
        records.push(FileRecord {
            path: name.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }
    let text = summary.to_text(config.scenario);
    fs::write(config.output_dir.join("summary.txt"), &text)?;
    records.push(FileRecord {
        path: "summary.txt".into(),
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    });
    let manifest = Manifest {
        tool: "freqmux".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: config.scenario.name().into(),
        seed: config.seed,
        config_hash: config.hash(),
        config: config.to_toml(),
        wall_time_s: started.elapsed().as_secs_f64(),
        files: records,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(config.output_dir.join("manifest.json"), json)?;
    Ok(RunReport {
        output_dir: config.output_dir.clone(),
        summary,
        manifest,
    })
}

fn compute(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    match config.scenario {
        Scenario::PurityJitter => purity_jitter(config),
        Scenario::PurityGvd => purity_gvd(config),
        Scenario::PurityCombined => purity_combined(config),
        Scenario::StatsSweep => stats_sweep(config),
        Scenario::JointSpectrum => joint_spectrum(config),
        Scenario::HomDip => hom_dip(config),
        Scenario::LossBudget => loss_budget(config),
        Scenario::LutDump => lut_dump(config),
    }
}

fn sweep_file(parameter: &str, rows: &[(f64, f64)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, parameter, rows)?;
    Ok(buf)
}

fn photon_sigma(config: &ScenarioConfig) -> f64 {
    ghz_to_rad(config.source.pump_sigma_ghz)
}

fn purity_jitter(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let mut summary = Summary::default();
    let p = purity_integral(&config.state_model_with(config.spectrometer.uncertainty_fwhm_ghz, false, 0.0)?)?;
    summary.value("purity", p);
    summary
        .checks
        .push(Check::within("purity, spectrometer jitter only", p, 0.92, 0.02));
    let mut rows = Vec::new();
    for &u in &config.sweep.uncertainty_fwhm_ghz {
        rows.push((u, purity_integral(&config.state_model_with(u, false, 0.0)?)?));
    }
    let shifter = config.shifter_model()?;
    let shift = config.shifter.max_shift_ghz * 1e9;
    let mut phase_rows = Vec::new();
    for &sj in &config.sweep.phase_jitter_ps {
        phase_rows.push((sj, phase_jitter_purity(ps(sj), photon_sigma(config), shift, &shifter)?));
    }
    let monotone = phase_rows.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    summary.checks.push(Check::flag(
        "drive-jitter purity non-increasing",
        phase_rows.last().map_or(1.0, |r| r.1),
        "monotone",
        monotone,
    ));
    Ok((
        vec![
            (
                "purity_vs_uncertainty.csv".into(),
                sweep_file("uncertainty_fwhm_ghz", &rows)?,
            ),
            (
                "purity_vs_drive_jitter.csv".into(),
                sweep_file("sigma_jitter_ps", &phase_rows)?,
            ),
        ],
        summary,
    ))
}

fn purity_gvd(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let mut summary = Summary::default();
    let gamma = config.gamma()?;
    let p = purity_integral(&config.state_model_with(0.0, true, gamma)?)?;
    summary.value("gamma_s2", gamma);
    summary.value("purity", p);
    summary
        .checks
        .push(Check::within("purity, fibre dispersion only", p, 0.95, 0.02));
    let mut rows = Vec::new();
    for &l in &config.sweep.fibre_length_m {
        rows.push((
            l,
            purity_integral(&config.state_model_with(0.0, true, config.gamma_for_length(l)?)?)?,
        ));
    }
    Ok((
        vec![("purity_vs_length.csv".into(), sweep_file("fibre_length_m", &rows)?)],
        summary,
    ))
}

fn purity_combined(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let mut summary = Summary::default();
    let gamma = config.gamma()?;
    let p = purity_integral(&config.state_model()?)?;
    let shifter = config.shifter_model()?;
    let drive = phase_jitter_purity(
        shifter.sigma_jitter,
        photon_sigma(config),
        config.shifter.max_shift_ghz * 1e9,
        &shifter,
    )?;
    summary.value("gamma_s2", gamma);
    summary.value("purity", p);
    summary.value("drive_jitter_purity", drive);
    summary.checks.push(Check::within(
        "purity, spectrometer jitter and dispersion",
        p,
        0.84,
        0.02,
    ));
    summary
        .checks
        .push(Check::flag("drive-jitter purity", drive, "> 0.95", drive > 0.95));
    let rows = [(config.fibre.length_m, p)];
    Ok((
        vec![("purity.csv".into(), sweep_file("fibre_length_m", &rows)?)],
        summary,
    ))
}

fn stats_sweep(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let st = &config.statistics;
    let n = config.mode_count()?;
    let hash = config.hash();
    let mut mc_rows = Vec::new();
    let mut exact_rows = Vec::new();
    for (k, &mu) in st.mu_values.iter().enumerate() {
        for mux in [false, true] {
            let m = MultiplexedStatisticsModel::new(n, mu, st.eta_s, st.eta_h, mux)?;
            // every point gets its own seed derived from the run seed
            let seed = config
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add(2 * k as u64 + u64::from(mux));
            mc_rows.push((m, monte_carlo_counting(&m, st.pulses, seed)?));
            exact_rows.push((m, exact_counting(&m)?));
        }
    }
    let mut summary = Summary::default();
    let (single, multi) = (&exact_rows[0].1, &exact_rows[1].1);
    let ratio = multi.p_sh / single.p_sh;
    summary.value("n_modes", n as f64);
    summary.value("enhancement_ratio", ratio);
    summary
        .checks
        .push(Check::between("P(S,H) enhancement", ratio, 2.2, 3.4));
    let g2_shift = exact_rows
        .chunks(2)
        .map(|c| (c[1].1.g2_h - c[0].1.g2_h).abs() / c[0].1.g2_h)
        .fold(0.0, f64::max);
    summary.checks.push(Check::flag(
        "g2_H change under multiplexing (relative)",
        g2_shift,
        "< 1e-9",
        g2_shift < 1e-9,
    ));
    let monotone = |mux: bool| {
        let col: Vec<f64> = exact_rows
            .iter()
            .filter(|(m, _)| m.multiplexing_enabled == mux)
            .map(|(_, r)| r.p_sh)
            .collect();
        col.windows(2).all(|w| w[1] >= w[0])
    };
    summary.checks.push(Check::flag(
        "P(S,H) increases with mu",
        ratio,
        "monotone in both columns",
        monotone(false) && monotone(true),
    ));
    let worst_z = mc_rows
        .iter()
        .zip(&exact_rows)
        .map(|((_, mc), (_, ex))| (mc.p_sh - ex.p_sh).abs() / mc.std_errors.p_sh.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    summary.value("max_monte_carlo_z", worst_z);
    summary
        .notes
        .push("absolute pump power is not calibrated; mu is the mean pair number per mode".into());
    let mut mc = Vec::new();
    write_csv(&mut mc, &mc_rows, &hash)?;
    let mut ex = Vec::new();
    write_csv(&mut ex, &exact_rows, &hash)?;
    Ok((
        vec![("stats_monte_carlo.csv".into(), mc), ("stats_exact.csv".into(), ex)],
        summary,
    ))
}

fn joint_spectrum(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let stream = config.stream_config()?;
    let out = simulate_feedforward_stream(&stream, config.stream.pulses, config.seed)?;
    let mut summary = Summary::default();
    let (r0, r1) = (out.unshifted.correlation(), out.shifted.correlation());
    summary.value("correlation_unshifted", r0);
    summary.value("correlation_shifted", r1);
    summary.value("passed_fraction", out.passed_fraction());
    summary
        .checks
        .push(Check::flag("unshifted anticorrelation", r0, "<= -0.9", r0 <= -0.9));
    if config.stream.shifting {
        summary
            .checks
            .push(Check::flag("shifted independence", r1, "|r| < 0.2", r1.abs() < 0.2));
    }
    let mut files: Outputs = Vec::new();
    let mut buf = Vec::new();
    out.unshifted.write_csv(&mut buf)?;
    files.push(("joint_unshifted.csv".into(), buf));
    let mut buf = Vec::new();
    out.shifted.write_csv(&mut buf)?;
    files.push(("joint_shifted.csv".into(), buf));
    if config.stream.write_events {
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &out.events)?;
        files.push(("events.csv".into(), buf));
    }
    Ok((files, summary))
}

fn hom_dip(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let h = &config.hom;
    let report = hom_report(h.purity, h.g2_h)?;
    let mut summary = Summary::default();
    summary.value("visibility", report.visibility);
    summary.value("measured_visibility", report.measured);
    summary.value("model_minus_measured", report.gap);
    let pure = hom_visibility(1.0, 0.14)?;
    let mixed = hom_visibility(0.84, 0.14)?;
    summary
        .checks
        .push(Check::within("visibility, pure state, g2 0.14", pure, 0.86, 0.005));
    summary
        .checks
        .push(Check::within("visibility, purity 0.84, g2 0.14", mixed, 0.72, 0.01));
    summary.checks.push(Check::flag(
        "non-classical interference",
        report.visibility,
        "> 0.5",
        report.non_classical,
    ));
    summary.notes.push(format!(
        "measured visibility {} ± {} is not a reproduction target; the model exceeds it by {:.3}",
        report.measured, report.measured_error, report.gap
    ));
    let n = h.delay_points;
    let delays: Vec<f64> = (0..n)
        .map(|k| ps(h.delay_half_range_ps * (2.0 * k as f64 / (n - 1) as f64 - 1.0)))
        .collect();
    let curve = hom_dip_curve(h.purity, h.g2_h, ghz_to_rad(h.bandwidth_ghz), &delays)?;
    let mut buf = String::from("delay_ps,coincidences\n");
    for (t, c) in delays.iter().zip(&curve) {
        let _ = writeln!(buf, "{:.6},{:.9}", t * 1e12, c);
    }
    Ok((vec![("hom_dip.csv".into(), buf.into_bytes())], summary))
}

fn loss_budget(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let table = config.loss_table()?;
    let l = &config.loss;
    let (es, eh) = (arm_efficiency(&table, Arm::Signal), arm_efficiency(&table, Arm::Herald));
    let report = reconcile(
        &table,
        Measured::Value(l.klyshko_signal),
        Measured::Interval(l.klyshko_herald_low, l.klyshko_herald_high),
        l.tolerance,
    );
    let mut summary = Summary::default();
    summary.value("eta_signal", es);
    summary.value("eta_herald", eh);
    summary
        .checks
        .push(Check::within("signal arm efficiency", es, 0.13, 0.005));
    summary
        .checks
        .push(Check::within("herald arm efficiency", eh, 0.12, 0.005));
    summary.checks.push(Check::flag(
        "table agrees with Klyshko measurements",
        report.arms.iter().map(|a| a.absolute.abs()).fold(0.0, f64::max),
        &format!("<= {}", l.tolerance),
        report.all_within(),
    ));
    let mut table_csv = String::from("name,db,arm\n");
    for e in table.entries() {
        let arm = match e.arm {
            Arm::Signal => "signal",
            Arm::Herald => "herald",
            Arm::Both => "both",
        };
        let _ = writeln!(table_csv, "{},{},{}", e.name, e.db, arm);
    }
    Ok((
        vec![
            ("loss_table.csv".into(), table_csv.into_bytes()),
            ("reconcile.txt".into(), report.to_key_values().into_bytes()),
            ("reconcile.json".into(), report.to_json().into_bytes()),
        ],
        summary,
    ))
}

fn lut_dump(config: &ScenarioConfig) -> Result<(Outputs, Summary)> {
    let state = config.state_model_with(config.spectrometer.uncertainty_fwhm_ghz, false, 0.0)?;
    let lut = build_lut(
        &state.spectrometer,
        state.filter_center,
        state.pump.center,
        &config.shifter_model()?,
    )
    .map_err(|e| field_error("spectrometer.tdc_bin_ps", e))?;
    let total = lut.entries().len();
    let in_range = lut.entries().iter().filter(|e| e.in_range).count();
    let mut summary = Summary::default();
    summary.value("bins", total as f64);
    summary.value("in_range_bins", in_range as f64);
    let v0_max = config.shifter_model()?.v0_max;
    let bounded = lut.entries().iter().all(|e| e.v0.abs() <= v0_max);
    summary
        .checks
        .push(Check::flag("|V0| within drive limit", v0_max, "all entries", bounded));
    let mut buf = Vec::new();
    lut.write_text(&mut buf)?;
    Ok((vec![("lut.txt".into(), buf)], summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_defaults_match_code() {
        let parsed = ScenarioConfig::from_toml(DEFAULT_CONFIG).unwrap();
        assert_eq!(parsed, ScenarioConfig::default());
        assert_eq!(ScenarioConfig::from_toml("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = ScenarioConfig {
            seed: 77,
            ..ScenarioConfig::default()
        };
        c.statistics.n_modes = Some(4);
        let back = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn field_level_errors() {
        let e = ScenarioConfig::from_toml("[hom]\npurity = 1.5\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("hom.purity"), "{e}");
        let e = ScenarioConfig::from_toml("[shifter]\nv_pi = -1\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("shifter") && e.contains("v_pi"), "{e}");
        let e = ScenarioConfig::from_toml("scenario = \"nope\"\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("nope"), "{e}");
        let e = ScenarioConfig::from_toml("[source]\npump_sigma = 1\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("pump_sigma"), "{e}");
    }

    #[test]
    fn mode_count_rounds() {
        assert_eq!(ScenarioConfig::default().mode_count().unwrap(), 3);
    }

    #[test]
    fn default_state_matches_library_default() {
        let a = ScenarioConfig::default().state_model_with(10.0, false, 0.0).unwrap();
        let b = HeraldedStateModel::nominal();
        assert_eq!(a.spectrometer.tdc_bin, b.spectrometer.tdc_bin);
        assert!((a.spectrometer.jitter.std_dev() - b.spectrometer.jitter.std_dev()).abs() < 1e-18);
        assert!((a.pump.sigma - b.pump.sigma).abs() < 1e-3);
        assert!((a.filter_center - b.filter_center).abs() < 1.0);
    }
}
