//! Experiment configuration: one JSON document per run, tagged by
//! `"experiment"`.

use std::fmt;

use qlockin_core::dynamics::{ExperimentOptions, PulseModel};
use qlockin_core::estimation::CoherenceNoise;
use qlockin_core::lockin::weak_coupling_ok;
use qlockin_core::noise::{SignalModel, ToneSpectrum, DEFAULT_KAPPA_HZ_PER_TESLA};
use qlockin_core::sequence::{PulseSequence, SequenceSpec};
use qlockin_core::spectroscopy::{fourier_shift, light_shift_static, LaserParams};
use serde::{Deserialize, Serialize};

/// A list of values, or `points` evenly spaced values from `start` to `stop`
/// inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseConfig {
    #[default]
    Ideal,
    Finite { rabi_rad_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub shots: u64,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default = "sixteen")]
    pub phase_points: usize,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub area_error: f64,
}

fn one() -> usize {
    1
}
fn sixteen() -> usize {
    16
}
fn default_kappa() -> f64 {
    DEFAULT_KAPPA_HZ_PER_TESLA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastScan {
    pub n_values: Vec<usize>,
    pub tau_arm_s: Axis,
    #[serde(default = "ToneSpectrum::mains_residual")]
    pub spectrum: ToneSpectrum,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseScanConfig {
    pub sequence: SequenceSpec,
    #[serde(default = "SignalModel::none")]
    pub signal: SignalModel,
    #[serde(default)]
    pub spectrum: Option<ToneSpectrum>,
    pub shots: u64,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default = "sixteen")]
    pub phase_points: usize,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub area_error: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityCurve {
    pub n: usize,
    pub tau_arm_s: Axis,
    #[serde(default = "ToneSpectrum::mains_residual")]
    pub spectrum: ToneSpectrum,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCurve {
    pub spectrum: ToneSpectrum,
    pub tau_arm_s: Axis,
    /// Gaussian contrast noise, also used as each point's σ.
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumFitConfig {
    pub n: usize,
    pub candidate_freqs_hz: Vec<f64>,
    #[serde(default = "default_kappa")]
    pub kappa_hz_per_tesla: f64,
    /// CSV with columns `tau_arm_s, contrast, sigma`.
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticCurve>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDecay {
    pub a0: f64,
    pub tau_coh_s: f64,
    pub times_s: Axis,
    /// Relative (multiplicative model) or absolute (additive) noise level.
    #[serde(default)]
    pub noise_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceScan {
    #[serde(default)]
    pub noise_model: CoherenceNoise,
    /// CSV with columns `T_s, contrast`.
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticDecay>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmScan {
    pub laser: LaserParams,
    pub n: usize,
    pub tau_arm_s: Axis,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    pub shots: u64,
    #[serde(default = "sixteen")]
    pub phase_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningScan {
    pub laser: LaserParams,
    pub detunings_hz: Axis,
    pub n: usize,
    pub tau_arm_s: f64,
    #[serde(default)]
    pub shots: Option<ShotConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSeries {
    pub samples: usize,
    pub white_sigma_hz: f64,
    #[serde(default)]
    pub drift_hz_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllanAnalysis {
    pub interval_s: f64,
    /// CSV with a `value_hz` column.
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSeries>,
    #[serde(default)]
    pub detrend: bool,
    /// Defaults to octaves of the sample interval up to a third of the run.
    #[serde(default)]
    pub taus_s: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    ContrastScan(ContrastScan),
    PhaseScan(PhaseScanConfig),
    SensitivityCurve(SensitivityCurve),
    SpectrumFit(SpectrumFitConfig),
    CoherenceScan(CoherenceScan),
    LightshiftFmScan(FmScan),
    LightshiftDetuningScan(DetuningScan),
    AllanAnalysis(AllanAnalysis),
}

/// A configuration problem tied to a named field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)
    }
}

fn bad(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.to_string(),
        message: message.into(),
    }
}

fn check(cond: bool, field: &str, message: &str) -> Result<(), FieldError> {
    if cond {
        Ok(())
    } else {
        Err(bad(field, message))
    }
}

fn check_axis(axis: &Axis, field: &str, positive: bool) -> Result<Vec<f64>, FieldError> {
    if let Axis::Range { start, stop, points } = axis {
        check(start.is_finite() && stop.is_finite(), field, "range bounds must be finite")?;
        check(*points > 0, field, "range needs at least one point")?;
    }
    let v = axis.values();
    check(!v.is_empty(), field, "needs at least one value")?;
    check(v.iter().all(|x| x.is_finite()), field, "values must be finite")?;
    if positive {
        check(v.iter().all(|x| *x > 0.0), field, "values must be positive")?;
    }
    check(v.windows(2).all(|w| w[1] > w[0]), field, "values must be strictly increasing")?;
    Ok(v)
}

fn core(field: &str, r: qlockin_core::Result<()>) -> Result<(), FieldError> {
    r.map_err(|e| bad(field, e.to_string()))
}

fn check_simulation(shots: u64, realizations: usize, phase_points: usize, area_error: f64) -> Result<(), FieldError> {
    check(shots > 0, "shots", "must be at least 1")?;
    check(realizations > 0, "realizations", "must be at least 1")?;
    check(phase_points >= 5, "phase_points", "a fringe fit needs at least 5 readout phases")?;
    check(area_error.is_finite() && area_error.abs() < 1.0, "area_error", "must lie in (−1, 1)")
}

fn check_pulse(p: &PulseConfig) -> Result<(), FieldError> {
    if let PulseConfig::Finite { rabi_rad_s } = p {
        check(rabi_rad_s.is_finite() && *rabi_rad_s > 0.0, "rabi_rad_s", "must be positive")?;
    }
    Ok(())
}

/// Sequence for a pulse model: finite pulses get the duration `π/Ω_R`
/// unless the sequence already fixes one.
pub fn build_sequence(spec: &SequenceSpec, pulse: &PulseConfig) -> qlockin_core::Result<PulseSequence> {
    let seq = spec.build()?;
    match pulse {
        PulseConfig::Finite { rabi_rad_s } if spec.pulse_duration_s == 0.0 => seq.with_rabi(*rabi_rad_s),
        _ => Ok(seq),
    }
}

pub fn options(pulse: &PulseConfig, area_error: f64) -> ExperimentOptions {
    ExperimentOptions {
        pulse_model: match pulse {
            PulseConfig::Ideal => PulseModel::Ideal,
            PulseConfig::Finite { rabi_rad_s } => PulseModel::Finite { rabi: *rabi_rad_s },
        },
        area_error,
        ..Default::default()
    }
}

fn exactly_one<A, B>(a: &Option<A>, b: &Option<B>) -> Result<(), FieldError> {
    match (a.is_some(), b.is_some()) {
        (true, false) | (false, true) => Ok(()),
        (true, true) => Err(bad("input", "give either `input` or `synthetic`, not both")),
        (false, false) => Err(bad("input", "one of `input` or `synthetic` is required")),
    }
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::ContrastScan(_) => "contrast_scan",
            ExperimentConfig::PhaseScan(_) => "phase_scan",
            ExperimentConfig::SensitivityCurve(_) => "sensitivity_curve",
            ExperimentConfig::SpectrumFit(_) => "spectrum_fit",
            ExperimentConfig::CoherenceScan(_) => "coherence_scan",
            ExperimentConfig::LightshiftFmScan(_) => "lightshift_fm_scan",
            ExperimentConfig::LightshiftDetuningScan(_) => "lightshift_detuning_scan",
            ExperimentConfig::AllanAnalysis(_) => "allan_analysis",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ExperimentConfig::ContrastScan(c) => c.seed,
            ExperimentConfig::PhaseScan(c) => c.seed,
            ExperimentConfig::SensitivityCurve(c) => c.seed,
            ExperimentConfig::SpectrumFit(c) => c.seed,
            ExperimentConfig::CoherenceScan(c) => c.seed,
            ExperimentConfig::LightshiftFmScan(c) => c.seed,
            ExperimentConfig::LightshiftDetuningScan(c) => c.seed,
            ExperimentConfig::AllanAnalysis(c) => c.seed,
        }
    }

    pub fn output_name(&self) -> String {
        let name = match self {
            ExperimentConfig::ContrastScan(c) => &c.output_name,
            ExperimentConfig::PhaseScan(c) => &c.output_name,
            ExperimentConfig::SensitivityCurve(c) => &c.output_name,
            ExperimentConfig::SpectrumFit(c) => &c.output_name,
            ExperimentConfig::CoherenceScan(c) => &c.output_name,
            ExperimentConfig::LightshiftFmScan(c) => &c.output_name,
            ExperimentConfig::LightshiftDetuningScan(c) => &c.output_name,
            ExperimentConfig::AllanAnalysis(c) => &c.output_name,
        };
        name.clone().unwrap_or_else(|| self.kind().to_string())
    }

    /// Whether any part of the run draws random numbers.
    pub fn is_stochastic(&self) -> bool {
        match self {
            ExperimentConfig::ContrastScan(c) => c.simulate.is_some(),
            ExperimentConfig::PhaseScan(_) => true,
            ExperimentConfig::SensitivityCurve(_) | ExperimentConfig::LightshiftFmScan(_) => false,
            ExperimentConfig::SpectrumFit(c) => c.synthetic.as_ref().is_some_and(|s| s.noise_sigma > 0.0),
            ExperimentConfig::CoherenceScan(c) => c.synthetic.as_ref().is_some_and(|s| s.noise_level > 0.0),
            ExperimentConfig::LightshiftDetuningScan(c) => c.shots.is_some(),
            ExperimentConfig::AllanAnalysis(c) => c.synthetic.is_some(),
        }
    }

    /// Full validation without running. Returns soft warnings.
    pub fn validate(&self, seed_override: Option<u64>) -> Result<Vec<String>, FieldError> {
        let mut warnings = Vec::new();
        if self.is_stochastic() && self.seed().or(seed_override).is_none() {
            return Err(bad("seed", "required for stochastic runs (or pass --seed)"));
        }
        let name = self.output_name();
        check(
            !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
            "output_name",
            "must be a plain file stem of letters, digits, '_' or '-'",
        )?;
        match self {
            ExperimentConfig::ContrastScan(c) => {
                check(!c.n_values.is_empty(), "n_values", "needs at least one N")?;
                check(c.n_values.iter().all(|&n| n > 0), "n_values", "N must be at least 1")?;
                check_axis(&c.tau_arm_s, "tau_arm_s", true)?;
                core("spectrum", c.spectrum.validate())?;
                if let Some(s) = &c.simulate {
                    check_simulation(s.shots, s.realizations, s.phase_points, s.area_error)?;
                    check_pulse(&s.pulse)?;
                }
            }
            ExperimentConfig::PhaseScan(c) => {
                check_simulation(c.shots, c.realizations, c.phase_points, c.area_error)?;
                check_pulse(&c.pulse)?;
                if let Some(tau) = c.sequence.tau_arm_s {
                    check(tau.is_finite() && tau > 0.0, "tau_arm_s", "must be positive")?;
                }
                if let Some(t) = c.sequence.total_s {
                    check(t.is_finite() && t > 0.0, "T_s", "must be positive")?;
                }
                core("sequence", build_sequence(&c.sequence, &c.pulse).map(|_| ()))?;
                core("signal", c.signal.validate())?;
                if let Some(s) = &c.spectrum {
                    core("spectrum", s.validate())?;
                }
            }
            ExperimentConfig::SensitivityCurve(c) => {
                check(c.n > 0, "n", "N must be at least 1")?;
                check_axis(&c.tau_arm_s, "tau_arm_s", true)?;
                core("spectrum", c.spectrum.validate())?;
            }
            ExperimentConfig::SpectrumFit(c) => {
                check(c.n > 0, "n", "N must be at least 1")?;
                check(!c.candidate_freqs_hz.is_empty(), "candidate_freqs_hz", "needs at least one frequency")?;
                check(
                    c.candidate_freqs_hz.iter().all(|f| f.is_finite() && *f > 0.0),
                    "candidate_freqs_hz",
                    "frequencies must be positive",
                )?;
                check(c.kappa_hz_per_tesla > 0.0, "kappa_hz_per_tesla", "must be positive")?;
                exactly_one(&c.input, &c.synthetic)?;
                if let Some(s) = &c.synthetic {
                    core("spectrum", s.spectrum.validate())?;
                    check_axis(&s.tau_arm_s, "tau_arm_s", true)?;
                    check(s.noise_sigma >= 0.0, "noise_sigma", "must be non-negative")?;
                }
            }
            ExperimentConfig::CoherenceScan(c) => {
                exactly_one(&c.input, &c.synthetic)?;
                if let Some(s) = &c.synthetic {
                    check(s.a0 > 0.0 && s.a0 <= 1.0, "a0", "must lie in (0, 1]")?;
                    check(s.tau_coh_s > 0.0, "tau_coh_s", "must be positive")?;
                    check(check_axis(&s.times_s, "times_s", true)?.len() >= 4, "times_s", "needs at least 4 times")?;
                    check(s.noise_level >= 0.0, "noise_level", "must be non-negative")?;
                }
            }
            ExperimentConfig::LightshiftFmScan(c) => {
                core("laser", c.laser.validate())?;
                check(c.n > 0, "n", "N must be at least 1")?;
                let taus = check_axis(&c.tau_arm_s, "tau_arm_s", true)?;
                let shift = light_shift_static(&c.laser).map_err(|e| bad("detuning_hz", e.to_string()))?;
                for tau in taus {
                    let f_m = 0.5 / tau;
                    if !weak_coupling_ok(shift, f_m) {
                        warnings.push(format!(
                            "weak coupling violated at tau_arm_s = {tau}: |shift| {:.3} Hz vs f_m {:.1} Hz",
                            shift.abs(),
                            f_m
                        ));
                    }
                }
            }
            ExperimentConfig::LightshiftDetuningScan(c) => {
                core("laser", c.laser.validate())?;
                check(c.n > 0, "n", "N must be at least 1")?;
                check(c.tau_arm_s.is_finite() && c.tau_arm_s > 0.0, "tau_arm_s", "must be positive")?;
                check_axis(&c.detunings_hz, "detunings_hz", false)?;
                let f_m = 0.5 / c.tau_arm_s;
                check(
                    (c.laser.am_frequency_hz - f_m).abs() <= 1e-9 * f_m,
                    "am_frequency_hz",
                    "must equal the modulation frequency 1/(2 tau_arm_s)",
                )?;
                if let Some(s) = &c.shots {
                    check_simulation(s.shots, 1, s.phase_points, 0.0)?;
                }
                let deltas = c.detunings_hz.values();
                let strong: Vec<f64> = deltas
                    .iter()
                    .filter(|&&d| fourier_shift(&c.laser.with_detuning(d)).is_some_and(|s| !weak_coupling_ok(s, f_m)))
                    .copied()
                    .collect();
                if !strong.is_empty() {
                    warnings.push(format!(
                        "weak coupling violated at {} of {} detunings (first at {} Hz)",
                        strong.len(),
                        deltas.len(),
                        strong[0]
                    ));
                }
            }
            ExperimentConfig::AllanAnalysis(c) => {
                check(c.interval_s.is_finite() && c.interval_s > 0.0, "interval_s", "must be positive")?;
                exactly_one(&c.input, &c.synthetic)?;
                if let Some(s) = &c.synthetic {
                    check(s.samples >= 9, "samples", "needs at least 9 samples")?;
                    check(s.white_sigma_hz >= 0.0, "white_sigma_hz", "must be non-negative")?;
                    check(s.drift_hz_per_s.is_finite(), "drift_hz_per_s", "must be finite")?;
                }
                if let Some(t) = &c.taus_s {
                    check(!t.is_empty(), "taus_s", "needs at least one tau")?;
                    check(t.iter().all(|x| x.is_finite() && *x > 0.0), "taus_s", "must be positive")?;
                }
            }
        }
        Ok(warnings)
    }
}

/// 1-based line of the first occurrence of `"key"` in the document.
pub fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

