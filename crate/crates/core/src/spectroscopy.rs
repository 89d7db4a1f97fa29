//! Light-shift signals from an amplitude-modulated laser that couples `|↑⟩`
//! to a metastable level `D`, and the scans built on them.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{readout_axis, sample_shots_with};
use crate::error::{invalid, Error, Result};
use crate::estimation::{fit_fringe, PhaseScan, ScanPoint};
use crate::linalg::expm;
use crate::lockin::{quadratures, weak_coupling_ok};
use crate::noise::{SignalModel, Waveform};
use crate::rng;
use crate::sequence::{make_cpmg, PhasePolicy, PulseSequence};

/// Highest odd harmonic of the square AM kept in the Fourier sums.
const MAX_HARMONIC: i64 = 401;

/// Laser driving `|↑⟩ → D`, switched on and off with a 50% square wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    /// Ω₀, rad/s.
    pub rabi: f64,
    /// Laser minus transition frequency, Hz.
    pub detuning_hz: f64,
    pub am_frequency_hz: f64,
    /// Offset of the AM relative to the pulse train; 0 switches the laser on
    /// during the first free arm.
    #[serde(default)]
    pub am_phase: f64,
}

impl LaserParams {
    pub fn new(rabi: f64, detuning_hz: f64, am_frequency_hz: f64) -> Self {
        LaserParams {
            rabi,
            detuning_hz,
            am_frequency_hz,
            am_phase: 0.0,
        }
    }

    pub fn with_detuning(self, detuning_hz: f64) -> Self {
        LaserParams { detuning_hz, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi >= 0.0) || !self.rabi.is_finite() {
            return Err(invalid(format!("laser rabi must be non-negative, got {}", self.rabi)));
        }
        if !(self.am_frequency_hz > 0.0) || !self.am_frequency_hz.is_finite() {
            return Err(invalid(format!("am_frequency_hz must be positive, got {}", self.am_frequency_hz)));
        }
        if !self.detuning_hz.is_finite() || !self.am_phase.is_finite() {
            return Err(invalid("laser detuning and AM phase must be finite"));
        }
        Ok(())
    }

    /// Ω₀/2π, Hz.
    pub fn rabi_hz(&self) -> f64 {
        self.rabi / (2.0 * PI)
    }

    /// On/off window as a unit-amplitude unipolar square.
    fn window(&self) -> SignalModel {
        SignalModel {
            amplitude_hz: 1.0,
            carrier_hz: self.am_frequency_hz,
            waveform: Waveform::SquareUnipolar,
            phase_rad: self.am_phase,
        }
    }

    /// `(k, field amplitude ratio c_k, component detuning)` of the square AM.
    pub fn am_components(&self) -> Vec<(i64, f64, f64)> {
        let mut out = vec![(0, 0.5, self.detuning_hz)];
        for k in (1..=MAX_HARMONIC).step_by(2) {
            let c = 1.0 / (k as f64 * PI);
            out.push((k, c, self.detuning_hz + k as f64 * self.am_frequency_hz));
            out.push((-k, c, self.detuning_hz - k as f64 * self.am_frequency_hz));
        }
        out
    }
}

/// Far-detuned two-level shift `(Ω₀/2π)²/(4δ)` of `|↑⟩`, Hz.
pub fn light_shift_static(laser: &LaserParams) -> Result<f64> {
    laser.validate()?;
    let r = laser.rabi_hz();
    if r == 0.0 {
        return Ok(0.0);
    }
    if laser.detuning_hz.abs() < 5.0 * r {
        return Err(Error::OutOfValidity(format!(
            "|detuning| = {} Hz is less than 5 Rabi frequencies ({} Hz)",
            laser.detuning_hz.abs(),
            5.0 * r
        )));
    }
    Ok(r * r / (4.0 * laser.detuning_hz))
}

/// Shift of one dressed component, Hz; regular through `d = 0`.
fn dressed_shift(rabi_hz: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let s = (d * d + rabi_hz * rabi_hz).sqrt() - d.abs();
    0.5 * s * d.signum()
}

/// Time-averaged shift summed over the AM components, Hz. `None` when a
/// component sits exactly on resonance.
pub fn fourier_shift(laser: &LaserParams) -> Option<f64> {
    let r = laser.rabi_hz();
    let mut total = 0.0;
    for (_, c, d) in laser.am_components() {
        if d == 0.0 && r > 0.0 {
            return None;
        }
        total += dressed_shift(c * r, d);
    }
    Some(total)
}

/// Overlap of the laser window with the positive toggling half periods,
/// `1 − 2|Δ|/π` for an AM phase offset `Δ`.
pub fn alignment_factor(am_phase: f64) -> f64 {
    let wrapped = (am_phase + PI).rem_euclid(2.0 * PI) - PI;
    1.0 - 2.0 * wrapped.abs() / PI
}

/// Contrast multiplier from population left in `D` after `exposure`.
///
/// Each AM component transfers at most half of the exposed population,
/// with a Lorentzian of half width equal to its Rabi rate, saturating on
/// the time scale of one Rabi period.
pub fn shelving_loss(laser: &LaserParams, exposure: f64) -> Result<f64> {
    laser.validate()?;
    if !(exposure > 0.0) {
        return Err(invalid("exposure must be positive"));
    }
    let r = laser.rabi_hz();
    if r == 0.0 {
        return Ok(1.0);
    }
    let mut keep = 1.0;
    for (_, c, d) in laser.am_components() {
        let w = c * r;
        let lorentz = w * w / (w * w + d * d);
        let saturation = 1.0 - (-PI * w * exposure).exp();
        keep *= 1.0 - SHELVING_DEPTH * lorentz * saturation;
    }
    Ok(keep)
}

/// Peak transfer of a saturated component.
const SHELVING_DEPTH: f64 = 0.5;

/// Fringe of the three-level propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleFringe {
    pub contrast: f64,
    /// In `(−π, π]`.
    pub phi: f64,
    /// Mean of the fringe, `½` without shelving.
    pub offset: f64,
}

fn pulse_matrix(axis_phase: f64, angle: f64) -> Matrix3<Complex64> {
    let (s, c) = (0.5 * angle).sin_cos();
    let (ny, nx) = axis_phase.sin_cos();
    let z = Complex64::new(0.0, 0.0);
    Matrix3::new(
        Complex64::new(c, 0.0),
        Complex64::new(-s * ny, -s * nx),
        z,
        Complex64::new(s * ny, -s * nx),
        Complex64::new(c, 0.0),
        z,
        z,
        z,
        Complex64::new(1.0, 0.0),
    )
}

/// Brute-force propagation in the `{↑, ↓, D}` basis with a square-switched
/// laser and ideal π pulses on the probe. Population in `D` reads out dark,
/// like `↑`.
pub fn three_level_fringe(laser: &LaserParams, seq: &PulseSequence) -> Result<OracleFringe> {
    laser.validate()?;
    seq.validate()?;
    let total = seq.total_duration();
    let window = laser.window();
    let mut edges = vec![0.0, total];
    edges.extend(seq.pulses().iter().map(|p| p.time));
    edges.extend(crate::noise::ShiftSource::discontinuities(&window, 0.0, total));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let delta = 2.0 * PI * laser.detuning_hz;
    let half_rabi = 0.5 * laser.rabi;
    let generator = |on: bool| {
        let z = Complex64::new(0.0, 0.0);
        let g = if on { half_rabi } else { 0.0 };
        // −i·H with H = diag(0, 0, −δ) + (Ω₀/2)(|↑⟩⟨D| + h.c.)
        Matrix3::new(
            z,
            z,
            Complex64::new(0.0, -g),
            z,
            z,
            z,
            Complex64::new(0.0, -g),
            z,
            Complex64::new(0.0, delta),
        )
    };
    let mut cache: Vec<(bool, f64, Matrix3<Complex64>)> = Vec::new();
    let mut state = pulse_matrix(0.0, PI / 2.0) * Vector3::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let pulses = seq.pulses();
    let mut next_pulse = 0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        while next_pulse < pulses.len() && pulses[next_pulse].time <= a + 1e-15 {
            let p = &pulses[next_pulse];
            state = pulse_matrix(p.axis_phase, p.rotation_angle) * state;
            next_pulse += 1;
        }
        let dt = b - a;
        if dt <= 0.0 {
            continue;
        }
        let on = window.value(0.5 * (a + b)) > 0.5;
        let u = match cache.iter().find(|(o, d, _)| *o == on && (d - dt).abs() <= 1e-12 * dt) {
            Some((_, _, u)) => *u,
            None => {
                let u = expm(&(generator(on) * Complex64::new(dt, 0.0)));
                cache.push((on, dt, u));
                u
            }
        };
        state = u * state;
    }
    while next_pulse < pulses.len() {
        state = pulse_matrix(pulses[next_pulse].axis_phase, pulses[next_pulse].rotation_angle) * state;
        next_pulse += 1;
    }

    let p_at = |phi_rf: f64| {
        let s = pulse_matrix(readout_axis(seq, phi_rf), PI / 2.0) * state;
        s[0].norm_sqr() + s[2].norm_sqr()
    };
    let p: Vec<f64> = (0..4).map(|i| p_at(i as f64 * PI / 2.0)).collect();
    let a = 0.5 * (p[0] - p[2]);
    let b = 0.5 * (p[1] - p[3]);
    Ok(OracleFringe {
        contrast: 2.0 * a.hypot(b),
        phi: (-b).atan2(a),
        offset: 0.25 * p.iter().sum::<f64>(),
    })
}

/// Pulse phases under which the AM components add coherently from one
/// modulation period to the next, as the Fourier model assumes.
pub const COMB_POLICY: PhasePolicy = PhasePolicy::AlternatingSign;

/// Light shift during the on windows implied by the three-level fringe of a
/// CPMG(N, τ_arm) lock-in, Hz. The phase is unwrapped against the Fourier
/// model.
pub fn oracle_light_shift(laser: &LaserParams, n: usize, tau_arm: f64, policy: PhasePolicy) -> Result<f64> {
    let seq = make_cpmg(n, tau_arm, policy)?;
    let fringe = three_level_fringe(laser, &seq)?;
    let t = seq.total_duration();
    let align = alignment_factor(laser.am_phase);
    if align.abs() < 1e-9 {
        return Err(invalid("AM is in quadrature with the pulse train; the shift is not observable"));
    }
    let mut phi = fringe.phi;
    if let Some(avg) = fourier_shift(laser) {
        let predicted = 2.0 * PI * t * avg * align;
        phi += 2.0 * PI * ((predicted - phi) / (2.0 * PI)).round();
    }
    Ok(phi / (PI * t * align))
}

/// One point of a spectroscopy scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyPoint {
    /// τ_arm (s) for modulation-frequency scans, δ (Hz) for detuning scans.
    pub axis: f64,
    pub contrast: f64,
    pub sigma_contrast: f64,
    pub phi: f64,
    pub sigma_phi: f64,
    pub weak_coupling: bool,
    /// Evaluated by the three-level propagation instead of the model.
    pub via_oracle: bool,
    pub phase_scan: Option<PhaseScan>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectroscopyScan {
    pub points: Vec<SpectroscopyPoint>,
}

impl SpectroscopyScan {
    pub fn axis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.phi).collect()
    }

    pub fn contrasts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.contrast).collect()
    }
}

/// Shot-noise settings for simulated phase scans.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotModel {
    pub phi_rf: Vec<f64>,
    pub shots: u64,
    pub seed: u64,
}

fn check_monotone(axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(invalid("scan axis is empty"));
    }
    let up = axis.windows(2).all(|w| w[1] > w[0]);
    let down = axis.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(invalid("scan axis must be strictly monotone"));
    }
    Ok(())
}

/// Sample and fit a phase scan around an exact `(A, φ)`, using stream
/// `index` of the shot seed.
fn sampled_point(contrast: f64, phi: f64, shots: &ShotModel, index: usize) -> Result<(f64, f64, f64, f64, PhaseScan)> {
    let mut rng = rng::stream(shots.seed, index as u64);
    let points = shots
        .phi_rf
        .iter()
        .map(|&r| {
            let p = (0.5 + 0.5 * contrast * (phi + r).cos()).clamp(0.0, 1.0);
            Ok(ScanPoint {
                phi_rf: r,
                shots: shots.shots,
                successes: sample_shots_with(p, shots.shots, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scan = PhaseScan { points };
    let fit = fit_fringe(&scan)?;
    let phi_fit = (fit.phi + PI).rem_euclid(2.0 * PI) - PI;
    Ok((fit.contrast, fit.sigma_contrast, phi_fit, fit.sigma_phi, scan))
}

/// Lock-in phase versus τ_arm for a square light-shift signal at the AM
/// rate; the response peaks where `1/(2τ_arm)` equals the AM frequency.
pub fn fm_scan(laser: &LaserParams, n: usize, taus: &[f64]) -> Result<SpectroscopyScan> {
    check_monotone(taus)?;
    let s0 = light_shift_static(laser)?;
    let signal = SignalModel {
        amplitude_hz: s0,
        carrier_hz: laser.am_frequency_hz,
        waveform: Waveform::SquareUnipolar,
        phase_rad: laser.am_phase,
    };
    let points = taus
        .iter()
        .map(|&tau| {
            let seq = make_cpmg(n, tau, PhasePolicy::FixedAxis)?;
            let q = quadratures(&signal, &seq)?;
            Ok(SpectroscopyPoint {
                axis: tau,
                contrast: 1.0,
                sigma_contrast: 0.0,
                phi: q.phi_lockin,
                sigma_phi: 0.0,
                weak_coupling: q.weak_coupling,
                via_oracle: false,
                phase_scan: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectroscopyScan { points })
}

/// Model response `(A, φ, via_oracle)` at one detuning. A component exactly
/// on resonance is handed to the three-level propagation.
pub fn detuning_response(laser: &LaserParams, n: usize, tau_arm: f64) -> Result<(f64, f64, bool)> {
    let seq = make_cpmg(n, tau_arm, COMB_POLICY)?;
    let t = seq.total_duration();
    match fourier_shift(laser) {
        Some(avg) => {
            let phi = 2.0 * PI * t * avg * alignment_factor(laser.am_phase);
            Ok((shelving_loss(laser, t)?, phi, false))
        }
        None => {
            let f = three_level_fringe(laser, &seq)?;
            Ok((f.contrast, f.phi, true))
        }
    }
}

/// Lock-in phase and contrast versus laser detuning with the AM locked to
/// the modulation frequency.
pub fn detuning_scan(
    base: &LaserParams,
    deltas: &[f64],
    n: usize,
    tau_arm: f64,
    shots: Option<&ShotModel>,
) -> Result<SpectroscopyScan> {
    base.validate()?;
    check_monotone(deltas)?;
    if !(tau_arm > 0.0) {
        return Err(invalid("tau_arm must be positive"));
    }
    let f_m = 0.5 / tau_arm;
    if (base.am_frequency_hz - f_m).abs() > 1e-9 * f_m {
        return Err(invalid(format!(
            "am_frequency_hz ({}) must equal the modulation frequency 1/(2·tau_arm) = {f_m}",
            base.am_frequency_hz
        )));
    }
    let points = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let laser = base.with_detuning(delta);
            let (a, phi, via_oracle) = detuning_response(&laser, n, tau_arm)?;
            let weak = weak_coupling_ok(phi.abs() / (2.0 * PI * (n + 1) as f64 * tau_arm), f_m);
            let (contrast, sigma_contrast, phi, sigma_phi, scan) = match shots {
                Some(s) => {
                    let (a, sa, p, sp, scan) = sampled_point(a, phi, s, i)?;
                    (a, sa, p, sp, Some(scan))
                }
                None => (a, 0.0, phi, 0.0, None),
            };
            Ok(SpectroscopyPoint {
                axis: delta,
                contrast,
                sigma_contrast,
                phi,
                sigma_phi,
                weak_coupling: weak,
                via_oracle,
                phase_scan: scan,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectroscopyScan { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_laser() -> LaserParams {
        LaserParams::new(2.0 * PI * 840.0, -17e3, 500.0)
    }

    #[test]
    fn static_shift_examples() {
        let s = light_shift_static(&probe_laser()).unwrap();
        assert!((s + 840.0 * 840.0 / 68e3).abs() < 1e-12);
        assert!((s.abs() - 10.4).abs() < 0.05);
        let half = light_shift_static(&probe_laser().with_detuning(-34e3)).unwrap();
        assert!((half - 0.5 * s).abs() < 1e-12);
        assert_eq!(light_shift_static(&LaserParams { rabi: 0.0, ..probe_laser() }).unwrap(), 0.0);
        assert!(matches!(
            light_shift_static(&probe_laser().with_detuning(-2e3)),
            Err(Error::OutOfValidity(_))
        ));
    }

    #[test]
    fn am_weights_sum_to_duty() {
        let w: f64 = probe_laser().am_components().iter().map(|c| c.1 * c.1).sum();
        assert!((w - 0.5).abs() < 1e-3);
    }

    #[test]
    fn alignment() {
        assert_eq!(alignment_factor(0.0), 1.0);
        assert!((alignment_factor(PI / 2.0)).abs() < 1e-15);
        assert!((alignment_factor(PI) + 1.0).abs() < 1e-15);
        assert!((alignment_factor(-PI / 4.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oracle_without_laser_is_ideal() {
        let seq = make_cpmg(9, 1e-3, PhasePolicy::FixedAxis).unwrap();
        let f = three_level_fringe(&LaserParams { rabi: 0.0, ..probe_laser() }, &seq).unwrap();
        assert!((f.contrast - 1.0).abs() < 1e-12 && f.phi.abs() < 1e-12 && (f.offset - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shelving_limits() {
        assert_eq!(shelving_loss(&LaserParams { rabi: 0.0, ..probe_laser() }, 4e-3).unwrap(), 1.0);
        let far = shelving_loss(&probe_laser().with_detuning(-3e6), 4e-3).unwrap();
        assert!((far - 1.0).abs() < 0.01);
        // carrier resonance: a deep dip close to the three-level value
        let on = LaserParams::new(2.0 * PI * 840.0, 0.0, 5e3);
        let model = shelving_loss(&on, 4e-3).unwrap();
        let seq = make_cpmg(39, 100e-6, COMB_POLICY).unwrap();
        let oracle = three_level_fringe(&on, &seq).unwrap().contrast;
        assert!(model < 0.55 && oracle < 0.55);
        assert!((model - oracle).abs() < 0.1 * oracle, "{model} vs {oracle}");
    }

    #[test]
    fn fm_scan_peak_and_value() {
        let laser = LaserParams {
            rabi: 2.0 * PI * 840.0 * (9.9f64 / 10.376).sqrt(),
            ..probe_laser()
        };
        let s0 = light_shift_static(&laser).unwrap();
        let taus = [0.6e-3, 0.8e-3, 1.0e-3, 1.25e-3, 1.5e-3];
        let scan = fm_scan(&laser, 99, &taus).unwrap();
        let peak = scan.points.iter().max_by(|a, b| a.phi.abs().total_cmp(&b.phi.abs())).unwrap();
        assert_eq!(peak.axis, 1.0e-3);
        assert!((peak.phi - PI * s0 * 0.1).abs() < 1e-9);
        let far = fm_scan(&laser, 99, &[0.5e-3]).unwrap();
        assert!(far.points[0].phi.abs() < 0.05 * peak.phi.abs());
        let off = fm_scan(&LaserParams { rabi: 0.0, ..laser }, 99, &taus).unwrap();
        assert!(off.phases().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn detuning_scan_needs_matched_am() {
        let laser = LaserParams::new(2.0 * PI * 840.0, 0.0, 4e3);
        assert!(detuning_scan(&laser, &[-1e3, 1e3], 39, 100e-6, None).is_err());
    }
}
