//! Modulation pulse schedules and their toggling waveforms.
//!
//! A [`PulseSequence`] holds only the π train. The bracketing π/2 pulses at
//! `t = 0` and `t = T` belong to the experiment runner.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Axis policy for consecutive π pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    #[default]
    FixedAxis,
    /// Strict X, Y, X, Y, ... alternation.
    XyAlternating,
    /// X, −X, X, −X, ...: every pair of pulses is the identity rather than
    /// a 2π rotation, so the probe returns without the spinor sign.
    AlternatingSign,
}

impl PhasePolicy {
    fn axis_phase(self, index: usize) -> f64 {
        match self {
            PhasePolicy::FixedAxis => 0.0,
            PhasePolicy::XyAlternating => {
                if index % 2 == 0 {
                    0.0
                } else {
                    FRAC_PI_2
                }
            }
            PhasePolicy::AlternatingSign => {
                if index % 2 == 0 {
                    0.0
                } else {
                    PI
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    /// Center of the pulse, seconds.
    pub time: f64,
    pub rotation_angle: f64,
    /// 0 is X, π/2 is Y.
    pub axis_phase: f64,
    /// Zero for an ideal instantaneous pulse.
    pub duration: f64,
}

impl Pulse {
    pub fn start(&self) -> f64 {
        self.time - 0.5 * self.duration
    }

    pub fn end(&self) -> f64 {
        self.time + 0.5 * self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceKind {
    Cpmg { tau_arm: f64 },
    Uhrig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    kind: SequenceKind,
    pulses: Vec<Pulse>,
    total_duration: f64,
    phase_policy: PhasePolicy,
}

/// Equally spaced π train with full-length first and last arms:
/// pulse `k` sits at `k·τ_arm` and `T = (N+1)·τ_arm`.
pub fn make_cpmg(n: usize, tau_arm: f64, phase_policy: PhasePolicy) -> Result<PulseSequence> {
    if !(tau_arm > 0.0) || !tau_arm.is_finite() {
        return Err(invalid(format!("tau_arm must be positive, got {tau_arm}")));
    }
    let pulses = (1..=n)
        .map(|k| Pulse {
            time: k as f64 * tau_arm,
            rotation_angle: PI,
            axis_phase: phase_policy.axis_phase(k - 1),
            duration: 0.0,
        })
        .collect();
    Ok(PulseSequence {
        kind: SequenceKind::Cpmg { tau_arm },
        pulses,
        total_duration: (n + 1) as f64 * tau_arm,
        phase_policy,
    })
}

/// Uhrig schedule `t_j = T·sin²(πj/(2N+2))`, `j = 1..N`.
pub fn make_uhrig(n: usize, total: f64, phase_policy: PhasePolicy) -> Result<PulseSequence> {
    if n == 0 {
        return Err(invalid("Uhrig sequence needs at least one pulse"));
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(invalid(format!("total duration must be positive, got {total}")));
    }
    let pulses = (1..=n)
        .map(|j| {
            let s = (PI * j as f64 / (2 * n + 2) as f64).sin();
            Pulse {
                time: total * s * s,
                rotation_angle: PI,
                axis_phase: phase_policy.axis_phase(j - 1),
                duration: 0.0,
            }
        })
        .collect();
    Ok(PulseSequence {
        kind: SequenceKind::Uhrig,
        pulses,
        total_duration: total,
        phase_policy,
    })
}

impl PulseSequence {
    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn n_pi(&self) -> usize {
        self.pulses.len()
    }

    pub fn phase_policy(&self) -> PhasePolicy {
        self.phase_policy
    }

    pub fn tau_arm(&self) -> Option<f64> {
        match self.kind {
            SequenceKind::Cpmg { tau_arm } => Some(tau_arm),
            SequenceKind::Uhrig => None,
        }
    }

    /// `1/(2τ_arm)` for CPMG; for Uhrig the mean flip rate `(N+1)/(2T)`.
    pub fn modulation_frequency(&self) -> f64 {
        match self.kind {
            SequenceKind::Cpmg { tau_arm } => 0.5 / tau_arm,
            SequenceKind::Uhrig => (self.n_pi() + 1) as f64 / (2.0 * self.total_duration),
        }
    }

    /// Give every π pulse a finite duration, centered on its ideal time.
    pub fn with_pulse_duration(mut self, duration: f64) -> Result<Self> {
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(invalid(format!("pulse duration must be >= 0, got {duration}")));
        }
        for p in &mut self.pulses {
            p.duration = duration;
        }
        self.validate()?;
        Ok(self)
    }

    /// Finite pulses of length `rotation_angle / Ω_R`.
    pub fn with_rabi(self, rabi: f64) -> Result<Self> {
        if !(rabi > 0.0) || !rabi.is_finite() {
            return Err(invalid(format!("Rabi frequency must be positive, got {rabi}")));
        }
        self.with_pulse_duration(PI / rabi)
    }

    pub fn pulse_duration(&self) -> f64 {
        self.pulses.first().map_or(0.0, |p| p.duration)
    }

    /// Check ordering, containment in `[0, T]`, and non-overlap.
    pub fn validate(&self) -> Result<()> {
        let t = self.total_duration;
        let eps = 1e-12 * t;
        for p in &self.pulses {
            if !(p.rotation_angle > 0.0 && p.rotation_angle <= 2.0 * PI) {
                return Err(invalid(format!("rotation angle {} outside (0, 2π]", p.rotation_angle)));
            }
            if p.start() < -eps || p.end() > t + eps {
                return Err(invalid(format!(
                    "pulse window [{:e}, {:e}] s leaves [0, {t:e}] s",
                    p.start(),
                    p.end()
                )));
            }
        }
        for w in self.pulses.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(invalid("pulse times must be strictly increasing"));
            }
            if w[0].end() > w[1].start() + eps {
                return Err(invalid(format!(
                    "pulses at {:e} s and {:e} s overlap (duration {:e} s)",
                    w[0].time, w[1].time, w[0].duration
                )));
            }
        }
        Ok(())
    }

    /// `(-1)^(number of π-pulse centers before t)`, durations ignored.
    pub fn toggling_value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.total_duration) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.total_duration,
            });
        }
        let flips = self.pulses.partition_point(|p| p.time < t);
        Ok(if flips % 2 == 0 { 1.0 } else { -1.0 })
    }

    pub fn toggling_waveform(&self) -> TogglingWaveform {
        TogglingWaveform {
            breakpoints: self.pulses.iter().map(|p| p.time).collect(),
            total_duration: self.total_duration,
        }
    }

    pub fn to_spec(&self) -> SequenceSpec {
        let (kind, tau, total) = match self.kind {
            SequenceKind::Cpmg { tau_arm } => (SequenceType::Cpmg, Some(tau_arm), None),
            SequenceKind::Uhrig => (SequenceType::Uhrig, None, Some(self.total_duration)),
        };
        SequenceSpec {
            kind,
            n: self.n_pi(),
            tau_arm_s: tau,
            total_s: total,
            phase_policy: self.phase_policy,
            pulse_duration_s: self.pulse_duration(),
        }
    }
}

/// Ideal ±1 modulation generated by the π train.
#[derive(Debug, Clone, PartialEq)]
pub struct TogglingWaveform {
    /// Times at which the sign flips.
    pub breakpoints: Vec<f64>,
    pub total_duration: f64,
}

impl TogglingWaveform {
    /// Constant-sign segments `(start, end, sign)`, starting at +1.
    pub fn segments(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.breakpoints.len() + 1);
        let mut start = 0.0;
        let mut sign = 1.0;
        for &b in self.breakpoints.iter().chain(std::iter::once(&self.total_duration)) {
            out.push((start, b, sign));
            start = b;
            sign = -sign;
        }
        out
    }

    /// `∫₀ᵀ g(t) dt`.
    pub fn integral(&self) -> f64 {
        self.segments().iter().map(|(a, b, s)| s * (b - a)).sum()
    }

    /// `∫₀ᵀ t·g(t) dt`, the response to a linear ramp.
    pub fn first_moment(&self) -> f64 {
        self.segments()
            .iter()
            .map(|(a, b, s)| 0.5 * s * (b * b - a * a))
            .sum()
    }

    /// `G(ω) = ∫₀ᵀ g(t) e^{iωt} dt`, integrated piecewise in closed form.
    ///
    /// A tone `B cos(ωt + α)` accumulates the phase `Re(e^{iα} G(ω))` per
    /// unit coupling.
    pub fn fourier(&self, omega: f64) -> Complex64 {
        self.segments()
            .iter()
            .map(|&(a, b, s)| {
                let half = 0.5 * (b - a);
                let x = omega * half;
                let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                Complex64::from_polar(s * 2.0 * half * sinc, omega * 0.5 * (a + b))
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceType {
    Cpmg,
    Uhrig,
}

/// Serialized form of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(rename = "type")]
    pub kind: SequenceType,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_arm_s: Option<f64>,
    #[serde(rename = "T_s", default, skip_serializing_if = "Option::is_none")]
    pub total_s: Option<f64>,
    #[serde(default)]
    pub phase_policy: PhasePolicy,
    #[serde(default)]
    pub pulse_duration_s: f64,
}

impl SequenceSpec {
    pub fn build(&self) -> Result<PulseSequence> {
        let seq = match self.kind {
            SequenceType::Cpmg => {
                let tau = self
                    .tau_arm_s
                    .ok_or_else(|| invalid("cpmg sequence requires tau_arm_s"))?;
                make_cpmg(self.n, tau, self.phase_policy)?
            }
            SequenceType::Uhrig => {
                let total = self.total_s.ok_or_else(|| invalid("uhrig sequence requires T_s"))?;
                make_uhrig(self.n, total, self.phase_policy)?
            }
        };
        if self.pulse_duration_s != 0.0 {
            seq.with_pulse_duration(self.pulse_duration_s)
        } else {
            Ok(seq)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpmg_seventeen_pulses() {
        let s = make_cpmg(17, 5e-3, PhasePolicy::FixedAxis).unwrap();
        assert!((s.total_duration() - 0.090).abs() < 1e-15);
        assert_eq!(s.n_pi(), 17);
        for (k, p) in s.pulses().iter().enumerate() {
            assert!((p.time - (k + 1) as f64 * 5e-3).abs() < 1e-15);
            assert_eq!(p.rotation_angle, PI);
        }
        assert!((s.pulses().last().unwrap().time - 0.085).abs() < 1e-15);
    }

    #[test]
    fn ramsey_limit() {
        let s = make_cpmg(0, 2e-3, PhasePolicy::FixedAxis).unwrap();
        assert_eq!(s.n_pi(), 0);
        assert_eq!(s.total_duration(), 2e-3);
        assert_eq!(s.toggling_value(1.9e-3).unwrap(), 1.0);
    }

    #[test]
    fn modulation_frequency_from_arm() {
        let s = make_cpmg(10, 1.6e-3, PhasePolicy::XyAlternating).unwrap();
        assert!((s.modulation_frequency() - 312.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(make_cpmg(3, 0.0, PhasePolicy::FixedAxis), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_cpmg(3, -1.0, PhasePolicy::FixedAxis), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_uhrig(0, 1.0, PhasePolicy::FixedAxis), Err(Error::InvalidArgument(_))));
        let s = make_cpmg(3, 1e-3, PhasePolicy::FixedAxis).unwrap();
        assert!(s.clone().with_pulse_duration(1e-3).is_ok());
        assert!(matches!(s.with_pulse_duration(1.5e-3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn xy_alternation() {
        let s = make_cpmg(5, 1e-3, PhasePolicy::XyAlternating).unwrap();
        let phases: Vec<f64> = s.pulses().iter().map(|p| p.axis_phase).collect();
        assert_eq!(phases, vec![0.0, FRAC_PI_2, 0.0, FRAC_PI_2, 0.0]);
        let f = make_cpmg(5, 1e-3, PhasePolicy::FixedAxis).unwrap();
        assert!(f.pulses().iter().all(|p| p.axis_phase == 0.0));
    }

    #[test]
    fn uhrig_small_cases() {
        let s = make_uhrig(1, 10e-3, PhasePolicy::FixedAxis).unwrap();
        assert!((s.pulses()[0].time - 5e-3).abs() < 1e-15);
        let s = make_uhrig(2, 8e-3, PhasePolicy::FixedAxis).unwrap();
        assert!((s.pulses()[0].time - 2e-3).abs() < 1e-15);
        assert!((s.pulses()[1].time - 6e-3).abs() < 1e-15);
    }

    #[test]
    fn uhrig_matches_closed_form() {
        let s = make_uhrig(5, 1.0, PhasePolicy::FixedAxis).unwrap();
        // sin²(πj/12) for j = 1..5, evaluated independently
        let expected = [
            0.066_987_298_107_780_68,
            0.25,
            0.5,
            0.75,
            0.933_012_701_892_219_3,
        ];
        for (p, e) in s.pulses().iter().zip(expected) {
            assert!((p.time - e).abs() < 1e-12);
        }
    }

    #[test]
    fn toggling_values() {
        let s = make_cpmg(3, 1e-3, PhasePolicy::FixedAxis).unwrap();
        assert_eq!(s.toggling_value(0.5e-3).unwrap(), 1.0);
        assert_eq!(s.toggling_value(1.5e-3).unwrap(), -1.0);
        let s = make_cpmg(17, 5e-3, PhasePolicy::FixedAxis).unwrap();
        assert_eq!(s.toggling_value(89e-3).unwrap(), -1.0);
        assert!(matches!(s.toggling_value(0.1), Err(Error::OutOfRange { .. })));
        assert!(s.toggling_value(-1e-9).is_err());
    }

    #[test]
    fn fourier_of_echo() {
        // single echo: |G| = 4 sin²(ωτ/2)/ω
        let tau = 2e-3;
        let w = make_cpmg(1, tau, PhasePolicy::FixedAxis).unwrap().toggling_waveform();
        for omega in [10.0, 300.0, 1234.5] {
            let expected = 4.0 * (0.5 * omega * tau).sin().powi(2) / omega;
            assert!((w.fourier(omega).norm() - expected).abs() < 1e-15);
        }
        assert!((w.fourier(0.0).re - w.integral()).abs() < 1e-18);
    }

    #[test]
    fn spec_json_round_trip() {
        let s = make_cpmg(4, 1e-3, PhasePolicy::XyAlternating)
            .unwrap()
            .with_pulse_duration(7.6e-6)
            .unwrap();
        let json = serde_json::to_string(&s.to_spec()).unwrap();
        assert!(json.contains("\"type\":\"cpmg\""));
        assert!(json.contains("\"N\":4"));
        assert!(json.contains("\"phase_policy\":\"xy_alternating\""));
        let back: SequenceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build().unwrap(), s);

        let u: SequenceSpec =
            serde_json::from_str(r#"{"type":"uhrig","N":3,"T_s":0.01,"phase_policy":"fixed_axis"}"#).unwrap();
        assert_eq!(u.build().unwrap().n_pi(), 3);
    }
}
