//! Analytic lock-in responses of the probe and of a classical demodulator.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::noise::{ShiftSource, ToneSpectrum};
use crate::quad;
use crate::sequence::PulseSequence;
use crate::special::bessel_j0;

/// Ratio `max|M|/f_m` above which the quadrature formulas are flagged.
pub const WEAK_COUPLING_RATIO: f64 = 0.1;

/// Phase and out-of-plane component accumulated by the probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratures {
    pub phi_lockin: f64,
    /// `1 − 2P↑` contribution from the quadrature channel.
    pub z_component: f64,
    /// False when the weak-coupling condition does not hold.
    pub weak_coupling: bool,
}

/// In-phase and quadrature outputs of a classical lock-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalIQ {
    pub i: f64,
    pub q: f64,
    /// Detector gain m₀; `i` and `q` are already divided by it.
    pub gain: f64,
}

impl ClassicalIQ {
    pub fn magnitude(&self) -> f64 {
        self.i.hypot(self.q)
    }

    /// `atan2(Q, I)`; `None` when both vanish.
    pub fn phase(&self) -> Option<f64> {
        if self.i == 0.0 && self.q == 0.0 {
            None
        } else {
            Some(self.q.atan2(self.i))
        }
    }
}

pub fn weak_coupling_ok(max_abs_m_hz: f64, f_m_hz: f64) -> bool {
    max_abs_m_hz.abs() / f_m_hz < WEAK_COUPLING_RATIO
}

/// Nutation angle of the pulse train at time `t`. Finite pulses rotate
/// linearly over their duration.
fn nutation_angle(seq: &PulseSequence, t: f64) -> f64 {
    seq.pulses()
        .iter()
        .map(|p| {
            let d = p.duration;
            if d > 0.0 {
                p.rotation_angle * ((t - p.start()) / d).clamp(0.0, 1.0)
            } else if t > p.time {
                p.rotation_angle
            } else {
                0.0
            }
        })
        .sum()
}

/// `φ = 2π∫M cos θ dt` and `z = 2π∫M sin θ dt` over the sequence.
pub fn quadratures<S: ShiftSource + ?Sized>(m: &S, seq: &PulseSequence) -> Result<Quadratures> {
    seq.validate()?;
    let total = seq.total_duration();
    let mut edges = vec![0.0, total];
    for p in seq.pulses() {
        edges.push(p.start());
        edges.push(p.end());
    }
    edges.extend(m.discontinuities(0.0, total));
    edges.retain(|t| (0.0..=total).contains(t));
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let f_max = m.max_smooth_frequency();
    let panel = if f_max > 0.0 { 0.05 / f_max } else { f64::INFINITY };
    let mut phi = 0.0;
    let mut z = 0.0;
    for w in edges.windows(2) {
        let theta_mid = nutation_angle(seq, 0.5 * (w[0] + w[1]));
        let finite = seq.pulses().iter().any(|p| p.duration > 0.0 && p.start() < w[1] && p.end() > w[0]);
        if finite {
            phi += quad::integrate(|t| m.shift_hz(t) * nutation_angle(seq, t).cos(), w[0], w[1], panel);
            z += quad::integrate(|t| m.shift_hz(t) * nutation_angle(seq, t).sin(), w[0], w[1], panel);
        } else {
            let v = quad::integrate(|t| m.shift_hz(t), w[0], w[1], panel);
            phi += v * theta_mid.cos();
            z += v * theta_mid.sin();
        }
    }
    Ok(Quadratures {
        phi_lockin: 2.0 * PI * phi,
        z_component: 2.0 * PI * z,
        weak_coupling: weak_coupling_ok(m.peak_hz(total), seq.modulation_frequency()),
    })
}

/// Demodulate `samples` (spacing `dt`, detector units) at `f_m`.
///
/// The quadrature channel mixes with `−sin`, so a signal
/// `S₀cos(2πf_m t + φ)` demodulates to `(S₀/2)(cos φ, sin φ)`.
pub fn classical_lockin(samples: &[f64], dt: f64, f_m: f64, gain: f64) -> Result<ClassicalIQ> {
    if !(dt > 0.0) || !(f_m > 0.0) || gain == 0.0 || !gain.is_finite() {
        return Err(invalid("classical lock-in needs dt > 0, f_m > 0 and a nonzero gain"));
    }
    if dt * f_m > 1.0 / 20.0 {
        return Err(invalid(format!(
            "undersampled: {:.1} samples per modulation period, at least 20 needed",
            1.0 / (dt * f_m)
        )));
    }
    if samples.len() < 2 {
        return Err(invalid("classical lock-in needs at least two samples"));
    }
    let n = samples.len();
    let total = (n - 1) as f64 * dt;
    let w = 2.0 * PI * f_m;
    let (mut i, mut q) = (0.0, 0.0);
    for (k, &m) in samples.iter().enumerate() {
        let edge = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let (s, c) = (w * k as f64 * dt).sin_cos();
        i += edge * m * c;
        q -= edge * m * s;
    }
    let scale = dt / (total * gain);
    Ok(ClassicalIQ {
        i: i * scale,
        q: q * scale,
        gain,
    })
}

/// Spectral weight `W(ω) = (−4/ω)·sin²(ωτ/2)·sin(Nωτ)/sin(ωτ)`, seconds.
///
/// Multiplied by the angular amplitude of a tone this gives the amplitude of
/// the phase it imprints.
pub fn filter_weight(n: usize, tau_arm: f64, omega: f64) -> f64 {
    if omega == 0.0 || n == 0 {
        return 0.0;
    }
    let x = omega * tau_arm;
    let nf = n as f64;
    let ratio = if x.sin().abs() < 1e-9 {
        // removable singularity at x = mπ
        nf * (nf * x).cos() / x.cos()
    } else {
        (nf * x).sin() / x.sin()
    };
    let half = (0.5 * x).sin();
    -4.0 / omega * half * half * ratio
}

/// Drift contrast factor for a ramp-response moment `moment` (s²).
fn drift_factor(spectrum: &ToneSpectrum, moment: f64) -> f64 {
    let x = 2.0 * PI * spectrum.drift_slope_rms() * moment;
    (-0.5 * x * x).exp()
}

/// `A = Πₙ J₀(2πκBₙ·|W(ωₙ)|)`, times the Gaussian slow-drift factor.
pub fn predicted_contrast(n: usize, tau_arm: f64, spectrum: &ToneSpectrum) -> f64 {
    let tones: f64 = spectrum
        .tones
        .iter()
        .map(|t| {
            let w = filter_weight(n, tau_arm, 2.0 * PI * t.f_hz);
            bessel_j0(2.0 * PI * spectrum.kappa_hz_per_tesla * t.b_tesla * w.abs())
        })
        .product();
    tones * drift_factor(spectrum, n as f64 * tau_arm * tau_arm)
}

/// Contrast for an arbitrary ideal sequence from its own toggling spectrum.
pub fn sequence_contrast(seq: &PulseSequence, spectrum: &ToneSpectrum) -> f64 {
    let g = seq.toggling_waveform();
    let tones: f64 = spectrum
        .tones
        .iter()
        .map(|t| {
            let amp = g.fourier(2.0 * PI * t.f_hz).norm();
            bessel_j0(2.0 * PI * spectrum.kappa_hz_per_tesla * t.b_tesla * amp)
        })
        .product();
    tones * drift_factor(spectrum, g.first_moment())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{Constant, FnShift, Quiet, SignalModel, Tone, Waveform};
    use crate::sequence::{make_cpmg, PhasePolicy};

    #[test]
    fn zero_shift_gives_zero() {
        let seq = make_cpmg(5, 1e-3, PhasePolicy::FixedAxis).unwrap();
        let q = quadratures(&Quiet, &seq).unwrap();
        assert_eq!((q.phi_lockin, q.z_component), (0.0, 0.0));
    }

    #[test]
    fn ramsey_limit() {
        let seq = make_cpmg(0, 0.02, PhasePolicy::FixedAxis).unwrap();
        let q = quadratures(&Constant(3.0), &seq).unwrap();
        assert!((q.phi_lockin - 2.0 * PI * 3.0 * 0.02).abs() < 1e-12);
    }

    #[test]
    fn matched_square() {
        let seq = make_cpmg(99, 1e-3, PhasePolicy::FixedAxis).unwrap();
        let sig = SignalModel {
            amplitude_hz: 9.9,
            carrier_hz: 500.0,
            waveform: Waveform::SquareUnipolar,
            phase_rad: 0.0,
        };
        let q = quadratures(&sig, &seq).unwrap();
        assert!((q.phi_lockin - 0.99 * PI).abs() < 1e-10);
        assert!(q.weak_coupling);
    }

    #[test]
    fn finite_pulses_give_quadrature_channel() {
        let seq = make_cpmg(1, 1e-3, PhasePolicy::FixedAxis)
            .unwrap()
            .with_pulse_duration(2e-4)
            .unwrap();
        let q = quadratures(&Constant(5.0), &seq).unwrap();
        // sin θ over the pulse averages 2/π
        assert!((q.z_component - 2.0 * PI * 5.0 * 2e-4 * 2.0 / PI).abs() < 1e-9);
        assert!(q.phi_lockin.abs() < 1e-9);
    }

    #[test]
    fn weak_coupling_threshold() {
        assert!(weak_coupling_ok(10.0, 500.0));
        assert!(weak_coupling_ok(0.0, 500.0));
        assert!(!weak_coupling_ok(500.0, 500.0));
        let seq = make_cpmg(3, 1e-3, PhasePolicy::FixedAxis).unwrap();
        assert!(!quadratures(&Constant(100.0), &seq).unwrap().weak_coupling);
    }

    #[test]
    fn classical_examples() {
        let (f, dt) = (50.0, 1e-4);
        let n = 2001; // 0.2 s, ten periods
        let lock = |shape: &dyn Fn(f64) -> f64| {
            let s: Vec<f64> = (0..n).map(|k| shape(k as f64 * dt)).collect();
            classical_lockin(&s, dt, f, 1.0).unwrap()
        };
        let iq = lock(&|t| 2.0 * (2.0 * PI * f * t).cos());
        assert!((iq.i - 1.0).abs() < 1e-9 && iq.q.abs() < 1e-9);
        let iq = lock(&|t| 2.0 * (2.0 * PI * f * t + PI / 2.0).cos());
        assert!(iq.i.abs() < 2e-9 && (iq.q - 1.0).abs() < 2e-9);
        let iq = lock(&|t| 2.0 * (2.0 * PI * 3.0 * f * t).cos());
        assert!(iq.magnitude() < 2e-9);
        assert!(classical_lockin(&[0.0; 10], 1e-3, 100.0, 1.0).is_err());
    }

    #[test]
    fn classical_gain_and_phase() {
        let (f, dt) = (50.0, 1e-4);
        let s: Vec<f64> = (0..2001).map(|k| 3.0 * (2.0 * PI * f * k as f64 * dt - 0.4).cos()).collect();
        let iq = classical_lockin(&s, dt, f, 3.0).unwrap();
        assert!((iq.magnitude() - 0.5).abs() < 1e-9);
        assert!((iq.phase().unwrap() + 0.4).abs() < 1e-9);
        assert_eq!(ClassicalIQ { i: 0.0, q: 0.0, gain: 1.0 }.phase(), None);
    }

    #[test]
    fn filter_weight_limits() {
        assert!(filter_weight(17, 5e-3, 1e-9).abs() < 1e-6);
        let tau = 5e-3;
        let w = filter_weight(17, tau, PI / tau);
        assert!((w + 4.0 * 17.0 * tau / PI).abs() < 1e-12);
        // quoted to five significant figures
        assert!((w + 0.10823).abs() < 5e-6);
        for eps in [1e-6, -1e-6] {
            let near = filter_weight(17, tau, PI * (1.0 + eps) / tau);
            assert!((near - w).abs() < 1e-5 * w.abs());
        }
        assert!(filter_weight(17, tau, 2.0 * PI / tau).abs() < 1e-12);
        // even N at an odd resonance flips the sign
        assert!((filter_weight(4, tau, 3.0 * PI / tau) - 4.0 * 4.0 * tau / (3.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn contrast_examples() {
        let empty = ToneSpectrum::default();
        assert_eq!(predicted_contrast(17, 3e-3, &empty), 1.0);
        let one = ToneSpectrum::new(vec![Tone { f_hz: 100.0, b_tesla: 1.8e-10 }], 0.0, 28e9).unwrap();
        assert!((predicted_contrast(17, 10e-3, &one) - 1.0).abs() < 1e-12);
        assert!(predicted_contrast(17, 5e-3, &one) < 0.0);
    }

    #[test]
    fn single_echo_cycle_matches_exact_kernel() {
        // one echo cycle is the case where both kernels coincide
        let seq = make_cpmg(1, 4e-3, PhasePolicy::FixedAxis).unwrap();
        let spec = ToneSpectrum::new(vec![Tone { f_hz: 80.0, b_tesla: 3e-10 }], 0.0, 28e9).unwrap();
        let a = predicted_contrast(1, 4e-3, &spec);
        let b = sequence_contrast(&seq, &spec);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn quadrature_of_tone_equals_kernel() {
        let seq = make_cpmg(6, 2e-3, PhasePolicy::FixedAxis).unwrap();
        let (f, alpha) = (170.0, 0.8);
        let tone = FnShift {
            f: move |t: f64| (2.0 * PI * f * t + alpha).cos(),
            max_frequency: f,
            peak: 1.0,
        };
        let q = quadratures(&tone, &seq).unwrap();
        let g = seq.toggling_waveform().fourier(2.0 * PI * f);
        let expect = 2.0 * PI * (num_complex::Complex64::from_polar(1.0, alpha) * g).re;
        assert!((q.phi_lockin - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }
}
