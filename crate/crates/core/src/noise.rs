//! Signal and noise entering the probe splitting `M(t) = S(t) + N(t)`.
//!
//! Noise is stored as a magnetic field in tesla and converted to a frequency
//! shift with the Zeeman coupling κ. Signals are expressed directly in Hz.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

/// Splitting of 5.72 MHz at 204 μT, i.e. about 28.04 Hz/nT.
pub const DEFAULT_KAPPA_HZ_PER_TESLA: f64 = 5.72e6 / 204e-6;

/// Anything that shifts the probe frequency, in Hz, as a function of time.
pub trait ShiftSource: Sync {
    fn shift_hz(&self, t: f64) -> f64;

    /// Jump discontinuities inside `(t0, t1)`, ascending.
    fn discontinuities(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Highest frequency of the smooth (non-jump) content, Hz.
    fn max_smooth_frequency(&self) -> f64;

    /// Upper bound on `|shift_hz(t)|` over `[0, t_end]`.
    fn peak_hz(&self, t_end: f64) -> f64;
}

impl<T: ShiftSource + ?Sized> ShiftSource for &T {
    fn shift_hz(&self, t: f64) -> f64 {
        (**self).shift_hz(t)
    }
    fn discontinuities(&self, t0: f64, t1: f64) -> Vec<f64> {
        (**self).discontinuities(t0, t1)
    }
    fn max_smooth_frequency(&self) -> f64 {
        (**self).max_smooth_frequency()
    }
    fn peak_hz(&self, t_end: f64) -> f64 {
        (**self).peak_hz(t_end)
    }
}

impl<A: ShiftSource, B: ShiftSource> ShiftSource for (A, B) {
    fn shift_hz(&self, t: f64) -> f64 {
        self.0.shift_hz(t) + self.1.shift_hz(t)
    }
    fn discontinuities(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut d = self.0.discontinuities(t0, t1);
        d.extend(self.1.discontinuities(t0, t1));
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }
    fn max_smooth_frequency(&self) -> f64 {
        self.0.max_smooth_frequency().max(self.1.max_smooth_frequency())
    }
    fn peak_hz(&self, t_end: f64) -> f64 {
        self.0.peak_hz(t_end) + self.1.peak_hz(t_end)
    }
}

/// No shift at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quiet;

impl ShiftSource for Quiet {
    fn shift_hz(&self, _t: f64) -> f64 {
        0.0
    }
    fn max_smooth_frequency(&self) -> f64 {
        0.0
    }
    fn peak_hz(&self, _t_end: f64) -> f64 {
        0.0
    }
}

/// Constant shift, Hz.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ShiftSource for Constant {
    fn shift_hz(&self, _t: f64) -> f64 {
        self.0
    }
    fn max_smooth_frequency(&self) -> f64 {
        0.0
    }
    fn peak_hz(&self, _t_end: f64) -> f64 {
        self.0.abs()
    }
}

/// Closure-backed shift with a declared bandwidth and bound.
pub struct FnShift<F> {
    pub f: F,
    pub max_frequency: f64,
    pub peak: f64,
}

impl<F: Fn(f64) -> f64 + Sync> ShiftSource for FnShift<F> {
    fn shift_hz(&self, t: f64) -> f64 {
        (self.f)(t)
    }
    fn max_smooth_frequency(&self) -> f64 {
        self.max_frequency
    }
    fn peak_hz(&self, _t_end: f64) -> f64 {
        self.peak
    }
}

/// Uniformly sampled shift series, linearly interpolated.
#[derive(Debug, Clone)]
pub struct SampledShift {
    pub values: Vec<f64>,
    pub dt: f64,
}

impl ShiftSource for SampledShift {
    fn shift_hz(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 0 {
            return 0.0;
        }
        let x = (t / self.dt).max(0.0);
        let i = (x.floor() as usize).min(n - 1);
        if i + 1 >= n {
            return self.values[n - 1];
        }
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
    fn max_smooth_frequency(&self) -> f64 {
        0.5 / self.dt
    }
    fn peak_hz(&self, _t_end: f64) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub f_hz: f64,
    #[serde(rename = "B_tesla")]
    pub b_tesla: f64,
}

/// Discrete magnetic noise tones plus a slow drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneSpectrum {
    pub tones: Vec<Tone>,
    /// `gμ_B·B_slow·f_slow/h`, Hz².
    #[serde(default)]
    pub slow_drift_hz2: f64,
    #[serde(default = "default_kappa")]
    pub kappa_hz_per_tesla: f64,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA_HZ_PER_TESLA
}

impl Default for ToneSpectrum {
    fn default() -> Self {
        ToneSpectrum {
            tones: Vec::new(),
            slow_drift_hz2: 0.0,
            kappa_hz_per_tesla: DEFAULT_KAPPA_HZ_PER_TESLA,
        }
    }
}

impl ToneSpectrum {
    pub fn new(tones: Vec<Tone>, slow_drift_hz2: f64, kappa_hz_per_tesla: f64) -> Result<Self> {
        let s = ToneSpectrum {
            tones,
            slow_drift_hz2,
            kappa_hz_per_tesla,
        };
        s.validate()?;
        Ok(s)
    }

    /// Residual 50/100/150 Hz mains tones (540, 390, 260 pT) left behind by
    /// active field stabilization, without slow drift.
    pub fn mains_residual() -> Self {
        ToneSpectrum {
            tones: vec![
                Tone { f_hz: 50.0, b_tesla: 540e-12 },
                Tone { f_hz: 100.0, b_tesla: 390e-12 },
                Tone { f_hz: 150.0, b_tesla: 260e-12 },
            ],
            slow_drift_hz2: 0.0,
            kappa_hz_per_tesla: DEFAULT_KAPPA_HZ_PER_TESLA,
        }
    }

    pub fn with_slow_drift(mut self, hz2: f64) -> Self {
        self.slow_drift_hz2 = hz2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_hz_per_tesla > 0.0) || !self.kappa_hz_per_tesla.is_finite() {
            return Err(invalid("kappa_hz_per_tesla must be positive"));
        }
        if !(self.slow_drift_hz2 >= 0.0) || !self.slow_drift_hz2.is_finite() {
            return Err(invalid("slow_drift_hz2 must be non-negative"));
        }
        for (i, t) in self.tones.iter().enumerate() {
            if !(t.f_hz > 0.0) || !t.f_hz.is_finite() {
                return Err(invalid(format!("tones[{i}].f_hz must be positive")));
            }
            if !(t.b_tesla >= 0.0) || !t.b_tesla.is_finite() {
                return Err(invalid(format!("tones[{i}].B_tesla must be non-negative")));
            }
            if self.tones[..i].iter().any(|o| o.f_hz == t.f_hz) {
                return Err(invalid(format!("tones[{i}].f_hz duplicates another tone")));
            }
        }
        Ok(())
    }

    pub fn max_frequency(&self) -> f64 {
        self.tones.iter().fold(0.0, |m, t| m.max(t.f_hz))
    }

    /// RMS of the drift slope, Hz/s.
    pub fn drift_slope_rms(&self) -> f64 {
        2.0 * PI * self.slow_drift_hz2
    }
}

/// One draw of the noise field: tone phases and a drift slope.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    /// `(f_hz, B_tesla, α)` per tone.
    pub tones: Vec<(f64, f64, f64)>,
    /// Field drift, tesla per second.
    pub drift_tesla_per_s: f64,
    pub kappa_hz_per_tesla: f64,
}

impl NoiseRealization {
    pub fn silent() -> Self {
        NoiseRealization {
            tones: Vec::new(),
            drift_tesla_per_s: 0.0,
            kappa_hz_per_tesla: DEFAULT_KAPPA_HZ_PER_TESLA,
        }
    }

    /// `Σ Bₙ cos(ωₙt + αₙ) + drift·t`, tesla.
    pub fn field(&self, t: f64) -> f64 {
        self.tones
            .iter()
            .map(|&(f, b, a)| b * (2.0 * PI * f * t + a).cos())
            .sum::<f64>()
            + self.drift_tesla_per_s * t
    }
}

impl ShiftSource for NoiseRealization {
    fn shift_hz(&self, t: f64) -> f64 {
        self.kappa_hz_per_tesla * self.field(t)
    }
    fn max_smooth_frequency(&self) -> f64 {
        self.tones.iter().fold(0.0, |m, t| m.max(t.0))
    }
    fn peak_hz(&self, t_end: f64) -> f64 {
        self.kappa_hz_per_tesla
            * (self.tones.iter().map(|t| t.1).sum::<f64>() + self.drift_tesla_per_s.abs() * t_end)
    }
}

pub fn eval_field(r: &NoiseRealization, t: f64) -> f64 {
    r.field(t)
}

/// Draw tone phases uniformly on `[0, 2π)` and a Gaussian drift slope with
/// RMS `2π·slow_drift_hz2` Hz/s.
pub fn sample_realization(spectrum: &ToneSpectrum, seed: u64) -> NoiseRealization {
    sample_realization_with(spectrum, &mut rng::stream(seed, 0))
}

pub fn sample_realization_with<R: Rng + ?Sized>(spectrum: &ToneSpectrum, rng: &mut R) -> NoiseRealization {
    let tones = spectrum
        .tones
        .iter()
        .map(|t| (t.f_hz, t.b_tesla, rng.random::<f64>() * 2.0 * PI))
        .collect();
    let sigma = spectrum.drift_slope_rms();
    let slope_hz = if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    };
    NoiseRealization {
        tones,
        drift_tesla_per_s: slope_hz / spectrum.kappa_hz_per_tesla,
        kappa_hz_per_tesla: spectrum.kappa_hz_per_tesla,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Cosine,
    /// `s₀` during the first half period, 0 during the second.
    SquareUnipolar,
    /// `+s₀` then `-s₀`.
    SquareBipolar,
}

/// Deliberately modulated signal, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub amplitude_hz: f64,
    pub carrier_hz: f64,
    pub waveform: Waveform,
    #[serde(default)]
    pub phase_rad: f64,
}

impl SignalModel {
    pub fn none() -> Self {
        SignalModel {
            amplitude_hz: 0.0,
            carrier_hz: 1.0,
            waveform: Waveform::Cosine,
            phase_rad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude_hz.is_finite() || !self.phase_rad.is_finite() {
            return Err(invalid("signal amplitude and phase must be finite"));
        }
        if !(self.carrier_hz > 0.0) || !self.carrier_hz.is_finite() {
            return Err(invalid("signal carrier_hz must be positive"));
        }
        Ok(())
    }

    /// Fraction of the carrier period elapsed at `t`, in `[0, 1)`.
    fn cycle(&self, t: f64) -> f64 {
        let u = self.carrier_hz * t + self.phase_rad / (2.0 * PI);
        u - u.floor()
    }

    pub fn value(&self, t: f64) -> f64 {
        let s0 = self.amplitude_hz;
        match self.waveform {
            Waveform::Cosine => s0 * (2.0 * PI * self.carrier_hz * t + self.phase_rad).cos(),
            Waveform::SquareUnipolar => {
                if self.cycle(t) < 0.5 {
                    s0
                } else {
                    0.0
                }
            }
            Waveform::SquareBipolar => {
                if self.cycle(t) < 0.5 {
                    s0
                } else {
                    -s0
                }
            }
        }
    }
}

impl ShiftSource for SignalModel {
    fn shift_hz(&self, t: f64) -> f64 {
        self.value(t)
    }

    fn discontinuities(&self, t0: f64, t1: f64) -> Vec<f64> {
        if self.waveform == Waveform::Cosine || self.amplitude_hz == 0.0 {
            return Vec::new();
        }
        // edges where f·t + φ/2π crosses a multiple of 1/2
        let offset = self.phase_rad / (2.0 * PI);
        let k0 = (2.0 * (self.carrier_hz * t0 + offset)).floor() as i64 + 1;
        let mut out = Vec::new();
        let mut k = k0;
        loop {
            let t = (k as f64 * 0.5 - offset) / self.carrier_hz;
            if t >= t1 {
                break;
            }
            if t > t0 {
                out.push(t);
            }
            k += 1;
        }
        out
    }

    fn max_smooth_frequency(&self) -> f64 {
        match self.waveform {
            Waveform::Cosine if self.amplitude_hz != 0.0 => self.carrier_hz,
            _ => 0.0,
        }
    }

    fn peak_hz(&self, _t_end: f64) -> f64 {
        self.amplitude_hz.abs()
    }
}

pub fn eval_signal(s: &SignalModel, t: f64) -> f64 {
    s.value(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_tone() -> ToneSpectrum {
        ToneSpectrum {
            tones: vec![Tone { f_hz: 100.0, b_tesla: 1e-9 }],
            ..Default::default()
        }
    }

    #[test]
    fn kappa_default() {
        // 28.04 Hz/nT
        assert!((DEFAULT_KAPPA_HZ_PER_TESLA * 1e-9 - 28.039_215_686).abs() < 1e-8);
    }

    #[test]
    fn empty_spectrum_is_silent() {
        let r = sample_realization(&ToneSpectrum::default(), 3);
        for t in [0.0, 0.01, 1.0, 17.3] {
            assert_eq!(eval_field(&r, t), 0.0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = one_tone().with_slow_drift(37.0);
        assert_eq!(sample_realization(&s, 11), sample_realization(&s, 11));
        assert_ne!(sample_realization(&s, 11), sample_realization(&s, 12));
    }

    #[test]
    fn uniform_phase_statistics() {
        let s = one_tone();
        let n = 10_000;
        let mut rng = rng::stream(5, 0);
        let mean: f64 = (0..n)
            .map(|_| sample_realization_with(&s, &mut rng).tones[0].2.cos())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn single_tone_values() {
        let r = NoiseRealization {
            tones: vec![(100.0, 1e-9, 0.0)],
            drift_tesla_per_s: 0.0,
            kappa_hz_per_tesla: DEFAULT_KAPPA_HZ_PER_TESLA,
        };
        assert!((eval_field(&r, 0.0) - 1e-9).abs() < 1e-24);
        assert!(eval_field(&r, 2.5e-3).abs() < 1e-24);
    }

    #[test]
    fn mains_tones_add_at_zero() {
        let spec = ToneSpectrum::mains_residual();
        let r = NoiseRealization {
            tones: spec.tones.iter().map(|t| (t.f_hz, t.b_tesla, 0.0)).collect(),
            drift_tesla_per_s: 0.0,
            kappa_hz_per_tesla: spec.kappa_hz_per_tesla,
        };
        assert!((eval_field(&r, 0.0) - 1.19e-9).abs() < 1e-21);
    }

    #[test]
    fn shift_is_kappa_times_field() {
        let spec = ToneSpectrum::mains_residual().with_slow_drift(37.0);
        let r = sample_realization(&spec, 99);
        for i in 0..50 {
            let t = i as f64 * 1.3e-3;
            assert!((r.shift_hz(t) - spec.kappa_hz_per_tesla * r.field(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn tone_average_over_periods_leaves_drift() {
        let spec = ToneSpectrum::mains_residual().with_slow_drift(37.0);
        let r = sample_realization(&spec, 4);
        // 0.1 s spans whole periods of 50/100/150 Hz; midpoint rule is exact
        // for the linear drift and for tones sampled at many points per period
        let n = 30_000;
        let t_end = 0.1;
        let dt = t_end / n as f64;
        let avg: f64 = (0..n).map(|i| r.field((i as f64 + 0.5) * dt)).sum::<f64>() / n as f64;
        let drift_avg = r.drift_tesla_per_s * t_end / 2.0;
        assert!((avg - drift_avg).abs() <= 1e-12 * (1e-9 + drift_avg.abs()));
    }

    #[test]
    fn signal_waveforms() {
        let cos = SignalModel {
            amplitude_hz: 10.0,
            carrier_hz: 500.0,
            waveform: Waveform::Cosine,
            phase_rad: 0.0,
        };
        assert_eq!(eval_signal(&cos, 0.0), 10.0);
        let sq = SignalModel {
            waveform: Waveform::SquareUnipolar,
            ..cos
        };
        assert_eq!(eval_signal(&sq, 0.4e-3), 10.0);
        assert_eq!(eval_signal(&sq, 1.2e-3), 0.0);
        let bi = SignalModel {
            waveform: Waveform::SquareBipolar,
            ..cos
        };
        assert_eq!(eval_signal(&bi, 1.2e-3), -10.0);
    }

    #[test]
    fn square_edges() {
        let sq = SignalModel {
            amplitude_hz: 1.0,
            carrier_hz: 500.0,
            waveform: Waveform::SquareUnipolar,
            phase_rad: 0.0,
        };
        let edges = sq.discontinuities(0.0, 3.5e-3);
        let expected = [1e-3, 2e-3, 3e-3];
        assert_eq!(edges.len(), 3);
        for (e, x) in edges.iter().zip(expected) {
            assert!((e - x).abs() < 1e-15);
        }
        // shifted phase moves the edges
        let shifted = SignalModel { phase_rad: PI / 2.0, ..sq };
        let e = shifted.discontinuities(0.0, 2e-3);
        assert!((e[0] - 0.5e-3).abs() < 1e-15 && (e[1] - 1.5e-3).abs() < 1e-15);
    }

    #[test]
    fn spectrum_json_shape() {
        let json = serde_json::to_value(ToneSpectrum::mains_residual().with_slow_drift(37.0)).unwrap();
        assert_eq!(json["tones"][0]["f_hz"], 50.0);
        assert_eq!(json["tones"][2]["B_tesla"], 260e-12);
        assert_eq!(json["slow_drift_hz2"], 37.0);
        assert!(json["kappa_hz_per_tesla"].as_f64().unwrap() > 2.8e10);
        let back: ToneSpectrum = serde_json::from_value(json).unwrap();
        assert_eq!(back.tones.len(), 3);
    }

    #[test]
    fn spectrum_validation() {
        let mut s = ToneSpectrum::mains_residual();
        assert!(s.validate().is_ok());
        s.tones[1].f_hz = 50.0;
        assert!(s.validate().is_err());
        let s = ToneSpectrum {
            kappa_hz_per_tesla: 0.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
