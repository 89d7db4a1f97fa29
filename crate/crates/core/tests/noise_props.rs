use std::f64::consts::PI;

use proptest::prelude::*;
use qlockin_core::noise::{sample_realization, NoiseRealization, ShiftSource, Tone, ToneSpectrum};
use qlockin_core::rng;
use qlockin_core::special::bessel_j0;
use rand::Rng;

proptest! {
    #[test]
    fn tone_average_leaves_drift(
        base in 1.0f64..60.0,
        harmonics in proptest::collection::vec((1u32..8, 1e-12f64..1e-9), 1..4),
        periods in 1u32..5,
        drift in -1e-9f64..1e-9,
        seed in any::<u64>(),
    ) {
        let mut seen = std::collections::BTreeSet::new();
        let tones: Vec<Tone> = harmonics
            .iter()
            .filter(|(h, _)| seen.insert(*h))
            .map(|&(h, b)| Tone { f_hz: base * h as f64, b_tesla: b })
            .collect();
        let spec = ToneSpectrum::new(tones, 0.0, 28e9).unwrap();
        let mut r = sample_realization(&spec, seed);
        r.drift_tesla_per_s = drift;
        let t = periods as f64 / base;
        // trapezoid on a grid that resolves every tone; exact for trigonometric
        // polynomials below the Nyquist limit and for the linear ramp
        let n = 4096;
        let h = t / n as f64;
        let mut acc = 0.5 * (r.field(0.0) + r.field(t));
        for i in 1..n {
            acc += r.field(i as f64 * h);
        }
        let mean = acc * h / t;
        let expect = drift * t / 2.0;
        let scale = spec.tones.iter().map(|x| x.b_tesla).sum::<f64>() + drift.abs() * t;
        prop_assert!((mean - expect).abs() < 1e-12 * scale);
    }

    #[test]
    fn frequency_view_matches_field_view(f in 1.0f64..500.0, b in 0.0f64..1e-9, kappa in 1e9f64..1e11, t in 0.0f64..1.0, seed in any::<u64>()) {
        let spec = ToneSpectrum::new(vec![Tone { f_hz: f, b_tesla: b }], 0.0, kappa).unwrap();
        let r: NoiseRealization = sample_realization(&spec, seed);
        prop_assert!((r.shift_hz(t) - kappa * r.field(t)).abs() <= 1e-12 * kappa * b.max(1e-30));
    }
}

#[test]
fn phase_average_is_bessel() {
    let mut rng = rng::stream(2024, 0);
    let n = 100_000;
    for x in [0.5, 2.405, 7.0] {
        let samples: Vec<f64> = (0..n).map(|_| (x * (rng.random::<f64>() * 2.0 * PI).cos()).cos()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - bessel_j0(x)).abs() < 3.0 * se, "x={x}: {mean} vs {}", bessel_j0(x));
    }
}
