use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qlockin_core::dynamics::{propagate, readout, ExperimentOptions, PulseModel};
use qlockin_core::lockin::{classical_lockin, filter_weight, predicted_contrast, quadratures};
use qlockin_core::noise::{FnShift, SignalModel, Tone, ToneSpectrum, Waveform};
use qlockin_core::rng;
use qlockin_core::sequence::{make_cpmg, PhasePolicy};
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quadrature_equals_closed_form_kernel(
        n in 0usize..40,
        tau in 1e-4f64..1e-2,
        f in 1.0f64..1500.0,
        alpha in 0.0f64..6.283,
    ) {
        let seq = make_cpmg(n, tau, PhasePolicy::FixedAxis).unwrap();
        let tone = FnShift {
            f: move |t: f64| (2.0 * PI * f * t + alpha).cos(),
            max_frequency: f,
            peak: 1.0,
        };
        let q = quadratures(&tone, &seq).unwrap();
        let g = seq.toggling_waveform().fourier(2.0 * PI * f);
        let expect = 2.0 * PI * (Complex64::from_polar(1.0, alpha) * g).re;
        let full_scale = 2.0 * PI * seq.total_duration();
        prop_assert!((q.phi_lockin - expect).abs() < 1e-6 * expect.abs().max(1e-3 * full_scale));
        prop_assert!(q.z_component.abs() < 1e-12 * full_scale);
    }
}

fn fringe_phase(seq: &qlockin_core::sequence::PulseSequence, sig: &SignalModel, opts: &ExperimentOptions) -> f64 {
    let state = propagate(seq, sig, opts).unwrap();
    let p: Vec<f64> = (0..4).map(|i| readout(&state, seq, i as f64 * PI / 2.0, 0.0)).collect();
    (-(p[1] - p[3])).atan2(p[0] - p[2])
}

#[test]
fn weak_coupling_dynamics_match_quadratures() {
    let rabi = 2.0 * PI * 65.8e3;
    for (n, f_m) in [(1, 100.0), (17, 250.0), (39, 500.0)] {
        let tau = 0.5 / f_m;
        let sig = SignalModel {
            amplitude_hz: 0.01 * f_m,
            carrier_hz: f_m,
            waveform: Waveform::Cosine,
            phase_rad: 1.0,
        };
        let seq = make_cpmg(n, tau, PhasePolicy::FixedAxis).unwrap();
        let q = quadratures(&sig, &seq).unwrap();
        assert!(q.weak_coupling);
        // keep the comparison on the principal branch
        let scale = 1.0 / (q.phi_lockin.abs() / 2.5).max(1.0);
        let sig = SignalModel { amplitude_hz: sig.amplitude_hz * scale, ..sig };
        let q = quadratures(&sig, &seq).unwrap();
        let ideal = fringe_phase(&seq, &sig, &ExperimentOptions::default());
        let finite = fringe_phase(
            &seq.clone().with_rabi(rabi).unwrap(),
            &sig,
            &ExperimentOptions { pulse_model: PulseModel::Finite { rabi }, ..Default::default() },
        );
        for phi in [ideal, finite] {
            assert!((phi - q.phi_lockin).abs() < 0.01 * q.phi_lockin.abs(), "n={n}: {phi} vs {}", q.phi_lockin);
        }
    }
}

#[test]
fn single_tone_contrast_matches_phase_average() {
    let mut rng = rng::stream(99, 0);
    for (f, b, n, tau) in [(100.0, 2e-10, 17, 5e-3), (50.0, 5.4e-10, 9, 7e-3), (150.0, 2.6e-10, 17, 3.3e-3)] {
        let spec = ToneSpectrum::new(vec![Tone { f_hz: f, b_tesla: b }], 0.0, 28.04e9).unwrap();
        let x = 2.0 * PI * spec.kappa_hz_per_tesla * b * filter_weight(n, tau, 2.0 * PI * f);
        let m = 10_000;
        let samples: Vec<f64> = (0..m).map(|_| (x * (rng.random::<f64>() * 2.0 * PI).cos()).cos()).collect();
        let mean = samples.iter().sum::<f64>() / m as f64;
        let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        let a = predicted_contrast(n, tau, &spec);
        assert!((a - mean).abs() < 3.0 * sd / (m as f64).sqrt() + 1e-12, "{a} vs {mean}");
    }
}

#[test]
fn classical_and_quantum_peak_at_signal_frequency() {
    let f_sig = 250.0;
    let sig = SignalModel {
        amplitude_hz: 1.0,
        carrier_hz: f_sig,
        waveform: Waveform::Cosine,
        phase_rad: 0.0,
    };
    let grid: Vec<f64> = (0..21).map(|i| 150.0 + 10.0 * i as f64).collect();
    let quadrature_sig = SignalModel { phase_rad: -PI / 2.0, ..sig };
    let quantum: Vec<f64> = grid
        .iter()
        .map(|&f_m| {
            let seq = make_cpmg(39, 0.5 / f_m, PhasePolicy::FixedAxis).unwrap();
            let i = quadratures(&sig, &seq).unwrap().phi_lockin;
            let q = quadratures(&quadrature_sig, &seq).unwrap().phi_lockin;
            i.hypot(q)
        })
        .collect();
    let dt = 1e-5;
    let samples: Vec<f64> = (0..=40_000).map(|k| sig.value(k as f64 * dt)).collect();
    let classical: Vec<f64> = grid
        .iter()
        .map(|&f_m| classical_lockin(&samples, dt, f_m, 1.0).unwrap().magnitude())
        .collect();
    let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(grid[argmax(&quantum)], f_sig);
    assert_eq!(grid[argmax(&classical)], f_sig);
}
