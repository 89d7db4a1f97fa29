use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qlockin_core::dynamics::{evolve_segment, propagate, readout, ExperimentOptions, HamiltonianSegment, PulseModel, SpinState};
use qlockin_core::noise::{NoiseRealization, ShiftSource, SignalModel, Waveform};
use qlockin_core::sequence::{make_cpmg, PhasePolicy, PulseSequence};

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Fringe `(A, φ)` from four readout phases of one propagated state.
fn fringe<S: ShiftSource>(seq: &PulseSequence, shift: &S, opts: &ExperimentOptions) -> (f64, f64) {
    let state = propagate(seq, shift, opts).unwrap();
    let p: Vec<f64> = (0..4).map(|i| readout(&state, seq, i as f64 * PI / 2.0, opts.area_error)).collect();
    let a = 0.5 * (p[0] - p[2]);
    let b = 0.5 * (p[1] - p[3]);
    (2.0 * a.hypot(b), (-b).atan2(a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_preserved(segs in proptest::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -1e4f64..1e4, 1e-6f64..1e-2), 1..200)) {
        let mut s = SpinState::plus_x();
        for (mz, wx, wy, dt) in segs {
            s = evolve_segment(&s, &HamiltonianSegment { m_z: mz, w_x: wx, w_y: wy, dt }).unwrap();
        }
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ideal_pulses_reproduce_toggling_phase(
        n in 0usize..30,
        tau in 2e-4f64..5e-3,
        tones in proptest::collection::vec((5.0f64..600.0, 1e-11f64..2e-10, 0.0f64..6.283), 1..4),
    ) {
        let seq = make_cpmg(n, tau, PhasePolicy::FixedAxis).unwrap();
        let kappa = 28.04e9;
        let r = NoiseRealization { tones: tones.clone(), drift_tesla_per_s: 0.0, kappa_hz_per_tesla: kappa };
        let (a, phi) = fringe(&seq, &r, &ExperimentOptions::default());
        let g = seq.toggling_waveform();
        let exact: f64 = tones
            .iter()
            .map(|&(f, b, alpha)| 2.0 * PI * kappa * b * (Complex64::from_polar(1.0, alpha) * g.fourier(2.0 * PI * f)).re)
            .sum();
        prop_assert!((a - 1.0).abs() < 1e-9);
        prop_assert!(wrap(phi - exact).abs() < 1e-8, "{} vs {}", phi, exact);
    }
}

#[test]
fn finite_pulses_converge_to_ideal() {
    let rabi = 2.0 * PI * 65.8e3;
    for f_m in [50.0, 125.0, 250.0, 500.0] {
        for n in [1, 17, 99] {
            let tau = 0.5 / f_m;
            let sig = SignalModel {
                amplitude_hz: 0.02 * f_m / (n as f64 + 1.0).sqrt(),
                carrier_hz: f_m,
                waveform: Waveform::Cosine,
                phase_rad: 0.3,
            };
            let ideal_seq = make_cpmg(n, tau, PhasePolicy::FixedAxis).unwrap();
            let finite_seq = ideal_seq.clone().with_rabi(rabi).unwrap();
            let (_, ideal) = fringe(&ideal_seq, &sig, &ExperimentOptions::default());
            let finite_opts = ExperimentOptions {
                pulse_model: PulseModel::Finite { rabi },
                ..Default::default()
            };
            let (_, finite) = fringe(&finite_seq, &sig, &finite_opts);
            assert!(wrap(finite - ideal).abs() < 0.01 * ideal.abs(), "f_m={f_m} n={n}: {finite} vs {ideal}");
        }
    }
}

#[test]
fn xy_alternation_protects_contrast() {
    // matched square signal near a half-turn of phase
    let sig = SignalModel {
        amplitude_hz: 9.9,
        carrier_hz: 500.0,
        waveform: Waveform::SquareUnipolar,
        phase_rad: 0.0,
    };
    let opts = ExperimentOptions {
        area_error: 0.01,
        ..Default::default()
    };
    let (fixed, _) = fringe(&make_cpmg(100, 1e-3, PhasePolicy::FixedAxis).unwrap(), &sig, &opts);
    let (xy, _) = fringe(&make_cpmg(100, 1e-3, PhasePolicy::XyAlternating).unwrap(), &sig, &opts);
    assert!(xy > fixed, "xy {xy} fixed {fixed}");
}
