//! Exact propagation of the two-level probe through a lock-in experiment.
//!
//! Each constant-Hamiltonian piece is applied as a closed-form SU(2)
//! rotation. During finite pulses `m_z` is held at its step midpoint value. Conventions: `|↑⟩` is the +z Bloch pole, the opening π/2 pulse
//! rotates about +x, and the readout axis is chosen so the fringe is
//! `P↑ = ½ + (A/2)·cos(φ_lock-in + φ_rf)`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{invalid, Error, Result};
use crate::estimation::{PhaseScan, ScanPoint};
use crate::noise::{sample_realization_with, NoiseRealization, ShiftSource, SignalModel, ToneSpectrum};
use crate::quad;
use crate::rng;
use crate::sequence::PulseSequence;

/// Normalized amplitudes `(c↑, c↓)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub up: Complex64,
    pub down: Complex64,
}

impl SpinState {
    pub fn up() -> Self {
        SpinState {
            up: Complex64::new(1.0, 0.0),
            down: Complex64::new(0.0, 0.0),
        }
    }

    pub fn down() -> Self {
        SpinState {
            up: Complex64::new(0.0, 0.0),
            down: Complex64::new(1.0, 0.0),
        }
    }

    /// `(|↑⟩ + |↓⟩)/√2`.
    pub fn plus_x() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        SpinState { up: a, down: a }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    pub fn p_up(&self) -> f64 {
        self.up.norm_sqr()
    }

    /// Bloch vector `(x, y, z)`.
    pub fn bloch(&self) -> [f64; 3] {
        let c = self.up.conj() * self.down;
        [2.0 * c.re, 2.0 * c.im, self.up.norm_sqr() - self.down.norm_sqr()]
    }

    /// Relative phase `arg(c↓/c↑)`, the azimuth of the Bloch vector.
    pub fn relative_phase(&self) -> f64 {
        (self.up.conj() * self.down).arg()
    }

    fn rotate(&self, nx: f64, ny: f64, nz: f64, angle: f64) -> SpinState {
        let (s, c) = (0.5 * angle).sin_cos();
        let u00 = Complex64::new(c, -s * nz);
        let u01 = Complex64::new(-s * ny, -s * nx);
        let u10 = Complex64::new(s * ny, -s * nx);
        let u11 = Complex64::new(c, s * nz);
        SpinState {
            up: u00 * self.up + u01 * self.down,
            down: u10 * self.up + u11 * self.down,
        }
    }

    /// Rotation by `angle` about the equatorial axis at `axis_phase`.
    pub fn rotate_equatorial(&self, axis_phase: f64, angle: f64) -> SpinState {
        let (sy, sx) = axis_phase.sin_cos();
        self.rotate(sx, sy, 0.0, angle)
    }

    /// Rotation by `angle` about +z.
    pub fn rotate_z(&self, angle: f64) -> SpinState {
        let h = Complex64::from_polar(1.0, -0.5 * angle);
        SpinState {
            up: self.up * h,
            down: self.down * h.conj(),
        }
    }
}

/// Constant Hamiltonian `H = ½(m_z σ_z + w_x σ_x + w_y σ_y)` held for `dt`.
/// Coefficients are angular frequencies, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianSegment {
    pub m_z: f64,
    pub w_x: f64,
    pub w_y: f64,
    pub dt: f64,
}

impl HamiltonianSegment {
    pub fn new(m_z: f64, w_y: f64, dt: f64) -> Self {
        HamiltonianSegment { m_z, w_x: 0.0, w_y, dt }
    }

    /// Drive of angular Rabi rate `rabi` along the equatorial axis `axis_phase`.
    pub fn driven(m_z: f64, rabi: f64, axis_phase: f64, dt: f64) -> Self {
        let (s, c) = axis_phase.sin_cos();
        HamiltonianSegment {
            m_z,
            w_x: rabi * c,
            w_y: rabi * s,
            dt,
        }
    }

    fn apply(&self, state: &SpinState) -> SpinState {
        let w = (self.m_z * self.m_z + self.w_x * self.w_x + self.w_y * self.w_y).sqrt();
        if w == 0.0 || self.dt == 0.0 {
            return *state;
        }
        state.rotate(self.w_x / w, self.w_y / w, self.m_z / w, w * self.dt)
    }
}

/// Apply `exp(-i·dt·H)` in closed form.
pub fn evolve_segment(state: &SpinState, seg: &HamiltonianSegment) -> Result<SpinState> {
    let dev = (state.norm_sqr() - 1.0).abs();
    if dev > 1e-6 {
        return Err(Error::InvalidState(dev));
    }
    if !(seg.dt > 0.0) || ![seg.m_z, seg.w_x, seg.w_y, seg.dt].iter().all(|v| v.is_finite()) {
        return Err(invalid("segment needs dt > 0 and finite coefficients"));
    }
    Ok(seg.apply(state))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseModel {
    Ideal,
    /// Square pulses at angular Rabi rate Ω_R, concurrent with `m_z`.
    Finite { rabi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub pulse_model: PulseModel,
    /// Largest propagation step; `None` picks `min(1/(100 f_max), τ/50)`.
    pub dt_max: Option<f64>,
    /// Relative systematic error on every pulse area.
    pub area_error: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            pulse_model: PulseModel::Ideal,
            dt_max: None,
            area_error: 0.0,
        }
    }
}

fn mean_arm(seq: &PulseSequence) -> f64 {
    seq.tau_arm()
        .unwrap_or(seq.total_duration() / (seq.n_pi() + 1) as f64)
}

/// Step size actually used, after checking the requested one.
pub fn resolve_dt_max<S: ShiftSource + ?Sized>(seq: &PulseSequence, shift: &S, requested: Option<f64>) -> Result<f64> {
    let f_max = shift.max_smooth_frequency();
    let limit = if f_max > 0.0 { 0.01 / f_max } else { f64::INFINITY };
    match requested {
        Some(dt) => {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(invalid(format!("dt_max must be positive, got {dt}")));
            }
            if dt > limit * (1.0 + 1e-9) {
                return Err(Error::StepSize { dt_max: dt, limit });
            }
            Ok(dt)
        }
        None => Ok(limit.min(mean_arm(seq) / 50.0)),
    }
}

/// `∫ 2π·M(t) dt` over `[a, b]`.
///
/// Between pulses every piece is a z rotation, so the pieces commute and the
/// whole interval collapses into a single rotation by the integrated phase.
fn accumulated_phase<S: ShiftSource + ?Sized>(shift: &S, a: f64, b: f64, dt_max: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut edges = vec![a];
    edges.extend(shift.discontinuities(a, b));
    edges.push(b);
    2.0 * PI * quad::integrate_piecewise(|t| shift.shift_hz(t), &edges, dt_max)
}

/// Propagate through the opening π/2 and the π train; returns the state
/// just before the readout pulse.
pub fn propagate<S: ShiftSource + ?Sized>(seq: &PulseSequence, shift: &S, opts: &ExperimentOptions) -> Result<SpinState> {
    seq.validate()?;
    let dt_max = resolve_dt_max(seq, shift, opts.dt_max)?;
    let scale = 1.0 + opts.area_error;
    let rabi = match opts.pulse_model {
        PulseModel::Ideal => None,
        PulseModel::Finite { rabi } => {
            if !(rabi > 0.0) || !rabi.is_finite() {
                return Err(invalid(format!("Rabi frequency must be positive, got {rabi}")));
            }
            Some(rabi)
        }
    };

    let mut state = SpinState::up().rotate_equatorial(0.0, FRAC_PI_2 * scale);
    let mut t = 0.0;
    let pulses = seq.pulses();
    for (i, p) in pulses.iter().enumerate() {
        match rabi {
            None => {
                state = state.rotate_z(accumulated_phase(shift, t, p.time, dt_max));
                state = state.rotate_equatorial(p.axis_phase, p.rotation_angle * scale);
                t = p.time;
            }
            Some(rabi) => {
                let dur = p.rotation_angle / rabi;
                let (start, end) = (p.time - 0.5 * dur, p.time + 0.5 * dur);
                let next_start = pulses.get(i + 1).map_or(seq.total_duration(), |q| q.time - 0.5 * q.rotation_angle / rabi);
                if start < t - 1e-15 || end > next_start + 1e-15 || end > seq.total_duration() + 1e-15 {
                    return Err(invalid(format!(
                        "finite pulse at {:e} s of length {dur:e} s overlaps its neighbours",
                        p.time
                    )));
                }
                state = state.rotate_z(accumulated_phase(shift, t, start, dt_max));
                let steps = (dur / dt_max).ceil().max(1.0) as usize;
                let h = dur / steps as f64;
                for k in 0..steps {
                    let tm = start + (k as f64 + 0.5) * h;
                    let seg = HamiltonianSegment::driven(2.0 * PI * shift.shift_hz(tm), rabi * scale, p.axis_phase, h);
                    state = seg.apply(&state);
                }
                t = end;
            }
        }
    }
    state = state.rotate_z(accumulated_phase(shift, t, seq.total_duration(), dt_max));
    Ok(state)
}

/// Equatorial axis of the closing π/2 pulse for a given `φ_rf`.
///
/// The frame is fixed by the nominal (error-free, field-free) pulse train:
/// an even train leaves the phase sense unchanged, an odd one reverses it.
pub fn readout_axis(seq: &PulseSequence, phi_rf: f64) -> f64 {
    let mut s = SpinState::up().rotate_equatorial(0.0, FRAC_PI_2);
    for p in seq.pulses() {
        s = s.rotate_equatorial(p.axis_phase, p.rotation_angle);
    }
    let [x, y, _] = s.bloch();
    let beta0 = y.atan2(x);
    if seq.n_pi() % 2 == 1 {
        beta0 - FRAC_PI_2 + phi_rf
    } else {
        beta0 - FRAC_PI_2 - phi_rf
    }
}

/// `P↑` after the closing π/2 pulse.
pub fn readout(state: &SpinState, seq: &PulseSequence, phi_rf: f64, area_error: f64) -> f64 {
    state
        .rotate_equatorial(readout_axis(seq, phi_rf), FRAC_PI_2 * (1.0 + area_error))
        .p_up()
        .clamp(0.0, 1.0)
}

/// Full single experiment: returns `P↑`.
pub fn run_experiment(
    seq: &PulseSequence,
    signal: &SignalModel,
    realization: &NoiseRealization,
    phi_rf: f64,
    opts: &ExperimentOptions,
) -> Result<f64> {
    signal.validate()?;
    let state = propagate(seq, &(signal, realization), opts)?;
    Ok(readout(&state, seq, phi_rf, opts.area_error))
}

/// Binomial number of `↑` detections in `shots` repetitions.
pub fn sample_shots(p_up: f64, shots: u64, seed: u64) -> Result<u64> {
    sample_shots_with(p_up, shots, &mut rng::stream(seed, 0))
}

pub fn sample_shots_with<R: Rng + ?Sized>(p_up: f64, shots: u64, rng: &mut R) -> Result<u64> {
    if !(0.0..=1.0).contains(&p_up) {
        return Err(Error::OutOfRange {
            what: "p_up",
            value: p_up,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let b = Binomial::new(shots, p_up).map_err(|e| invalid(e.to_string()))?;
    Ok(b.sample(rng))
}

/// One simulated readout point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOutcome {
    pub p_up: f64,
    pub phi_rf: f64,
    pub shots: u64,
    pub successes: u64,
}

impl From<ExperimentOutcome> for ScanPoint {
    fn from(o: ExperimentOutcome) -> Self {
        ScanPoint {
            phi_rf: o.phi_rf,
            shots: o.shots,
            successes: o.successes,
        }
    }
}

/// Settings for a simulated phase scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings {
    pub phi_rf: Vec<f64>,
    pub shots: u64,
    /// Noise realizations averaged into each point's probability.
    pub realizations: usize,
    pub seed: u64,
}

impl ScanSettings {
    /// `points` readout phases evenly covering `[0, 2π)`.
    pub fn uniform(points: usize, shots: u64, realizations: usize, seed: u64) -> Self {
        ScanSettings {
            phi_rf: (0..points).map(|i| 2.0 * PI * i as f64 / points as f64).collect(),
            shots,
            realizations,
            seed,
        }
    }
}

/// One phase-scan point: ensemble-averaged `P↑` and its shot sample.
/// Stream `index` of the scan seed drives both, so points are independent
/// of evaluation order.
pub fn simulate_scan_point(
    seq: &PulseSequence,
    signal: &SignalModel,
    spectrum: &ToneSpectrum,
    settings: &ScanSettings,
    index: usize,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutcome> {
    let phi_rf = settings.phi_rf[index];
    let mut rng = rng::stream(settings.seed, index as u64);
    let quiet = spectrum.tones.is_empty() && spectrum.slow_drift_hz2 == 0.0;
    let reps = if quiet { 1 } else { settings.realizations.max(1) };
    let mut p = 0.0;
    for _ in 0..reps {
        let r = sample_realization_with(spectrum, &mut rng);
        p += run_experiment(seq, signal, &r, phi_rf, opts)?;
    }
    p /= reps as f64;
    let successes = sample_shots_with(p, settings.shots, &mut rng)?;
    Ok(ExperimentOutcome {
        p_up: p,
        phi_rf,
        shots: settings.shots,
        successes,
    })
}

pub fn simulate_phase_scan(
    seq: &PulseSequence,
    signal: &SignalModel,
    spectrum: &ToneSpectrum,
    settings: &ScanSettings,
    opts: &ExperimentOptions,
) -> Result<PhaseScan> {
    let points = (0..settings.phi_rf.len())
        .map(|i| simulate_scan_point(seq, signal, spectrum, settings, i, opts).map(ScanPoint::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseScan { points })
}
