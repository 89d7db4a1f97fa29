//! Fits and metrology analysis on simulated or measured lock-in data.

mod allan;
mod coherence;
mod fringe;
mod sensitivity;
mod spectrum;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use allan::{allan_deviation, detrend_linear, AllanResult, AllanSeries};
pub use coherence::{fit_coherence, fit_coherence_with, CoherenceFit, CoherenceNoise};
pub use fringe::{fit_fringe, FringeFit};
pub use sensitivity::{field_to_freq, freq_to_field, phase_to_freq, sensitivity, sql, SensitivityPoint};
pub use spectrum::{fit_spectrum, CurvePoint, SpectrumFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub phi_rf: f64,
    pub shots: u64,
    pub successes: u64,
}

impl ScanPoint {
    pub fn fraction(&self) -> f64 {
        self.successes as f64 / self.shots as f64
    }
}

/// Readout counts versus the phase of the closing π/2 pulse.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseScan {
    pub points: Vec<ScanPoint>,
}

impl PhaseScan {
    /// Noise-free scan with `successes` rounded from the exact fringe.
    pub fn from_fringe(contrast: f64, phi: f64, phi_rf: &[f64], shots: u64) -> Self {
        PhaseScan {
            points: phi_rf
                .iter()
                .map(|&r| {
                    let p = 0.5 + 0.5 * contrast * (phi + r).cos();
                    ScanPoint {
                        phi_rf: r,
                        shots,
                        successes: (p * shots as f64).round() as u64,
                    }
                })
                .collect(),
        }
    }

    /// At least five distinct phases covering three quarters of a turn, and
    /// consistent counts.
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if p.shots == 0 || p.successes > p.shots || !p.phi_rf.is_finite() {
                return Err(invalid(format!(
                    "scan point at phi_rf={} has {} of {} shots",
                    p.phi_rf, p.successes, p.shots
                )));
            }
        }
        let mut phases: Vec<f64> = self.points.iter().map(|p| p.phi_rf.rem_euclid(2.0 * PI)).collect();
        phases.sort_by(f64::total_cmp);
        phases.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if phases.len() < 5 {
            return Err(invalid(format!("phase scan needs 5 distinct phases, got {}", phases.len())));
        }
        // widest empty arc on the circle must leave at least 3π/2 covered
        let mut gap = phases[0] + 2.0 * PI - phases[phases.len() - 1];
        for w in phases.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        if 2.0 * PI - gap < 1.5 * PI - 1e-9 {
            return Err(invalid("phase scan must span at least 3/4 of a turn"));
        }
        Ok(())
    }
}
