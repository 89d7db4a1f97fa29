use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Shot-noise limited frequency sensitivity, Hz/√Hz:
/// `s = (1/2π)·√(2(4 − A²)/(A²T))`.
pub fn sensitivity(contrast: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("sequence duration must be positive, got {t}")));
    }
    if contrast == 0.0 {
        return Err(Error::InfiniteSensitivity);
    }
    if !(contrast > 0.0 && contrast <= 1.0) {
        return Err(Error::OutOfRange {
            what: "contrast",
            value: contrast,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let a2 = contrast * contrast;
    Ok((2.0 * (4.0 - a2) / (a2 * t)).sqrt() / (2.0 * PI))
}

/// Sensitivity at full contrast.
pub fn sql(t: f64) -> Result<f64> {
    sensitivity(1.0, t)
}

pub fn freq_to_field(df_hz: f64, kappa_hz_per_tesla: f64) -> Result<f64> {
    if !(kappa_hz_per_tesla > 0.0) {
        return Err(invalid("kappa must be positive"));
    }
    Ok(df_hz / kappa_hz_per_tesla)
}

pub fn field_to_freq(b_tesla: f64, kappa_hz_per_tesla: f64) -> Result<f64> {
    if !(kappa_hz_per_tesla > 0.0) {
        return Err(invalid("kappa must be positive"));
    }
    Ok(b_tesla * kappa_hz_per_tesla)
}

/// `δf = φ/(2πT)`, the time-averaged frequency shift behind a phase.
pub fn phase_to_freq(phi: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("sequence duration must be positive, got {t}")));
    }
    Ok(phi / (2.0 * PI * t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub t: f64,
    pub contrast: f64,
    /// Hz/√Hz.
    pub s: f64,
    /// T/√Hz.
    pub s_field: f64,
}

impl SensitivityPoint {
    pub fn new(contrast: f64, t: f64, kappa_hz_per_tesla: f64) -> Result<Self> {
        let s = sensitivity(contrast, t)?;
        Ok(SensitivityPoint {
            t,
            contrast,
            s,
            s_field: freq_to_field(s, kappa_hz_per_tesla)?,
        })
    }
}
