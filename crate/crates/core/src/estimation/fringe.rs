use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::PhaseScan;
use crate::error::{Error, Result};

/// Fitted fringe `P↑ = ½ + (A/2)cos(φ + φ_rf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub contrast: f64,
    /// In `[0, 2π)`.
    pub phi: f64,
    pub sigma_contrast: f64,
    pub sigma_phi: f64,
    pub chi2: f64,
    /// Contrast below twice its standard error.
    pub phase_undefined: bool,
}

/// Weighted linear fit of `y − ½ = a·cos φ_rf + b·sin φ_rf`, with binomial
/// weights refreshed from the model a few times.
pub fn fit_fringe(scan: &PhaseScan) -> Result<FringeFit> {
    scan.validate()?;
    let pts = &scan.points;
    let mut ab: Vector2<f64> = Vector2::zeros();
    let mut cov: Matrix2<f64> = Matrix2::zeros();
    let mut chi2 = 0.0;
    for iter in 0..6 {
        let mut ata = Matrix2::zeros();
        let mut aty = Vector2::zeros();
        for p in pts {
            let (s, c) = p.phi_rf.sin_cos();
            let n = p.shots as f64;
            let model: f64 = if iter == 0 { 0.5 } else { 0.5 + ab[0] * c + ab[1] * s };
            // keep the variance away from zero at the fringe extremes
            let eps = 0.5 / (n + 1.0);
            let q = model.clamp(eps, 1.0 - eps);
            let w = n / (q * (1.0 - q));
            let x = Vector2::new(c, s);
            ata += w * x * x.transpose();
            aty += w * (p.fraction() - 0.5) * x;
        }
        cov = ata
            .try_inverse()
            .ok_or_else(|| Error::FitFailure("degenerate phase grid".into()))?;
        ab = cov * aty;
        chi2 = pts
            .iter()
            .map(|p| {
                let (s, c) = p.phi_rf.sin_cos();
                let n = p.shots as f64;
                let eps = 0.5 / (n + 1.0);
                let m = (0.5 + ab[0] * c + ab[1] * s).clamp(eps, 1.0 - eps);
                let r = p.fraction() - m;
                r * r * n / (m * (1.0 - m))
            })
            .sum();
    }
    let (a, b) = (ab[0], ab[1]);
    let r2 = a * a + b * b;
    let r = r2.sqrt();
    let contrast = 2.0 * r;
    let phi = (-b).atan2(a).rem_euclid(2.0 * PI);
    let (var_a, var_b, cov_ab) = (cov[(0, 0)], cov[(1, 1)], cov[(0, 1)]);
    let (sigma_contrast, sigma_phi) = if r > 0.0 {
        let va = 4.0 * (a * a * var_a + b * b * var_b + 2.0 * a * b * cov_ab) / r2;
        let vp = (b * b * var_a + a * a * var_b - 2.0 * a * b * cov_ab) / (r2 * r2);
        (va.sqrt(), vp.sqrt())
    } else {
        (2.0 * (0.5 * (var_a + var_b)).sqrt(), PI)
    };
    Ok(FringeFit {
        contrast,
        phi,
        sigma_contrast,
        sigma_phi,
        chi2,
        phase_undefined: contrast < 2.0 * sigma_contrast,
    })
}
