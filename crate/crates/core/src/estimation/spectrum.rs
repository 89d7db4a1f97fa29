use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lockin::filter_weight;
use crate::lsq::{levenberg_marquardt, LsqOptions};
use crate::noise::{Tone, ToneSpectrum};
use crate::special::bessel_j0_sqrt;

/// One measured contrast `(τ_arm, A, σ_A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau_arm: f64,
    pub contrast: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    pub frequencies_hz: Vec<f64>,
    pub amplitudes_tesla: Vec<f64>,
    /// Upper one-σ distance from each amplitude.
    pub sigma_tesla: Vec<f64>,
    pub slow_drift_hz2: f64,
    pub sigma_slow_drift_hz2: f64,
    pub chi2: f64,
    pub evaluations: usize,
}

impl SpectrumFit {
    pub fn spectrum(&self, kappa_hz_per_tesla: f64) -> Result<ToneSpectrum> {
        let tones = self
            .frequencies_hz
            .iter()
            .zip(&self.amplitudes_tesla)
            .map(|(&f_hz, &b_tesla)| Tone { f_hz, b_tesla })
            .collect();
        ToneSpectrum::new(tones, self.slow_drift_hz2, kappa_hz_per_tesla)
    }
}

/// Precomputed per-point quantities; the fit runs on squared amplitudes
/// so that the model stays regular when an amplitude vanishes.
struct Model {
    /// `(2πκ|Wₙ(τ)|·b_scale)²` per point and tone.
    gains: Vec<Vec<f64>>,
    /// `(4π²·N·τ²·p_scale)²/2` per point.
    drift: Vec<f64>,
    b_scale: f64,
    p_scale: f64,
}

impl Model {
    fn eval(&self, i: usize, p: &[f64]) -> f64 {
        let k = self.gains[i].len();
        let tones: f64 = (0..k).map(|j| bessel_j0_sqrt(self.gains[i][j] * p[j])).product();
        tones * (-self.drift[i] * p[k]).exp()
    }
}

/// Fit tone amplitudes at fixed frequencies plus the slow-drift strength to
/// a contrast-versus-τ_arm curve.
///
/// When every measured contrast is non-negative the data are compared with
/// `|A|`, since a fringe fit cannot tell a flipped fringe from a phase jump.
pub fn fit_spectrum(
    curve: &[CurvePoint],
    n: usize,
    candidate_freqs: &[f64],
    kappa_hz_per_tesla: f64,
) -> Result<SpectrumFit> {
    if n == 0 {
        return Err(invalid("spectrum fit needs N ≥ 1"));
    }
    if candidate_freqs.is_empty() || candidate_freqs.iter().any(|f| !(*f > 0.0)) {
        return Err(invalid("candidate frequencies must be positive"));
    }
    if !(kappa_hz_per_tesla > 0.0) {
        return Err(invalid("kappa must be positive"));
    }
    let k = candidate_freqs.len();
    if curve.len() < k + 2 {
        return Err(invalid(format!("curve has {} points for {} parameters", curve.len(), k + 1)));
    }
    for c in curve {
        if !(c.sigma > 0.0) || !(c.tau_arm >= 0.0) || !c.contrast.is_finite() {
            return Err(invalid(format!("bad curve point at tau_arm={}", c.tau_arm)));
        }
    }
    let magnitude_only = curve.iter().all(|c| c.contrast >= 0.0);

    // amplitude at which the strongest response reaches the first J₀ zero
    let max_w: Vec<f64> = candidate_freqs
        .iter()
        .map(|&f| {
            curve
                .iter()
                .map(|c| filter_weight(n, c.tau_arm, 2.0 * PI * f).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    if let Some(j) = max_w.iter().position(|w| *w == 0.0) {
        return Err(invalid(format!("curve has no response at {} Hz", candidate_freqs[j])));
    }
    let b_first_zero: Vec<f64> = max_w.iter().map(|w| 2.405 / (2.0 * PI * kappa_hz_per_tesla * w)).collect();
    let b_scale = b_first_zero.iter().copied().fold(0.0, f64::max);
    let tau_max = curve.iter().map(|c| c.tau_arm).fold(0.0, f64::max);
    let p_scale = if tau_max > 0.0 { 1.0 / (4.0 * PI * PI * n as f64 * tau_max * tau_max) } else { 1.0 };

    let model = Model {
        gains: curve
            .iter()
            .map(|c| {
                candidate_freqs
                    .iter()
                    .map(|&f| (2.0 * PI * kappa_hz_per_tesla * filter_weight(n, c.tau_arm, 2.0 * PI * f) * b_scale).powi(2))
                    .collect()
            })
            .collect(),
        drift: curve
            .iter()
            .map(|c| 0.5 * (4.0 * PI * PI * n as f64 * c.tau_arm * c.tau_arm * p_scale).powi(2))
            .collect(),
        b_scale,
        p_scale,
    };
    let residuals = |p: &[f64]| -> Vec<f64> {
        curve
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let m = model.eval(i, p);
                let m = if magnitude_only { m.abs() } else { m };
                (m - c.contrast) / c.sigma
            })
            .collect()
    };

    // Profile each amplitude on a wide grid, holding the others, to land in
    // the right J₀ branch; then polish jointly.
    let grid: Vec<f64> = (0..=300).map(|i| 0.05 * i as f64).collect();
    let mut p = vec![0.0; k + 1];
    let mut factors = vec![vec![1.0; k]; curve.len()];
    let mut tried = 0;
    for _sweep in 0..4 {
        let before = p.clone();
        for j in 0..k {
            let rest: Vec<f64> = factors
                .iter()
                .map(|f| f.iter().enumerate().filter(|(m, _)| *m != j).map(|(_, v)| v).product())
                .collect();
            let mut best_chi2 = f64::INFINITY;
            let mut best_u = p[j];
            for g in &grid {
                let u = (g * b_first_zero[j] / b_scale).powi(2);
                let c: f64 = curve
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let m = rest[i] * bessel_j0_sqrt(model.gains[i][j] * u);
                        let m = if magnitude_only { m.abs() } else { m };
                        ((m - c.contrast) / c.sigma).powi(2)
                    })
                    .sum();
                tried += 1;
                if c < best_chi2 {
                    best_chi2 = c;
                    best_u = u;
                }
            }
            p[j] = best_u;
            for (i, f) in factors.iter_mut().enumerate() {
                f[j] = bessel_j0_sqrt(model.gains[i][j] * best_u);
            }
        }
        if p == before {
            break;
        }
    }
    let opts = LsqOptions::default();
    let mut best: Option<crate::lsq::LsqSolution> = None;
    for slow in [0.0, 0.5, 2.0] {
        let mut p0 = p.clone();
        p0[k] = slow;
        if let Ok(sol) = levenberg_marquardt(&residuals, &p0, &opts) {
            tried += sol.iterations;
            if sol.converged && best.as_ref().is_none_or(|b| sol.chi2 < b.chi2) {
                best = Some(sol);
            }
        }
    }
    let sol = best.ok_or_else(|| Error::FitFailure(format!("no start converged after {tried} profile evaluations")))?;

    let upper = |u: f64, var: f64| {
        let base = u.max(0.0);
        (base + var.max(0.0).sqrt()).sqrt() - base.sqrt()
    };
    let amplitudes = (0..k).map(|j| sol.params[j].max(0.0).sqrt() * model.b_scale).collect();
    let sigmas = (0..k).map(|j| upper(sol.params[j], sol.cov[(j, j)]) * model.b_scale).collect();
    Ok(SpectrumFit {
        frequencies_hz: candidate_freqs.to_vec(),
        amplitudes_tesla: amplitudes,
        sigma_tesla: sigmas,
        slow_drift_hz2: sol.params[k].max(0.0).sqrt() * model.p_scale,
        sigma_slow_drift_hz2: upper(sol.params[k], sol.cov[(k, k)]) * model.p_scale,
        chi2: sol.chi2,
        evaluations: tried,
    })
}
