use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lsq::{levenberg_marquardt, LsqOptions};

/// Error model for contrast-versus-duration data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceNoise {
    /// Equal absolute scatter on every point.
    #[default]
    Additive,
    /// Scatter proportional to the contrast itself.
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceFit {
    pub a0: f64,
    pub tau: f64,
    pub sigma_a0: f64,
    pub sigma_tau: f64,
    /// Sum of squared residuals in the chosen error model.
    pub chi2: f64,
}

/// Fit `A(T) = A₀·exp(−T/τ)` with additive errors.
pub fn fit_coherence(points: &[(f64, f64)]) -> Result<CoherenceFit> {
    fit_coherence_with(points, CoherenceNoise::Additive)
}

/// Errors are estimated from the scatter (reduced χ²).
pub fn fit_coherence_with(points: &[(f64, f64)], noise: CoherenceNoise) -> Result<CoherenceFit> {
    if points.len() < 4 {
        return Err(invalid(format!("coherence fit needs at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|(t, a)| !t.is_finite() || !a.is_finite()) {
        return Err(invalid("coherence data must be finite"));
    }
    let positive: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    if positive.len() < 2 {
        return Err(Error::FitFailure("fewer than two positive contrasts".into()));
    }
    // log-linear start
    let n = positive.len() as f64;
    let tm = positive.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = positive.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = positive.iter().map(|p| (p.0 - tm) * (p.1.ln() - lm)).sum();
    let sxx: f64 = positive.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(Error::FitFailure(format!("data do not decay (log slope {slope:e})")));
    }
    let tau0 = -1.0 / slope;
    let a00 = (lm - slope * tm).exp();

    // fit the decay rate so the parameters are of similar size
    let t_scale = tau0;
    let residuals = |p: &[f64]| -> Vec<f64> {
        points
            .iter()
            .map(|&(t, a)| {
                let m = p[0] * (-t * p[1] / t_scale).exp();
                match noise {
                    CoherenceNoise::Additive => a - m,
                    CoherenceNoise::Multiplicative => (a - m) / m,
                }
            })
            .collect()
    };
    let sol = levenberg_marquardt(residuals, &[a00, 1.0], &LsqOptions::default())?;
    if !sol.converged {
        return Err(Error::FitFailure(format!("no convergence after {} iterations", sol.iterations)));
    }
    let (a0, rate) = (sol.params[0], sol.params[1]);
    if !(rate > 0.0) || !(a0 > 0.0) {
        return Err(Error::FitFailure(format!("no decay found (A0 = {a0}, rate = {rate})")));
    }
    let dof = (points.len() - 2) as f64;
    let s2 = sol.chi2 / dof;
    let tau = t_scale / rate;
    let sigma_rate = (sol.cov[(1, 1)] * s2).sqrt();
    Ok(CoherenceFit {
        a0,
        tau,
        sigma_a0: (sol.cov[(0, 0)] * s2).sqrt(),
        sigma_tau: tau * sigma_rate / rate,
        chi2: sol.chi2,
    })
}
