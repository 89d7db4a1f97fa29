use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniformly spaced frequency-shift samples, Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanSeries {
    pub values: Vec<f64>,
    /// Sample spacing, seconds.
    pub interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanResult {
    /// `(τ, σ_y(τ))`, σ in Hz.
    pub points: Vec<(f64, f64)>,
    /// Requested τ that are not a multiple of the interval or too long.
    pub skipped: Vec<f64>,
}

/// Overlapping Allan deviation from the integrated phase `x`.
pub fn allan_deviation(series: &AllanSeries, taus: &[f64]) -> Result<AllanResult> {
    let n = series.values.len();
    let tau0 = series.interval;
    if !(tau0 > 0.0) {
        return Err(invalid("sample interval must be positive"));
    }
    if n < 9 {
        return Err(invalid(format!("Allan analysis needs at least 9 samples, got {n}")));
    }
    let mut x = Vec::with_capacity(n + 1);
    x.push(0.0);
    let mut acc = 0.0;
    for &y in &series.values {
        acc += y * tau0;
        x.push(acc);
    }
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &tau in taus {
        let m_f = tau / tau0;
        let m = m_f.round();
        if !(m >= 1.0) || (m_f - m).abs() > 1e-9 * m_f.max(1.0) || (m as usize) * 3 > n {
            skipped.push(tau);
            continue;
        }
        let m = m as usize;
        let terms = x.len() - 2 * m;
        let sum: f64 = (0..terms)
            .map(|i| {
                let d = x[i + 2 * m] - 2.0 * x[i + m] + x[i];
                d * d
            })
            .sum();
        let t = m as f64 * tau0;
        points.push((t, (sum / (2.0 * terms as f64 * t * t)).sqrt()));
    }
    Ok(AllanResult { points, skipped })
}

/// Subtract the least-squares line through `(k, y_k)`.
pub fn detrend_linear(series: &AllanSeries) -> Result<AllanSeries> {
    let n = series.values.len();
    if n < 3 {
        return Err(invalid("detrending needs at least 3 samples"));
    }
    let nf = n as f64;
    let k_mean = 0.5 * (nf - 1.0);
    let y_mean = series.values.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, &y) in series.values.iter().enumerate() {
        let dk = k as f64 - k_mean;
        sxy += dk * (y - y_mean);
        sxx += dk * dk;
    }
    let slope = sxy / sxx;
    Ok(AllanSeries {
        values: series
            .values
            .iter()
            .enumerate()
            .map(|(k, &y)| y - y_mean - slope * (k as f64 - k_mean))
            .collect(),
        interval: series.interval,
    })
}
