//! Levenberg–Marquardt for small nonlinear least-squares problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LsqOptions {
    pub max_iter: usize,
    /// Relative step used for the forward-difference Jacobian.
    pub diff_step: f64,
    pub tol: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions {
            max_iter: 200,
            diff_step: 1e-7,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹` at the solution, unscaled.
    pub cov: DMatrix<f64>,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn jacobian<F>(f: &F, p: &[f64], r0: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = r0.len();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    for j in 0..n {
        let h = step * p[j].abs().max(1e-3);
        q[j] = p[j] + h;
        let rp = f(&q);
        q[j] = p[j] - h;
        let rm = f(&q);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimize `Σ rᵢ(p)²` starting from `p0`.
///
/// `residuals` must already be scaled by the per-point standard errors when
/// those are known, so that `cov` is the parameter covariance.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], opts: &LsqOptions) -> Result<LsqSolution>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = DVector::from_vec(residuals(&p));
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("non-finite residuals at start point".into()));
    }
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let jac = jacobian(&residuals, &p, &r, opts.diff_step);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = DVector::from_vec(residuals(&trial));
            let chi2_t = rt.norm_squared();
            if chi2_t.is_finite() && chi2_t <= chi2 {
                let rel = (chi2 - chi2_t) / chi2.max(1e-300);
                let small_step = step.norm() <= opts.tol.sqrt() * (1.0 + DVector::from_vec(p.clone()).norm());
                p = trial;
                r = rt;
                chi2 = chi2_t;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < opts.tol || small_step || chi2 < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left: at a minimum to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let jac = jacobian(&residuals, &p, &r, opts.diff_step);
    let jtj = jac.transpose() * &jac;
    let cov = jtj
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::FitFailure("singular normal matrix at solution".into()))?;
    Ok(LsqSolution {
        params: p,
        cov,
        chi2,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * (-x / 0.7).exp()).collect();
        let sol = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * (-x / p[1]).exp() - y).collect(),
            &[1.0, 2.0],
            &LsqOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert!((sol.params[0] - 2.0).abs() < 1e-8);
        assert!((sol.params[1] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn linear_covariance_matches_normal_equations() {
        // y = a + b x with unit errors: cov = (XᵀX)⁻¹
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 2.9, 5.1, 7.0];
        let sol = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] + p[1] * x - y).collect(),
            &[0.0, 0.0],
            &LsqOptions::default(),
        )
        .unwrap();
        // XᵀX = [[4,6],[6,14]], det = 20
        assert!((sol.cov[(0, 0)] - 14.0 / 20.0).abs() < 1e-6);
        assert!((sol.cov[(1, 1)] - 4.0 / 20.0).abs() < 1e-6);
    }
}
