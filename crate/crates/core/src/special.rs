//! Bessel function of the first kind, order zero.

use std::f64::consts::PI;

/// J₀(x) from its integral representation
/// `J₀(x) = (1/π) ∫₀^π cos(x sin θ) dθ`.
///
/// The integrand is periodic and entire, so the trapezoid rule converges
/// geometrically once the node count exceeds |x|; the error is bounded by
/// 2|J_{2n}(x)| for `n` nodes on the half period.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-8 {
        return 1.0 - 0.25 * ax * ax;
    }
    let n = (ax.ceil() as usize) + 24;
    // trapezoid over [0, π] with n panels; endpoints both give cos(0) = 1
    let h = PI / n as f64;
    let mut acc = 1.0;
    for k in 1..n {
        acc += (ax * (k as f64 * h).sin()).cos();
    }
    acc / n as f64
}

/// `J₀(√q)`, continued analytically to `I₀(√−q)` for `q < 0`.
///
/// Smooth in `q` through zero, which makes it a convenient parameterization
/// for fits where the amplitude may vanish.
pub fn bessel_j0_sqrt(q: f64) -> f64 {
    if q >= 0.0 {
        return bessel_j0(q.sqrt());
    }
    let ax = (-q).sqrt();
    let n = (ax.ceil() as usize) + 24;
    let h = PI / n as f64;
    let mut acc = 1.0;
    for k in 1..n {
        acc += (ax * (k as f64 * h).sin()).cosh();
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    // Power series Σ (-1)^k (x/2)^{2k} / (k!)², accurate for moderate x.
    fn j0_series(x: f64) -> f64 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            term *= -q / ((k * k) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn matches_reference_values() {
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-14);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-14);
        assert!(bessel_j0(5.520_078_110_286_311).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_power_series() {
        for i in 0..=120 {
            let x = i as f64 * 0.1;
            assert!((bessel_j0(x) - j0_series(x)).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn even_and_bounded() {
        for i in 0..500 {
            let x = i as f64 * 0.37;
            let v = bessel_j0(x);
            assert_eq!(v, bessel_j0(-x));
            assert!(v.abs() <= 1.0 + 1e-15);
        }
        // large-argument envelope √(2/(πx))
        let x = 200.3;
        assert!(bessel_j0(x).abs() <= (2.0 / (PI * x)).sqrt() * 1.01);
    }

    #[test]
    fn sqrt_continuation() {
        assert!((bessel_j0_sqrt(4.0) - bessel_j0(2.0)).abs() < 1e-15);
        // I₀(1) = 1.2660658777520082
        assert!((bessel_j0_sqrt(-1.0) - 1.266_065_877_752_008_2).abs() < 1e-13);
        let h = 1e-6;
        let slope = (bessel_j0_sqrt(h) - bessel_j0_sqrt(-h)) / (2.0 * h);
        assert!((slope + 0.25).abs() < 1e-8);
    }
}
