//! Dense matrix exponential for small complex matrices.

use nalgebra::SMatrix;
use num_complex::Complex64;

/// `exp(A)` by scaling and squaring with a truncated Taylor series.
///
/// Intended for the 2×2 and 3×3 propagators used here, where `A = -iHt`
/// is anti-Hermitian and well conditioned.
pub fn expm<const D: usize>(a: &SMatrix<Complex64, D, D>) -> SMatrix<Complex64, D, D> {
    let norm = a.iter().map(|z| z.norm()).fold(0.0_f64, f64::max) * D as f64;
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a * Complex64::new(scale, 0.0);
    let mut result = SMatrix::<Complex64, D, D>::identity();
    let mut term = SMatrix::<Complex64, D, D>::identity();
    for k in 1..=18 {
        term = term * scaled * Complex64::new(1.0 / k as f64, 0.0);
        result += term;
    }
    for _ in 0..squarings {
        result = result * result;
    }
    result
}
