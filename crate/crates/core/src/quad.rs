//! Fixed-order Gauss–Legendre quadrature on uniform panels.

const NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// `∫ₐᵇ f` using panels no longer than `max_panel`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, max_panel: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let len = b - a;
    let panels = if max_panel.is_finite() && max_panel > 0.0 {
        (len / max_panel).ceil().max(1.0) as usize
    } else {
        1
    };
    let h = len / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut acc = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
            acc += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * acc;
    }
    total
}

/// Integrate across `edges`, which must be sorted and include the endpoints.
pub fn integrate_piecewise<F: FnMut(f64) -> f64>(mut f: F, edges: &[f64], max_panel: f64) -> f64 {
    edges
        .windows(2)
        .map(|w| integrate(&mut f, w[0], w[1], max_panel))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_nine() {
        let v = integrate(|x| x.powi(9) - 3.0 * x.powi(4), -1.0, 2.0, f64::INFINITY);
        let exact = (2f64.powi(10) - 1.0) / 10.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn oscillatory_integral() {
        let w = 2.0 * std::f64::consts::PI * 150.0;
        let v = integrate(|t| (w * t).cos(), 0.0, 0.0137, 1.0 / 1500.0);
        assert!((v - (w * 0.0137).sin() / w).abs() < 1e-14);
    }
}
