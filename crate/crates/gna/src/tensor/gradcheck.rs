//! Finite-difference gradient checking utilities.

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error tolerance used by the gradient acceptance suite.
pub const FD_REL_TOL: f64 = 1e-4;

/// Central finite differences of a scalar function at `x`.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let saved = probe[i];
        probe[i] = saved + h;
        let up = f(&probe);
        probe[i] = saved - h;
        let down = f(&probe);
        probe[i] = saved;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Largest floor-protected relative error between an analytic and a numeric
/// gradient. Coordinates where both entries are below `1e-7` carry no
/// information at finite-difference precision and are skipped; elsewhere the
/// denominator is floored at `1e-6` so near-zero gradients compare absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        if a.abs() < 1e-7 && n.abs() < 1e-7 {
            continue;
        }
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
