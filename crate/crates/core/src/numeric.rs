//! Finite-difference gradient checking.

/// Denominator floor for relative errors, so coordinates whose true
/// derivative is ~0 are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic` against five-point central differences of `f` at
/// `x`, coordinate by coordinate, and returns the largest relative error.
pub fn gradient_check(f: impl Fn(&[f64]) -> f64, analytic: &[f64], x: &[f64], h: f64) -> f64 {
    assert_eq!(analytic.len(), x.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut at = |offset: f64| {
            probe[i] = x[i] + offset;
            f(&probe)
        };
        let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        probe[i] = x[i];
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_matches() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1] - x[1].powi(3);
        let x = [0.7, -1.3];
        let g = [2.0 * x[0] + 3.0 * x[1], 3.0 * x[0] - 3.0 * x[1] * x[1]];
        assert!(gradient_check(f, &g, &x, 1e-5) < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let f = |x: &[f64]| x[0].sin();
        assert!(gradient_check(f, &[1.0], &[0.3], 1e-5) > 1e-2);
    }

    #[test]
    fn floor_applies_near_zero() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(0.0, 1e-9) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
