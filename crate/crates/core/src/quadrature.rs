//! Adaptive Simpson quadrature.

use crate::math::abs;

const MAX_DEPTH: u32 = 50;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`
/// (measured against the running magnitude of the integral).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = abs(whole).max(f64::MIN_POSITIVE);
    recurse(f, a, b, fa, fm, fb, whole, rel_tol * scale, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || abs(delta) <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{exp, ln};

    #[test]
    fn integrates_polynomials_exactly() {
        let v = adaptive_simpson(&|x: f64| x * x * x - x, 0.0, 2.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integrates_reciprocal_to_tolerance() {
        let v = adaptive_simpson(&|x: f64| 1.0 / x, 0.1, 0.2, 1e-10);
        assert!((v - ln(2.0)).abs() < 1e-10 * ln(2.0));
        let w = adaptive_simpson(&|x: f64| exp(-x), 0.0, 1.0, 1e-10);
        assert!((w - (1.0 - exp(-1.0))).abs() < 1e-10);
    }
}
