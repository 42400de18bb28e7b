//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

pub const QUAD_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 50;

/// `int_a^b f` to absolute tolerance `tol` by adaptive Simpson with
/// Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = step(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure(a, b))
    }
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return f64::NAN;
    }
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a).abs() < 1e-15 * a.abs().max(1.0) {
        return left + right + delta / 15.0;
    }
    step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_gaussian() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(|x: f64| (-0.5 * x * x).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
        let v = adaptive_simpson(|x: f64| 1.0 / (1.0 + x * x).sqrt(), 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 3f64.asinh()).abs() < 1e-10);
    }

    #[test]
    fn reversed_and_failure() {
        let v = adaptive_simpson(|x| x, 1.0, 0.0, 1e-12).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
        assert!(adaptive_simpson(|x: f64| 1.0 / x, -1.0, 1.0, 1e-10).is_err());
    }
}
