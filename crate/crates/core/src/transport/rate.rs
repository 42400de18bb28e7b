//! Rate functions `alpha: [0, inf) -> [0, inf]`, their monotone conjugate
//! and inf-convolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    /// `r^2 / (4 c^2)`
    Quadratic { c: f64 },
    /// `kappa ((1 + r^2)^(p/2) - 1)`
    Power { kappa: f64, p: f64 },
    /// Piecewise linear through `(knots[k], values[k])`, starting at `(0, 0)`
    /// and continued past the last knot with the last slope.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl RateFunction {
    pub fn quadratic(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return invalid(format!("quadratic rate needs c > 0, got {c}"));
        }
        Ok(RateFunction::Quadratic { c })
    }

    pub fn power(kappa: f64, p: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite() && p > 1.0 && p.is_finite()) {
            return invalid(format!("power rate needs kappa > 0 and p > 1, got ({kappa}, {p})"));
        }
        Ok(RateFunction::Power { kappa, p })
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let t = RateFunction::Tabulated { knots, values };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RateFunction::Quadratic { c } => Self::quadratic(*c).map(|_| ()),
            RateFunction::Power { kappa, p } => Self::power(*kappa, *p).map(|_| ()),
            RateFunction::Tabulated { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return invalid("tabulated rate needs at least two (knot, value) pairs");
                }
                if knots[0] != 0.0 || values[0] != 0.0 {
                    return invalid("tabulated rate must start at (0, 0)");
                }
                for k in 1..knots.len() {
                    if !(knots[k] > knots[k - 1]) || !knots[k].is_finite() {
                        return invalid("tabulated knots must be strictly increasing");
                    }
                    if !(values[k] >= values[k - 1]) || !values[k].is_finite() {
                        return invalid("tabulated values must be nondecreasing");
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self {
            RateFunction::Quadratic { c } => r * r / (4.0 * c * c),
            RateFunction::Power { kappa, p } => kappa * ((1.0 + r * r).powf(p / 2.0) - 1.0),
            RateFunction::Tabulated { knots, values } => {
                let last = knots.len() - 1;
                let k = match knots.iter().position(|&x| x >= r) {
                    Some(0) => return 0.0,
                    Some(k) => k,
                    None => last,
                };
                let slope = (values[k] - values[k - 1]) / (knots[k] - knots[k - 1]);
                values[k - 1] + slope * (r - knots[k - 1])
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            RateFunction::Quadratic { .. } | RateFunction::Power { .. } => true,
            RateFunction::Tabulated { knots, values } => {
                let slopes: Vec<f64> =
                    (1..knots.len()).map(|k| (values[k] - values[k - 1]) / (knots[k] - knots[k - 1])).collect();
                slopes.windows(2).all(|w| w[1] >= w[0] - 1e-14 * w[0].abs().max(1.0))
            }
        }
    }

    fn derivative(&self, r: f64) -> f64 {
        match self {
            RateFunction::Quadratic { c } => r / (2.0 * c * c),
            RateFunction::Power { kappa, p } => kappa * p * r * (1.0 + r * r).powf(p / 2.0 - 1.0),
            RateFunction::Tabulated { .. } => unreachable!(),
        }
    }

    /// Monotone conjugate `sup_{r >= 0} (lambda r - alpha(r))`; `+inf` when
    /// the supremum is not finite.
    pub fn conjugate(&self, lambda: f64) -> f64 {
        alpha_conjugate(self, lambda)
    }
}

/// Monotone conjugate `sup_{r >= 0} (lambda r - alpha(r))` for `lambda >= 0`.
/// Returns `f64::INFINITY` when the supremum diverges.
pub fn alpha_conjugate(alpha: &RateFunction, lambda: f64) -> f64 {
    let lambda = lambda.max(0.0);
    if lambda == 0.0 {
        return 0.0;
    }
    match alpha {
        RateFunction::Quadratic { c } => c * c * lambda * lambda,
        RateFunction::Power { .. } => {
            // lambda r - alpha(r) is concave; its stationary point solves
            // alpha'(r) = lambda, with alpha' increasing from 0 to infinity.
            let mut hi = 1.0;
            while alpha.derivative(hi) < lambda {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if alpha.derivative(mid) < lambda {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let r = 0.5 * (lo + hi);
            (lambda * r - alpha.eval(r)).max(0.0)
        }
        RateFunction::Tabulated { knots, values } => {
            let k = knots.len() - 1;
            let last_slope = (values[k] - values[k - 1]) / (knots[k] - knots[k - 1]);
            if lambda > last_slope {
                return f64::INFINITY;
            }
            knots.iter().zip(values).map(|(r, a)| lambda * r - a).fold(0.0, f64::max)
        }
    }
}

const INFCONV_STARTS: usize = 16;

/// `inf { sum alpha_i(r_i) : r_i >= 0, sum r_i = r }` by pairwise coordinate
/// descent on the simplex with multistart.
pub fn alpha_infconv(alphas: &[RateFunction], r: f64) -> f64 {
    let n = alphas.len();
    assert!(n >= 1, "inf-convolution of an empty family");
    let r = r.max(0.0);
    if n == 1 || r == 0.0 {
        return alphas[0].eval(r);
    }
    let objective = |x: &[f64]| -> f64 { alphas.iter().zip(x).map(|(a, &v)| a.eval(v)).sum() };
    let mut rng = ChaCha8Rng::seed_from_u64(0x1f_c0_57);
    let mut best = f64::INFINITY;
    for start in 0..INFCONV_STARTS {
        let mut x: Vec<f64> = if start == 0 {
            vec![r / n as f64; n]
        } else {
            let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| r * v / s).collect()
        };
        let mut val = objective(&x);
        for _sweep in 0..200 {
            let before = val;
            for i in 0..n {
                for j in i + 1..n {
                    let total = x[i] + x[j];
                    let pair = |t: f64| alphas[i].eval(t) + alphas[j].eval(total - t);
                    let t = minimize_1d(&pair, 0.0, total, x[i]);
                    x[i] = t;
                    x[j] = total - t;
                }
            }
            val = objective(&x);
            if before - val <= 1e-15 * before.abs().max(1e-300) {
                break;
            }
        }
        best = best.min(val);
    }
    best
}

/// `n alpha(r / n)`, the exact inf-convolution of `n` copies of a convex rate.
pub fn alpha_infconv_identical(alpha: &RateFunction, n: usize, r: f64) -> f64 {
    n as f64 * alpha.eval(r / n as f64)
}

/// Minimize a one-dimensional function on `[lo, hi]`: coarse scan followed by
/// golden-section refinement around the best scan cell.
pub(crate) fn minimize_1d(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, hint: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    const SCAN: usize = 32;
    let step = (hi - lo) / SCAN as f64;
    let mut best_t = hint.clamp(lo, hi);
    let mut best_v = f(best_t);
    let mut best_k = ((best_t - lo) / step).round() as usize;
    for k in 0..=SCAN {
        let t = lo + step * k as f64;
        let v = f(t);
        if v < best_v {
            best_v = v;
            best_t = t;
            best_k = k;
        }
    }
    let a0 = lo + step * best_k.saturating_sub(1) as f64;
    let b0 = (lo + step * (best_k + 1) as f64).min(hi);
    let t = golden_min(f, a0.min(best_t), b0.max(best_t));
    if f(t) < best_v {
        t
    } else {
        best_t
    }
}

pub(crate) fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_examples() {
        let q = RateFunction::quadratic(0.7).unwrap();
        assert!((alpha_conjugate(&q, 2.0) - 0.49 * 4.0).abs() < 1e-15);
        assert_eq!(alpha_conjugate(&q, 0.0), 0.0);
        let p = RateFunction::power(1.0, 2.0).unwrap();
        assert!((alpha_conjugate(&p, 3.0) - 2.25).abs() < 1e-12);
        // grid cross-check for a non-quadratic power
        let p = RateFunction::power(0.8, 3.0).unwrap();
        let lam = 1.7;
        let grid = (0..200_001).map(|k| k as f64 * 1e-5).map(|r| lam * r - p.eval(r)).fold(0.0, f64::max);
        assert!((alpha_conjugate(&p, lam) - grid).abs() < 1e-9);
    }

    #[test]
    fn tabulated_rate() {
        let t = RateFunction::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 2.0]).unwrap();
        assert!(t.is_convex());
        assert_eq!(t.eval(0.5), 0.25);
        assert_eq!(t.eval(3.0), 3.5);
        assert_eq!(alpha_conjugate(&t, 1.0), 0.5);
        assert_eq!(alpha_conjugate(&t, 1.5), 1.0);
        assert_eq!(alpha_conjugate(&t, 1.5000001), f64::INFINITY);
        let flat = RateFunction::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert!(!flat.is_convex());
        assert_eq!(alpha_conjugate(&flat, 0.1), f64::INFINITY);
        assert!(RateFunction::tabulated(vec![0.0, 1.0], vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn infconv_quadratics() {
        let (c1, c2) = (0.6f64, 1.3f64);
        let a = [RateFunction::quadratic(c1).unwrap(), RateFunction::quadratic(c2).unwrap()];
        for &r in &[0.1, 1.0, 2.5] {
            let exact = r * r / (4.0 * (c1 * c1 + c2 * c2));
            assert!((alpha_infconv(&a, r) - exact).abs() < 1e-10);
        }
        let q = RateFunction::quadratic(0.9).unwrap();
        let three = [q.clone(), q.clone(), q.clone()];
        assert!((alpha_infconv(&three, 1.2) - alpha_infconv_identical(&q, 3, 1.2)).abs() < 1e-10);
        assert_eq!(alpha_infconv(std::slice::from_ref(&q), 0.7), q.eval(0.7));
    }
}
