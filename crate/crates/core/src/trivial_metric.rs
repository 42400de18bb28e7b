//! Sharp results for the trivial metric `d(x, y) = 1_{x != y}`: the CKP-type
//! bound `||f mu - mu||_TV^2 <= 4 Var_mu(sqrt f)`, its two-valued extremal
//! family, the growth function `rho` and the 2x2 Feynman-Kac spectrum of the
//! rate-one jump process.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::feynman_kac::fk_moment;
use crate::markov::{build_chain, mean, variance, Density, ReversibleChain};
use crate::simulate::path_rng;

/// Rate-one jump process `L g = mu(g) - g`: `q_xy = mu_y` off the diagonal.
pub fn build_jump_chain(mu: &[f64]) -> Result<ReversibleChain> {
    for (i, &m) in mu.iter().enumerate() {
        if !(m > 0.0) {
            return Err(Error::DegenerateMeasure { index: i, value: m });
        }
    }
    let n = mu.len();
    let rates = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { mu[y] });
    build_chain(&rates, Some(mu))
}

/// `(||f mu - mu||_TV^2, 4 Var_mu(sqrt f))`.
pub fn ckp_gap(mu: &[f64], f: &Density) -> (f64, f64) {
    let tv: f64 = mu.iter().zip(f.values()).map(|(m, v)| m * (v - 1.0).abs()).sum();
    let s: f64 = mu.iter().zip(f.values()).map(|(m, v)| m * v.sqrt()).sum();
    (tv * tv, (4.0 * (1.0 - s * s)).max(0.0))
}

/// The extremal density: `(1-p)/p` on `subset` (which must carry mu-mass
/// exactly `p`), `p/(1-p)` elsewhere.
pub fn ckp_extremal(p: f64, mu: &[f64], subset: &[usize]) -> Result<Density> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("p must lie in (0, 1), got {p}"));
    }
    let mut inside = vec![false; mu.len()];
    for &i in subset {
        if i >= mu.len() {
            return invalid(format!("state {i} out of range"));
        }
        inside[i] = true;
    }
    let w: f64 = (0..mu.len()).filter(|&i| inside[i]).map(|i| mu[i]).sum();
    if (w - p).abs() > 1e-12 {
        return Err(Error::NoExactSplit(p));
    }
    let f = (0..mu.len()).map(|i| if inside[i] { (1.0 - p) / p } else { p / (1.0 - p) }).collect();
    Density::new(mu, f)
}

/// A subset of states with mu-mass `p` (within 1e-12), by exhaustive search.
pub fn find_split(mu: &[f64], p: f64) -> Result<Vec<usize>> {
    let n = mu.len();
    if n > 24 {
        return invalid("exhaustive split search limited to 24 states");
    }
    for mask in 1u32..(1u32 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| mu[i]).sum();
        if (w - p).abs() <= 1e-12 {
            return Ok((0..n).filter(|&i| mask >> i & 1 == 1).collect());
        }
    }
    Err(Error::NoExactSplit(p))
}

/// Extremal density on the two-point carrier `mu = (p, 1 - p)`.
pub fn ckp_extremal_two_point(p: f64) -> Result<(Vec<f64>, Density)> {
    let mu = vec![p, 1.0 - p];
    let f = ckp_extremal(p, &mu, &[0])?;
    Ok((mu, f))
}

/// Two-valued structure `(p, a^2, b^2)` of a density: `a^2` on a set of
/// mass `p`, `b^2` on the rest.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwoValued {
    pub p: f64,
    pub a2: f64,
    pub b2: f64,
}

/// Cluster the values of `f` (relative tolerance `rel_tol`) and report the
/// two-valued structure when exactly two clusters occur.
pub fn two_valued_structure(mu: &[f64], f: &Density, rel_tol: f64) -> Option<TwoValued> {
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    for (m, &v) in mu.iter().zip(f.values()) {
        match clusters.iter_mut().find(|c| (c.0 - v).abs() <= rel_tol * c.0.abs().max(v.abs())) {
            Some(c) => c.1 += m,
            None => clusters.push((v, *m)),
        }
    }
    if clusters.len() != 2 {
        return None;
    }
    clusters.sort_by(|a, b| b.0.total_cmp(&a.0));
    Some(TwoValued { p: clusters[0].1, a2: clusters[0].0, b2: clusters[1].0 })
}

/// `rho(lambda) = lambda^2` for `|lambda| <= 1`, `2|lambda| - 1` otherwise.
pub fn rho(lambda: f64) -> f64 {
    let a = lambda.abs();
    if a <= 1.0 {
        a * a
    } else {
        2.0 * a - 1.0
    }
}

/// Spectrum of the 2x2 reduction for the two-point jump process.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JumpSpectrum {
    pub p: f64,
    pub lambda: f64,
    pub delta: f64,
    pub s1: f64,
    pub s2: f64,
    pub growth: f64,
}

pub fn jump_spectrum(p: f64, lambda: f64) -> JumpSpectrum {
    let delta = 1.0 + 4.0 * lambda * (lambda + 2.0 * p - 1.0);
    let r = delta.max(0.0).sqrt();
    let s1 = -0.5 + 0.5 * r;
    let s2 = -0.5 - 0.5 * r;
    JumpSpectrum { p, lambda, delta, s1, s2, growth: lambda * (1.0 - 2.0 * p) + s1 }
}

/// The observable of the equality family on the two-point space
/// `mu = (1 - p, p)`: `-2p` on the heavy point, `2 - 2p` on the light one.
pub fn two_point_u(p: f64) -> [f64; 2] {
    [-2.0 * p, 2.0 - 2.0 * p]
}

/// Two-point jump chain with `mu = (1 - p, p)`.
pub fn jump2(p: f64) -> Result<ReversibleChain> {
    build_jump_chain(&[1.0 - p, p])
}

/// 199 points uniform on `[0.005, 0.995]`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=199).map(|k| 0.005 * k as f64).collect()
}

/// `sup_p growth(p, lambda)` over the grid, with its argument.
pub fn rho_sup_scan(lambda: f64, p_grid: &[f64]) -> (f64, f64) {
    p_grid
        .iter()
        .map(|&p| (jump_spectrum(p, lambda).growth, p))
        .fold((f64::NEG_INFINITY, f64::NAN), |a, b| if b.0 > a.0 { b } else { a })
}

/// `(||f mu - mu||_TV^2 / 4, d_H^2 (2 - d_H^2), Var_mu(sqrt f))` with
/// `d_H^2 = 1 - mu(sqrt f)`.
pub fn hellinger_check(mu: &[f64], f: &Density) -> (f64, f64, f64) {
    let (tv2, _) = ckp_gap(mu, f);
    let sq: Vec<f64> = f.values().iter().map(|v| v.sqrt()).collect();
    let dh2 = 1.0 - mean(mu, &sq);
    (tv2 / 4.0, dh2 * (2.0 - dh2), variance(mu, &sq))
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthEstimate {
    /// `(1/t) log` of the empirical mean of `exp(lambda int_0^t u)`.
    pub estimate: f64,
    /// Standard error of `estimate` from the exact second moment.
    pub std_error: f64,
    /// Exact finite-horizon value from the matrix exponential.
    pub exact: f64,
    /// Long-time limit `lambda (1 - 2p) + s1`.
    pub limit: f64,
    /// `|exact - limit|`.
    pub bias: f64,
    pub n_paths: usize,
}

/// Monte Carlo estimate of `(1/t) log E_mu exp(lambda int_0^t u(X_s) ds)` for
/// the two-point jump process, against the exact finite-horizon moment.
pub fn fk_growth_mc(p: f64, lambda: f64, t: f64, n_paths: usize, seed: u64) -> Result<GrowthEstimate> {
    if !(p > 0.0 && p < 1.0) || !(t > 0.0 && t <= 50.0) || n_paths == 0 {
        return invalid("fk_growth_mc needs p in (0,1), 0 < t <= 50 and n_paths >= 1");
    }
    let chain = jump2(p)?;
    let u = two_point_u(p);
    let w: Vec<f64> = u.iter().map(|x| lambda * x).collect();
    let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
    let m1 = fk_moment(&chain, &w, t, chain.mu());
    let m2 = fk_moment(&chain, &w2, t, chain.mu());
    let rel_var = (m2 / (m1 * m1) - 1.0).max(0.0);
    if !rel_var.is_finite() || rel_var > n_paths as f64 / 100.0 {
        return Err(Error::EstimatorOverflow(rel_var));
    }
    let leave = [p, 1.0 - p];
    let mu0 = 1.0 - p;
    // exp(lambda int u - t log m1) keeps the summands O(1)
    let shift = m1.ln();
    let sum: f64 = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            let mut x = if rng.random::<f64>() < mu0 { 0 } else { 1 };
            let mut s = 0.0;
            let mut integral = 0.0;
            loop {
                let e: f64 = Exp1.sample(&mut rng);
                let hold = e / leave[x];
                if s + hold >= t {
                    integral += (t - s) * w[x];
                    break;
                }
                integral += hold * w[x];
                s += hold;
                x = 1 - x;
            }
            (integral - shift).exp()
        })
        .sum();
    let estimate = (sum / n_paths as f64).ln() / t + shift / t;
    let exact = m1.ln() / t;
    let limit = jump_spectrum(p, lambda).growth;
    Ok(GrowthEstimate {
        estimate,
        std_error: (rel_var / n_paths as f64).sqrt() / t,
        exact,
        limit,
        bias: (exact - limit).abs(),
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{dirichlet_energy, spectral_gap};

    #[test]
    fn jump_chain_basics() {
        let c = build_jump_chain(&[0.5, 0.5]).unwrap();
        assert_eq!(c.q()[(0, 1)], 0.5);
        let c = build_jump_chain(&[0.25, 0.75]).unwrap();
        assert!((dirichlet_energy(&c, &[0.0, 1.0]) - 0.1875).abs() < 1e-15);
        let c = build_jump_chain(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((spectral_gap(&c).unwrap().c_p - 1.0).abs() < 1e-12);
        assert!(build_jump_chain(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn extremal_values() {
        let (_, f) = ckp_extremal_two_point(0.25).unwrap();
        assert!((f.values()[0] - 3.0).abs() < 1e-15 && (f.values()[1] - 1.0 / 3.0).abs() < 1e-15);
        let (_, f) = ckp_extremal_two_point(0.9).unwrap();
        assert!((f.values()[0] - 1.0 / 9.0).abs() < 1e-15 && (f.values()[1] - 9.0).abs() < 1e-13);
        let (_, f) = ckp_extremal_two_point(0.5).unwrap();
        assert_eq!(f.values(), &[1.0, 1.0]);
        assert!(matches!(ckp_extremal(0.3, &[0.25, 0.75], &[0]), Err(Error::NoExactSplit(_))));
        assert!(matches!(find_split(&[0.5, 0.5], 0.3), Err(Error::NoExactSplit(_))));
    }

    #[test]
    fn ckp_equality_at_quarter() {
        let (mu, f) = ckp_extremal_two_point(0.25).unwrap();
        let (tv2, fv) = ckp_gap(&mu, &f);
        assert!((tv2 - 1.0).abs() < 1e-14 && (fv - 1.0).abs() < 1e-14);
        let (a, b, v) = hellinger_check(&mu, &f);
        assert!((a - 0.25).abs() < 1e-14 && (b - 0.25).abs() < 1e-14 && (v - b).abs() < 1e-14);
        let s = two_valued_structure(&mu, &f, 1e-8).unwrap();
        assert!((s.p * (1.0 + s.a2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho(0.5), 0.25);
        assert_eq!(rho(2.0), 3.0);
        assert_eq!(rho(0.0), 0.0);
        assert_eq!(rho(-2.0), 3.0);
    }

    #[test]
    fn spectrum_examples() {
        let s = jump_spectrum(0.25, 0.5);
        assert!((s.delta - 1.0).abs() < 1e-15 && s.s1.abs() < 1e-15 && (s.growth - 0.25).abs() < 1e-15);
        let s = jump_spectrum(0.5, 1.0);
        assert!((s.delta - 5.0).abs() < 1e-15);
        assert!((s.growth - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(jump_spectrum(0.3, 0.0).growth, 0.0);
        let (sup, arg) = rho_sup_scan(0.5, &default_p_grid());
        assert!((sup - 0.25).abs() < 1e-12 && (arg - 0.25).abs() < 1e-12);
    }

    #[test]
    fn spectrum_matches_lambda_max() {
        for &p in &[0.1, 0.25, 0.5, 0.8] {
            for &l in &[-1.5, -0.2, 0.3, 0.9, 2.0] {
                let c = jump2(p).unwrap();
                let w: Vec<f64> = two_point_u(p).iter().map(|x| l * x).collect();
                let lam = crate::feynman_kac::lambda_max(&c, &w);
                assert!((lam - jump_spectrum(p, l).growth).abs() < 1e-10, "p={p} l={l}");
            }
        }
    }

    #[test]
    fn growth_mc_zero_lambda() {
        let g = fk_growth_mc(0.3, 0.0, 5.0, 100, 1).unwrap();
        assert!(g.estimate.abs() < 1e-12 && g.exact.abs() < 1e-12);
    }
}
