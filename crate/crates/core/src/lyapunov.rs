//! Lyapunov condition `-LU/U >= phi - b` with `U >= 1`, the bound
//! `int -(LU/U) dnu <= I(nu|mu)`, the weighted total-variation bounds it
//! yields under a Poincare inequality, and the worked examples (M/M/inf
//! queue, `|x|^beta` potentials).

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::diffusion::{discretize, DiffusionSpec1D, Grid1D};
use crate::error::{invalid, Error, Result};
use crate::markov::{build_chain, fisher_information, inner, spectral_gap, tv_weighted, Density, ReversibleChain};
use crate::transport::RateFunction;

/// `-(LU)/U` entrywise.
pub fn drift_ratio(chain: &ReversibleChain, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != chain.n() {
        return invalid("U has the wrong length");
    }
    if let Some((i, &v)) = u.iter().enumerate().find(|(_, &v)| !(v >= 1.0)) {
        return Err(Error::UBelowOne { index: i, value: v });
    }
    let lu = chain.apply_generator(u);
    Ok(lu.iter().zip(u).map(|(l, v)| -l / v).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCertificate {
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub b: f64,
    /// `max (phi - b) - drift_ratio` over the certified states.
    pub max_violation: f64,
    pub certified: bool,
    /// States left out (truncation boundary) and their violation.
    pub excluded: Vec<(usize, f64)>,
}

pub const CERTIFY_TOL: f64 = 1e-10;

/// Check condition (H) state by state, skipping `excluded`.
pub fn certify_h(chain: &ReversibleChain, u: &[f64], phi: &[f64], b: f64, excluded: &[usize]) -> Result<LyapunovCertificate> {
    if phi.len() != chain.n() || phi.iter().any(|p| !(*p >= 0.0)) || !(b >= 0.0) {
        return invalid("phi must be a nonnegative vector and b >= 0");
    }
    let drift = drift_ratio(chain, u)?;
    let mut max_violation = f64::NEG_INFINITY;
    let mut ex = Vec::new();
    for x in 0..chain.n() {
        let v = phi[x] - b - drift[x];
        if excluded.contains(&x) {
            ex.push((x, v));
        } else {
            max_violation = max_violation.max(v);
        }
    }
    Ok(LyapunovCertificate {
        u: u.to_vec(),
        phi: phi.to_vec(),
        b,
        max_violation,
        certified: max_violation <= CERTIFY_TOL,
        excluded: ex,
    })
}

/// `min_f I(f mu|mu) - <-LU/U, f mu>` over the densities.
pub fn drift_info_bound_check(chain: &ReversibleChain, u: &[f64], densities: &[Density]) -> Result<f64> {
    let drift = drift_ratio(chain, u)?;
    let mu = chain.mu();
    Ok(densities
        .iter()
        .map(|f| fisher_information(chain, f) - inner(mu, f.values(), &drift))
        .fold(f64::INFINITY, f64::min))
}

/// Right-hand sides of the weighted-TV bounds: `bound_a` for
/// `||phi (nu - mu)||_TV` at parameter `a >= 2`, `bound_b` for
/// `||sqrt(phi) (nu - mu)||_TV^2`.
pub fn thm51_bounds(c_p: f64, b: f64, phi_l2: f64, a: f64, info: f64) -> (f64, f64) {
    let k = 1.0 + 2.0 * b * c_p;
    let s2 = std::f64::consts::SQRT_2;
    let bound_a = k * (a + 1.0) / (a - 1.0) * info + a * s2 * phi_l2 * (c_p * info).sqrt();
    let bound_b = 2.0 * (3.0 * k + 2.0 * s2 * phi_l2 * c_p) * info;
    (bound_a, bound_b)
}

/// Parameters `a` tried in [`verify_thm51`]; every `a >= 2` gives a valid bound.
pub const A_GRID: [f64; 12] = [2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0, 16.0, 32.0, 64.0, 256.0];

#[derive(Debug, Clone, Serialize)]
pub struct Thm51Row {
    pub sample: usize,
    pub lhs1: f64,
    pub bound_a: f64,
    pub lhs2: f64,
    pub bound_b: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm51Report {
    pub c_p: f64,
    pub phi_l2: f64,
    pub rows: Vec<Thm51Row>,
    pub min_slack: f64,
    pub pass: bool,
}

pub fn verify_thm51(chain: &ReversibleChain, cert: &LyapunovCertificate, densities: &[Density]) -> Result<Thm51Report> {
    if !cert.certified {
        return Err(Error::NotCertified(cert.max_violation));
    }
    let c_p = spectral_gap(chain)?.c_p;
    let mu = chain.mu();
    let phi_l2 = inner(mu, &cert.phi, &cert.phi).sqrt();
    let sqrt_phi: Vec<f64> = cert.phi.iter().map(|p| p.sqrt()).collect();
    let mut rows = Vec::with_capacity(densities.len());
    for (i, f) in densities.iter().enumerate() {
        let info = fisher_information(chain, f);
        let lhs1 = tv_weighted(chain, f, &cert.phi);
        let lhs2 = tv_weighted(chain, f, &sqrt_phi).powi(2);
        let bound_a = A_GRID.iter().map(|&a| thm51_bounds(c_p, cert.b, phi_l2, a, info).0).fold(f64::INFINITY, f64::min);
        let bound_b = thm51_bounds(c_p, cert.b, phi_l2, 2.0, info).1;
        let slack = (bound_a - lhs1).min(bound_b - lhs2);
        rows.push(Thm51Row { sample: i, lhs1, bound_a, lhs2, bound_b, slack });
    }
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(Thm51Report { c_p, phi_l2, rows, min_slack, pass: min_slack >= -1e-8 })
}

/// `alpha(r) = kappa ((1 + r^2)^{p/2} - 1)`.
pub fn cor52_alpha(kappa: f64, p: f64) -> Result<RateFunction> {
    if !(p > 1.0) {
        return invalid(format!("exponent p must exceed 1, got {p}"));
    }
    RateFunction::power(kappa, p)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LsiBound {
    pub a: f64,
    pub b: f64,
    /// `A + (B + 2) c_P`, so that `H <= bound * I`.
    pub bound: f64,
}

/// Log-Sobolev bound from curvature `K <= 0` and condition (H) with
/// `phi = c d(., x0)^2`.
pub fn lsi_constant_from_lyapunov(k: f64, c: f64, b: f64, mu_phi: f64, c_p: f64) -> Result<LsiBound> {
    if !(k <= 0.0) || !(c > 0.0) {
        return invalid("need K <= 0 and c > 0");
    }
    let f = 1.0 - k / 2.0;
    let a = f * 2.0 / c + 1.0;
    let bb = 2.0 / c * (b + mu_phi) * f;
    Ok(LsiBound { a, b: bb, bound: a + (bb + 2.0) * c_p })
}

/// M/M/inf queue truncated at `n_max`: births at rate `lambda_rate`, deaths
/// at rate `n`, stationary law the renormalized Poisson(`lambda_rate`).
pub fn mminf_generator(lambda_rate: f64, n_max: usize) -> Result<(ReversibleChain, Vec<f64>)> {
    if !(lambda_rate > 0.0) || n_max < 1 {
        return invalid("need lambda_rate > 0 and n_max >= 1");
    }
    let n = n_max + 1;
    let mut logp = vec![-lambda_rate; n];
    for k in 1..n {
        logp[k] = logp[k - 1] + lambda_rate.ln() - (k as f64).ln();
    }
    let pmf: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    // beyond the summation accuracy, bound the tail by a geometric series
    let tail = if tail < 1e-12 {
        let ratio = lambda_rate / (n as f64 + 1.0);
        if ratio < 1.0 {
            pmf[n - 1] * lambda_rate / (n as f64) / (1.0 - ratio)
        } else {
            tail
        }
    } else {
        tail
    };
    if tail >= 1e-10 {
        return Err(Error::TruncationTooSmall { n_max, tail });
    }
    let z: f64 = pmf.iter().sum();
    let mu: Vec<f64> = pmf.iter().map(|p| p / z).collect();
    let mut rates = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        rates[(k, k + 1)] = lambda_rate;
        rates[(k + 1, k)] = (k + 1) as f64;
    }
    let chain = build_chain(&rates, Some(&mu))?;
    Ok((chain, mu))
}

/// `U(n) = exp(c n)`, `phi(n) = n (1 - e^{-c})`, `b = lambda_rate (e^c - 1)`:
/// condition (H) holds with equality below the truncation level.
pub fn mminf_lyapunov(chain: &ReversibleChain, lambda_rate: f64, c: f64) -> Result<LyapunovCertificate> {
    let n = chain.n();
    let u: Vec<f64> = (0..n).map(|k| (c * k as f64).exp()).collect();
    let phi: Vec<f64> = (0..n).map(|k| k as f64 * (-(-c).exp_m1())).collect();
    certify_h(chain, &u, &phi, lambda_rate * c.exp_m1(), &[n - 1])
}

/// Potential `V = C_V |x|^beta` for `|x| > 1`, blended to a C^2 quartic
/// `C_V (A + B x^2 + D x^4)` inside.
#[derive(Debug, Clone, Copy)]
pub struct BetaPotential {
    pub beta: f64,
    pub c_v: f64,
}

impl BetaPotential {
    fn coeffs(&self) -> (f64, f64, f64) {
        let b = self.beta;
        let d = b * (b - 2.0) / 8.0;
        let bb = b * (4.0 - b) / 4.0;
        (1.0 - bb - d, bb, d)
    }

    pub fn v(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax > 1.0 {
            return self.c_v * ax.powf(self.beta);
        }
        let (a, b, d) = self.coeffs();
        self.c_v * (a + b * x * x + d * x.powi(4))
    }

    pub fn dv(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax > 1.0 {
            return self.c_v * self.beta * ax.powf(self.beta - 1.0) * x.signum();
        }
        let (_, b, d) = self.coeffs();
        self.c_v * (2.0 * b * x + 4.0 * d * x.powi(3))
    }

    pub fn d2v(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax > 1.0 {
            return self.c_v * self.beta * (self.beta - 1.0) * ax.powf(self.beta - 2.0);
        }
        let (_, b, d) = self.coeffs();
        self.c_v * (2.0 * b + 12.0 * d * x * x)
    }
}

#[derive(Debug, Clone)]
pub struct BetaExample {
    pub spec: DiffusionSpec1D,
    pub grid: Grid1D,
    pub chain: ReversibleChain,
    /// `U = exp(lambda (V - min V))` at the nodes.
    pub u: Vec<f64>,
    /// `phi = delta (1 + V'^2)` at the nodes.
    pub phi: Vec<f64>,
    /// Smallest `b` certifying the discretized chain (boundary nodes excluded).
    pub b: f64,
    /// `delta + sup (lambda V'' - gamma' lambda V'^2)` from the continuum formula.
    pub b_continuum: f64,
    pub lambda: f64,
    pub delta: f64,
    pub gamma_prime: f64,
    /// Deviation exponent `2 (beta - 1)`, when `beta > 3/2`.
    pub p_exponent: Option<f64>,
    pub certificate: LyapunovCertificate,
}

/// Diffusion `a = 1`, `b = -V'` for the `|x|^beta` potential, discretized
/// on an automatic grid of `n_nodes`, with its Lyapunov triple.
///
/// `gamma = limsup V''/V'^2 = 0`, so `gamma' = 1/2`; `lambda = 1/4`
/// maximizes `lambda - lambda^2 - gamma' lambda`, and `delta` is half of it.
pub fn beta_potential_example(beta: f64, c_v: f64, n_nodes: usize) -> Result<BetaExample> {
    if !(beta >= 1.0) || !(c_v > 0.0) {
        return invalid("need beta >= 1 and C_V > 0");
    }
    let pot = BetaPotential { beta, c_v };
    let spec = DiffusionSpec1D::new(
        Arc::new(|_| 1.0),
        Arc::new(move |x| -pot.dv(x)),
        (f64::NEG_INFINITY, f64::INFINITY),
        0.0,
    )?;
    let grid = Grid1D::auto(&spec, n_nodes)?;
    let chain = discretize(&spec, &grid)?;
    let gamma_prime = 0.5;
    let lambda = (1.0 - gamma_prime) / 2.0;
    let delta = (lambda - lambda * lambda - gamma_prime * lambda) / 2.0;
    let nodes = grid.nodes();
    let vmin = nodes.iter().map(|&x| pot.v(x)).fold(f64::INFINITY, f64::min);
    let u: Vec<f64> = nodes.iter().map(|&x| (lambda * (pot.v(x) - vmin)).exp()).collect();
    let phi: Vec<f64> = nodes.iter().map(|&x| delta * (1.0 + pot.dv(x).powi(2))).collect();
    let b_continuum = delta
        + nodes
            .iter()
            .map(|&x| lambda * pot.d2v(x) - gamma_prime * lambda * pot.dv(x).powi(2))
            .fold(f64::NEG_INFINITY, f64::max);
    let drift = drift_ratio(&chain, &u)?;
    let n = nodes.len();
    let b = (1..n - 1).map(|i| phi[i] - drift[i]).fold(0.0f64, f64::max);
    let certificate = certify_h(&chain, &u, &phi, b, &[0, n - 1])?;
    Ok(BetaExample {
        spec,
        grid,
        chain,
        u,
        phi,
        b,
        b_continuum,
        lambda,
        delta,
        gamma_prime,
        p_exponent: (beta > 1.5).then_some(2.0 * (beta - 1.0)),
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::mean;

    #[test]
    fn mminf_drift_closed_form() {
        let (chain, mu) = mminf_generator(1.0, 40).unwrap();
        assert!((mu[0] - (-1f64).exp()).abs() < 1e-12);
        let c = 2f64.ln();
        let u: Vec<f64> = (0..41).map(|k| (c * k as f64).exp()).collect();
        let d = drift_ratio(&chain, &u).unwrap();
        assert!((d[3] - 0.5).abs() < 1e-12);
        for n in 1..40 {
            let exact = n as f64 * (1.0 - (-c).exp()) - (c.exp() - 1.0);
            assert!((d[n] - exact).abs() < 1e-9 * (1.0 + exact.abs()));
        }
        let cert = mminf_lyapunov(&chain, 1.0, c).unwrap();
        assert!(cert.certified && cert.max_violation.abs() < 1e-9);
        assert!(cert.b >= mean(chain.mu(), &cert.phi) - 1e-10);
        assert!(matches!(mminf_generator(5.0, 10), Err(Error::TruncationTooSmall { .. })));
    }

    #[test]
    fn drift_of_constant_is_zero() {
        let (chain, _) = mminf_generator(1.0, 30).unwrap();
        let d = drift_ratio(&chain, &vec![1.0; 31]).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
        assert!(matches!(drift_ratio(&chain, &vec![0.5; 31]), Err(Error::UBelowOne { .. })));
    }

    #[test]
    fn certificate_violation_reported() {
        let (chain, _) = mminf_generator(1.0, 30).unwrap();
        let c = 2f64.ln();
        let u: Vec<f64> = (0..31).map(|k| (c * k as f64).exp()).collect();
        let phi: Vec<f64> = (0..31).map(|k| k as f64).collect();
        let cert = certify_h(&chain, &u, &phi, 1.0, &[]).unwrap();
        assert!(!cert.certified && cert.max_violation > 1.0);
        assert!(matches!(verify_thm51(&chain, &cert, &[]), Err(Error::NotCertified(_))));
    }

    #[test]
    fn bound_formulas() {
        let (a, b) = thm51_bounds(1.0, 1.0, 1.0, 2.0, 1.0);
        assert!((a - (9.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((b - 2.0 * (9.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(thm51_bounds(1.0, 1.0, 1.0, 2.0, 0.0), (0.0, 0.0));
        let l = lsi_constant_from_lyapunov(0.0, 2.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!((l.a, l.b, l.bound), (2.0, 0.0, 4.0));
        let l = lsi_constant_from_lyapunov(-2.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!((l.a, l.b, l.bound), (5.0, 6.0, 13.0));
        let al = cor52_alpha(1.0, 2.0).unwrap();
        assert_eq!(al.eval(0.0), 0.0);
        assert!((al.eval(1.0) - 1.0).abs() < 1e-15);
        assert!((cor52_alpha(2.0, 4.0).unwrap().eval(1.0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn beta_potential_blend_is_c2() {
        for &beta in &[1.0, 1.5, 2.0, 3.0] {
            let p = BetaPotential { beta, c_v: 1.3 };
            let (lo, hi) = (1.0 - 1e-12, 1.0 + 1e-12);
            assert!((p.v(lo) - p.v(hi)).abs() < 1e-9);
            assert!((p.dv(lo) - p.dv(hi)).abs() < 1e-9);
            assert!((p.d2v(lo) - p.d2v(hi)).abs() < 1e-9);
        }
    }

    #[test]
    fn beta_examples() {
        let ex = beta_potential_example(2.0, 0.5, 200).unwrap();
        assert!(ex.certificate.certified);
        assert_eq!(ex.p_exponent, Some(2.0));
        assert!((ex.lambda - 0.25).abs() < 1e-15 && (ex.delta - 1.0 / 32.0).abs() < 1e-15);
        // interior drift against (lambda - lambda^2) V'^2 - lambda V''
        let pot = BetaPotential { beta: 2.0, c_v: 0.5 };
        let d = drift_ratio(&ex.chain, &ex.u).unwrap();
        let i = ex.grid.len() / 3;
        let x = ex.grid.nodes()[i];
        let cont = (ex.lambda - ex.lambda.powi(2)) * pot.dv(x).powi(2) - ex.lambda * pot.d2v(x);
        assert!((d[i] - cont).abs() < 1e-3, "{} vs {cont}", d[i]);
        let ex1 = beta_potential_example(1.0, 1.0, 200).unwrap();
        assert!(ex1.phi.iter().all(|&p| p <= 2.0 * ex1.delta + 1e-12));
        assert_eq!(beta_potential_example(3.0, 1.0, 200).unwrap().p_exponent, Some(4.0));
    }
}
