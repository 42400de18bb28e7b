//! Feynman-Kac principal eigenvalues `Lambda(u)`, the L^2(mu) growth of
//! `P_t^u`, the dual form of transport-information inequalities and
//! best-constant searches for W1I and W2I.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::markov::{
    dirichlet_energy, fisher_information, inner, mean, poisson_solve, relative_entropy, Density, MetricMatrix,
    ReversibleChain,
};
use crate::transport::{
    alpha_conjugate, golden_min, infconv_potential, solve_ot, w1_with_potential, CostMatrix, RateFunction,
};

/// `Lambda(u)`: top of the spectrum of `L^sigma + diag(u)` in L^2(mu).
pub fn lambda_max(chain: &ReversibleChain, u: &[f64]) -> f64 {
    chain.top_eigenpair(u).0
}

/// `Lambda(u)` and the density `phi^2` of the normalized ground state.
pub fn ground_state(chain: &ReversibleChain, u: &[f64]) -> (f64, Density) {
    let (lam, g) = chain.top_eigenpair(u);
    let w: Vec<f64> = g.iter().map(|v| v * v).collect();
    (lam, Density::from_weights(chain.mu(), &w).expect("ground state is nonzero"))
}

const MAX_EXPONENT: f64 = 700.0;

/// `||P_t^u||_{L^2(mu)} = exp(t Lambda(u))` for reversible chains.
pub fn fk_norm(chain: &ReversibleChain, u: &[f64], t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return invalid(format!("horizon must be nonnegative, got {t}"));
    }
    let e = t * lambda_max(chain, u);
    if e > MAX_EXPONENT {
        return Err(Error::HorizonOverflow(e));
    }
    Ok(e.exp())
}

/// Operator norm in L^2(mu) of `exp(t (L + diag u))`, computed from the
/// dense matrix exponential.
pub fn fk_norm_expm(chain: &ReversibleChain, u: &[f64], t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return invalid(format!("horizon must be nonnegative, got {t}"));
    }
    let e = t * lambda_max(chain, u);
    if e > MAX_EXPONENT {
        return Err(Error::HorizonOverflow(e));
    }
    let n = chain.n();
    let mut m = chain.q().clone() * t;
    for x in 0..n {
        m[(x, x)] += t * u[x];
    }
    let p = m.exp();
    let mu = chain.mu();
    let conj = DMatrix::from_fn(n, n, |x, y| p[(x, y)] * (mu[x] / mu[y]).sqrt());
    Ok(conj.singular_values().max())
}

/// Finite-horizon exponential moment `<beta, exp(t (L + diag w)) 1>`.
pub fn fk_moment(chain: &ReversibleChain, w: &[f64], t: f64, beta: &[f64]) -> f64 {
    let n = chain.n();
    let mut m = chain.q().clone() * t;
    for x in 0..n {
        m[(x, x)] += t * w[x];
    }
    let p = m.exp();
    (0..n).map(|x| beta[x] * p.row(x).sum()).sum()
}

const LEGENDRE_STARTS: usize = 32;

/// `sup_nu { lambda nu(u) - I(nu | mu) }` by steepest ascent of the Rayleigh
/// quotient over `g = sqrt(f)` on the unit sphere of L^2(mu), with an exact
/// two-dimensional line search and 32 multistarts.
pub fn legendre_of_info(chain: &ReversibleChain, u: &[f64], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let w: Vec<f64> = u.iter().map(|v| lambda * v).collect();
    let n = chain.n();
    (0..LEGENDRE_STARTS)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x1e9e_0000 + s as u64);
            let g0: Vec<f64> = if s == 0 { vec![1.0; n] } else { (0..n).map(|_| rng.random::<f64>() + 1e-3).collect() };
            let g = rayleigh_ascent(chain, &w, g0);
            let f: Vec<f64> = g.iter().map(|v| v * v).collect();
            let f = Density::from_weights(chain.mu(), &f).expect("nonzero iterate");
            inner(chain.mu(), f.values(), &w) - fisher_information(chain, &f)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

fn rayleigh_ascent(chain: &ReversibleChain, w: &[f64], mut g: Vec<f64>) -> Vec<f64> {
    let mu = chain.mu();
    let apply = |h: &[f64]| -> Vec<f64> {
        let mut out = chain.apply_symmetrized(h);
        for (o, (a, b)) in out.iter_mut().zip(w.iter().zip(h)) {
            *o += a * b;
        }
        out
    };
    let normalize = |h: &mut Vec<f64>| {
        let nrm = inner(mu, h, h).sqrt();
        h.iter_mut().for_each(|v| *v /= nrm);
    };
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + (0..chain.n()).fold(0.0f64, |m, x| m.max(-chain.q()[(x, x)]));
    normalize(&mut g);
    for _ in 0..20_000 {
        let ag = apply(&g);
        let rq = inner(mu, &g, &ag);
        let mut r: Vec<f64> = ag.iter().zip(&g).map(|(a, b)| a - rq * b).collect();
        let rn = inner(mu, &r, &r).sqrt();
        if rn <= 1e-14 * scale {
            break;
        }
        r.iter_mut().for_each(|v| *v /= rn);
        let ad = apply(&r);
        let a12 = inner(mu, &g, &ad);
        let a22 = inner(mu, &r, &ad);
        let half = 0.5 * (rq - a22);
        let top = 0.5 * (rq + a22) + (half * half + a12 * a12).sqrt();
        let (c1, c2) = if a12.abs() > 0.0 { (a12, top - rq) } else { (1.0, 0.0) };
        let mut next: Vec<f64> = g.iter().zip(&r).map(|(a, b)| c1 * a + c2 * b).collect();
        normalize(&mut next);
        g = next;
        if top - rq <= 1e-16 * scale {
            break;
        }
    }
    g.iter().map(|v| v.abs()).collect()
}

/// A pair of bounded observables from a class Phi.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PhiPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Constraint defining membership of a [`PhiPair`].
#[derive(Debug, Clone)]
pub enum PhiClass {
    /// `u <= v` entrywise.
    Ordered,
    /// `u(x) - v(y) <= c(x, y)` for all pairs.
    Cost(CostMatrix),
}

impl PhiClass {
    fn excess(&self, p: &PhiPair) -> f64 {
        match self {
            PhiClass::Ordered => p.u.iter().zip(&p.v).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max),
            PhiClass::Cost(c) => {
                let mut worst = f64::NEG_INFINITY;
                for x in 0..p.u.len() {
                    for y in 0..p.v.len() {
                        worst = worst.max(p.u[x] - p.v[y] - c.get(x, y));
                    }
                }
                worst
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TphiRow {
    pub pair: usize,
    pub lambda: f64,
    pub lambda_u: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TphiReport {
    pub rows: Vec<TphiRow>,
    pub min_slack: f64,
    pub pass: bool,
}

/// Check `Lambda(lambda u) <= lambda mu(v) + alpha^*(lambda)` for every pair
/// and every `lambda` of the grid.
pub fn verify_tphi_dual(
    chain: &ReversibleChain,
    pairs: &[PhiPair],
    class: &PhiClass,
    alpha: &RateFunction,
    lambda_grid: &[f64],
) -> Result<TphiReport> {
    for (i, p) in pairs.iter().enumerate() {
        if p.u.len() != chain.n() || p.v.len() != chain.n() {
            return invalid(format!("pair {i} has the wrong length"));
        }
        let ex = class.excess(p);
        if ex > 1e-12 {
            return Err(Error::PhiConstraintViolated { pair: i, excess: ex });
        }
    }
    let mut rows = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let mv = mean(chain.mu(), &p.v);
        for &lam in lambda_grid {
            let lu: Vec<f64> = p.u.iter().map(|x| lam * x).collect();
            let lhs = lambda_max(chain, &lu);
            let bound = lam * mv + alpha_conjugate(alpha, lam);
            rows.push(TphiRow { pair: i, lambda: lam, lambda_u: lhs, bound, slack: bound - lhs });
        }
    }
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(TphiReport { rows, min_slack, pass: min_slack >= -1e-8 })
}

/// Outcome of a best-constant search for `W^2 <= 4 c^2 I`.
#[derive(Debug, Clone, Serialize)]
pub struct BestConstantReport {
    pub c_dual: f64,
    pub c_primal: f64,
    /// Observable attaining the dual value (1-Lipschitz `u` for W1I, the
    /// binding `v` for W2I).
    pub witness_u: Vec<f64>,
    /// Multiplier at the dual optimum; zero means the small-multiplier limit.
    pub witness_lambda: f64,
    pub witness_density: Density,
    pub diverged: bool,
    /// Linearization probe `(epsilon, ratio)`; empty for W1I.
    pub probe: Vec<(f64, f64)>,
}

/// Tuning of the best-constant searches.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub seed: u64,
    pub primal_starts: usize,
    pub primal_iters: usize,
    /// Exact vertex enumeration of the Lipschitz polytope up to this size.
    pub exact_vertices_up_to: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { seed: 0x5eed, primal_starts: 64, primal_iters: 400, exact_vertices_up_to: 6 }
    }
}

pub const DIVERGENCE_CAP: f64 = 1e6;

fn lambda_grid() -> Vec<f64> {
    (0..=64).map(|k| 2f64.powf(-10.0 + k as f64 / 4.0)).collect()
}

/// `(Lambda(lam u) - lam mu(u)) / lam^2`.
fn growth_ratio(chain: &ReversibleChain, u: &[f64], mu_u: f64, lam: f64) -> f64 {
    let lu: Vec<f64> = u.iter().map(|x| lam * x).collect();
    ((lambda_max(chain, &lu) - lam * mu_u) / (lam * lam)).max(0.0)
}

/// `sup_{lam > 0} (Lambda(lam u) - lam mu(u)) / lam^2` and its argument;
/// argument zero stands for the `lam -> 0` limit `<u, (-L)^{-1} u>`.
fn best_lambda(chain: &ReversibleChain, u: &[f64]) -> (f64, f64) {
    let mu_u = mean(chain.mu(), u);
    let centred: Vec<f64> = u.iter().map(|x| x - mu_u).collect();
    let limit = match poisson_solve(chain, &centred) {
        Ok(h) => inner(chain.mu(), &centred, &h),
        Err(_) => 0.0,
    };
    let grid = lambda_grid();
    let vals: Vec<f64> = grid.iter().map(|&l| growth_ratio(chain, u, mu_u, l)).collect();
    let (k, &best) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if limit >= best {
        return (limit, 0.0);
    }
    let lo = grid[k.saturating_sub(1)].ln();
    let hi = grid[(k + 1).min(grid.len() - 1)].ln();
    let s = golden_min(&|t: f64| -growth_ratio(chain, u, mu_u, t.exp()), lo, hi);
    let refined = growth_ratio(chain, u, mu_u, s.exp());
    if refined > best {
        (refined, s.exp())
    } else {
        (best, grid[k])
    }
}

/// Vertices (modulo constants) of `{u : u_x - u_y <= d(x, y)}`: each is
/// determined by an oriented spanning tree of tight constraints.
pub fn lipschitz_vertices(d: &MetricMatrix) -> Vec<Vec<f64>> {
    let n = d.n();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let scale = d.diameter().max(1e-300);
    if n == 1 {
        return vec![vec![0.0]];
    }
    let trees = spanning_trees(n);
    for edges in trees {
        for mask in 0u32..(1 << (n - 1)) {
            // orientation bit set: u_a - u_b = d(a, b), otherwise u_b - u_a = d(a, b)
            let mut adj = vec![Vec::new(); n];
            for (k, &(a, b)) in edges.iter().enumerate() {
                let s = if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
                adj[a].push((b, -s * d.get(a, b)));
                adj[b].push((a, s * d.get(a, b)));
            }
            let mut u = vec![f64::NAN; n];
            u[0] = 0.0;
            let mut stack = vec![0];
            while let Some(x) = stack.pop() {
                for &(y, delta) in &adj[x] {
                    if u[y].is_nan() {
                        u[y] = u[x] + delta;
                        stack.push(y);
                    }
                }
            }
            let feasible = (0..n).all(|x| (0..n).all(|y| u[x] - u[y] <= d.get(x, y) + 1e-12 * scale));
            if feasible {
                let key: Vec<i64> = u.iter().map(|v| (v / scale * 1e9).round() as i64).collect();
                if seen.insert(key) {
                    out.push(u);
                }
            }
        }
    }
    out
}

/// All labelled spanning trees of the complete graph via Pruefer sequences.
fn spanning_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    let mut out = Vec::with_capacity(total);
    let mut seq = vec![0usize; len];
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % n;
            c /= n;
        }
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &s in &seq {
            let leaf = (0..n).find(|&x| degree[x] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&x| degree[x] == 1).collect();
        edges.push((rest[0], rest[1]));
        out.push(edges);
    }
    out
}

/// Candidate observables for the dual searches when exact enumeration is
/// too large: `+-d(., x0)` for spread base points and random c-concave
/// functions `min_y (r_y + d(., y))`.
fn lipschitz_candidates(d: &MetricMatrix, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = d.n();
    let bases: Vec<usize> = if n <= 64 { (0..n).collect() } else { (0..64).map(|k| k * (n - 1) / 63).collect() };
    let mut out = Vec::new();
    for &x0 in &bases {
        let u: Vec<f64> = (0..n).map(|x| d.get(x, x0)).collect();
        out.push(u.iter().map(|v| -v).collect());
        out.push(u);
    }
    let cost = CostMatrix::from_metric(d);
    let diam = d.diameter();
    for _ in 0..32 {
        let r: Vec<f64> = (0..n).map(|_| diam * rng.random::<f64>()).collect();
        out.push(infconv_potential(&cost, &r));
    }
    out
}

/// Best constant in `W1^2(nu, mu) <= 4 c^2 I(nu | mu)`.
pub fn best_w1i(chain: &ReversibleChain, d: &MetricMatrix) -> BestConstantReport {
    best_w1i_with(chain, d, &SearchOptions::default())
}

pub fn best_w1i_with(chain: &ReversibleChain, d: &MetricMatrix, opts: &SearchOptions) -> BestConstantReport {
    assert_eq!(chain.n(), d.n(), "metric and chain sizes differ");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let candidates =
        if d.n() <= opts.exact_vertices_up_to { lipschitz_vertices(d) } else { lipschitz_candidates(d, &mut rng) };
    let scored: Vec<(f64, f64)> = candidates.par_iter().map(|u| best_lambda(chain, u)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let mut best_u = candidates[order[0]].clone();
    let (mut best_val, mut best_lam) = scored[order[0]];

    // primal seeds from the leading dual candidates
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for &k in order.iter().take(4) {
        let (val, lam) = scored[k];
        if val <= 0.0 {
            continue;
        }
        seeds.extend(dual_seeds(chain, &candidates[k], lam));
    }
    let eval = |nu: &[f64]| w1_with_potential(d, nu, chain.mu());
    let (mut c_primal, mut witness) = primal_search(chain, &eval, seeds, opts);
    // The Kantorovich potential of the primal witness is itself a dual
    // candidate whose value bounds the witness ratio; without exact vertex
    // enumeration, alternate until neither side improves.
    for _ in 0..4 {
        let Ok((_, pot)) = eval(&witness.measure(chain.mu())) else { break };
        let (val, lam) = best_lambda(chain, &pot);
        let improved = val > best_val * (1.0 + 1e-12);
        if improved {
            best_val = val;
            best_lam = lam;
            best_u = pot.clone();
        }
        if d.n() <= opts.exact_vertices_up_to || !improved {
            break;
        }
        let (c, w) = primal_search(chain, &eval, dual_seeds(chain, &pot, lam), opts);
        if c > c_primal {
            c_primal = c;
            witness = w;
        }
    }
    let c_dual = best_val.sqrt();
    BestConstantReport {
        c_dual,
        c_primal,
        witness_u: best_u,
        witness_lambda: best_lam,
        witness_density: witness,
        diverged: c_dual >= DIVERGENCE_CAP && c_primal >= DIVERGENCE_CAP,
        probe: Vec::new(),
    }
}

/// Densities that are (near) optimal for the primal ratio when `(u, lam)`
/// is dual optimal: the ground state of `L + lam u`, or the linear
/// perturbation `1 + eps (-L)^{-1} u` in the small-multiplier limit.
fn dual_seeds(chain: &ReversibleChain, u: &[f64], lam: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mu_u = mean(chain.mu(), u);
    let centred: Vec<f64> = u.iter().map(|x| x - mu_u).collect();
    if let Ok(h) = poisson_solve(chain, &centred) {
        let hmax = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for eps in [1e-5, 1e-3, 1e-1] {
            out.push(h.iter().map(|v| 1.0 + eps * v / hmax).collect());
        }
    }
    for l in [lam, 0.5 * lam, 2.0 * lam] {
        if l > 0.0 {
            let lu: Vec<f64> = u.iter().map(|x| l * x).collect();
            out.push(ground_state(chain, &lu).1.values().to_vec());
        }
    }
    out
}

type TransportEval<'a> = dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync + 'a;

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn inv_softplus(f: f64) -> f64 {
    let f = f.max(1e-12);
    if f > 30.0 {
        f
    } else {
        f.exp_m1().ln()
    }
}

/// `log W - log I / 2` at `f = softplus(z)` (normalized) and its gradient in
/// `z`; `eval` returns the transport distance `W` and its derivative in `nu`.
fn primal_objective(chain: &ReversibleChain, eval: &TransportEval, z: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let mu = chain.mu();
    let n = z.len();
    let s: Vec<f64> = z.iter().map(|&v| softplus(v)).collect();
    let total: f64 = s.iter().zip(mu).map(|(a, b)| a * b).sum();
    let f: Vec<f64> = s.iter().map(|v| v / total).collect();
    let nu: Vec<f64> = f.iter().zip(mu).map(|(a, b)| a * b).collect();
    let (w, pot) = eval(&nu).ok()?;
    let g: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
    let info = dirichlet_energy(chain, &g);
    if !(w > 0.0 && info > 0.0) {
        return None;
    }
    let lg = chain.apply_symmetrized(&g);
    let dj_df: Vec<f64> =
        (0..n).map(|x| mu[x] * pot[x] / w + 0.5 * mu[x] * lg[x] / g[x].max(1e-300) / info).collect();
    let proj: f64 = f.iter().zip(&dj_df).map(|(a, b)| a * b).sum();
    let grad: Vec<f64> = (0..n).map(|j| (dj_df[j] - mu[j] * proj) / total * sigmoid(z[j])).collect();
    Some((w.ln() - 0.5 * info.ln(), grad, f))
}

fn ascend(chain: &ReversibleChain, eval: &TransportEval, mut z: Vec<f64>, iters: usize) -> Option<(f64, Vec<f64>)> {
    let (mut j, mut grad, mut f) = primal_objective(chain, eval, &z)?;
    let mut step = 1.0;
    for _ in 0..iters {
        let g2: f64 = grad.iter().map(|v| v * v).sum();
        if g2 < 1e-30 {
            break;
        }
        step *= 2.0;
        let mut accepted = false;
        while step > 1e-14 {
            let trial: Vec<f64> = z.iter().zip(&grad).map(|(a, b)| a + step * b).collect();
            if let Some((jt, gt, ft)) = primal_objective(chain, eval, &trial) {
                if jt >= j + 1e-4 * step * g2 {
                    let gain = jt - j;
                    z = trial;
                    j = jt;
                    grad = gt;
                    f = ft;
                    accepted = true;
                    if gain < 1e-13 {
                        return Some((j, f));
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((j, f))
}

fn primal_search(
    chain: &ReversibleChain,
    eval: &TransportEval,
    seeds: Vec<Vec<f64>>,
    opts: &SearchOptions,
) -> (f64, Density) {
    let n = chain.n();
    let starts: Vec<Vec<f64>> = (0..opts.primal_starts.max(seeds.len()))
        .map(|s| {
            if s < seeds.len() {
                seeds[s].iter().map(|&v| inv_softplus(v)).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(s as u64 + 1)));
                let spread = 0.1 + 2.0 * rng.random::<f64>();
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        spread * z
                    })
                    .collect()
            }
        })
        .collect();
    let results: Vec<Option<(f64, Vec<f64>)>> =
        starts.into_par_iter().map(|z| ascend(chain, eval, z, opts.primal_iters)).collect();
    let mut best = (f64::NEG_INFINITY, vec![1.0; n]);
    for r in results.into_iter().flatten() {
        if r.0 > best.0 {
            best = r;
        }
    }
    // W / (2 sqrt I) = exp(j) / 2
    let ratio = if best.0.is_finite() { (0.5 * best.0.exp()).min(DIVERGENCE_CAP) } else { 0.0 };
    (ratio, Density::from_weights(chain.mu(), &best.1).expect("positive iterate"))
}

/// Largest `k` with `Lambda(k Qv) <= k mu(v)`; the admissible set is an
/// interval because the left side minus the right is convex in `k` and
/// vanishes at zero.
fn w2_multiplier(chain: &ReversibleChain, qv: &[f64], mu_v: f64) -> f64 {
    let scale = qv.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let ok = |k: f64| {
        let w: Vec<f64> = qv.iter().map(|x| k * x).collect();
        lambda_max(chain, &w) - k * mu_v <= 1e-12 * (1.0 + k * scale)
    };
    const K_MIN: f64 = 1e-12;
    const K_MAX: f64 = 1e12;
    if !ok(K_MIN) {
        return 0.0;
    }
    if ok(K_MAX) {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (K_MIN.ln(), K_MAX.ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid.exp()) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    lo.exp()
}

fn c_from_multiplier(k: f64) -> f64 {
    if k <= 0.0 {
        DIVERGENCE_CAP
    } else if k.is_infinite() {
        0.0
    } else {
        (0.5 / k.sqrt()).min(DIVERGENCE_CAP)
    }
}

/// Observables for the W2I dual search: multiples of `d(., x0)`,
/// `d(., x0)^2` and (on small spaces) random vectors, each rescaled to unit
/// oscillation and multiplied by `theta` over the given scales.
pub fn w2_candidates(d: &MetricMatrix, seed: u64) -> Vec<Vec<f64>> {
    let n = d.n();
    let diam = d.diameter();
    let bases: Vec<usize> = if n <= 16 { (0..n).collect() } else { (0..16).map(|k| k * (n - 1) / 15).collect() };
    let mut shapes: Vec<Vec<f64>> = Vec::new();
    for &x0 in &bases {
        let lin: Vec<f64> = (0..n).map(|x| d.get(x, x0)).collect();
        shapes.push(lin.iter().map(|v| v * v).collect());
        shapes.push(lin.iter().map(|v| -v * v).collect());
        shapes.push(lin.iter().map(|v| -v).collect());
        shapes.push(lin);
    }
    if n <= 16 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..16 {
            shapes.push((0..n).map(|_| rng.random::<f64>()).collect());
        }
    }
    let mut out = Vec::new();
    for s in shapes {
        let osc = crate::markov::oscillation(&s);
        if osc <= 0.0 {
            continue;
        }
        for k in -2..=3 {
            let theta = diam * 2f64.powi(k);
            out.push(s.iter().map(|v| theta * v / osc).collect());
        }
    }
    out
}

/// Best constant in `W2^2(nu, mu) <= 4 c^2 I(nu | mu)`, with the
/// linearization probe `nu_eps = (1 + eps g) mu` along the gap eigenfunction.
pub fn best_w2i(chain: &ReversibleChain, d: &MetricMatrix) -> BestConstantReport {
    best_w2i_with(chain, d, &SearchOptions::default())
}

pub fn best_w2i_with(chain: &ReversibleChain, d: &MetricMatrix, opts: &SearchOptions) -> BestConstantReport {
    assert_eq!(chain.n(), d.n(), "metric and chain sizes differ");
    let cost = CostMatrix::squared_metric(d);
    let candidates = w2_candidates(d, opts.seed);
    let scored: Vec<f64> = candidates
        .par_iter()
        .map(|v| {
            let qv = infconv_potential(&cost, v);
            w2_multiplier(chain, &qv, mean(chain.mu(), v))
        })
        .collect();
    let best = (0..candidates.len()).min_by(|&a, &b| scored[a].total_cmp(&scored[b])).unwrap();
    let c_dual = c_from_multiplier(scored[best]);

    let mut seeds = Vec::new();
    let k = scored[best];
    if k.is_finite() && k > 0.0 {
        let qv = infconv_potential(&cost, &candidates[best]);
        let w: Vec<f64> = qv.iter().map(|x| k * x).collect();
        seeds.push(ground_state(chain, &w).1.values().to_vec());
    }
    let probe_dir = gap_direction(chain);
    for eps in [1e-1, 1e-2] {
        seeds.push(probe_dir.iter().map(|g| 1.0 + eps * g).collect());
    }
    let eval = |nu: &[f64]| -> Result<(f64, Vec<f64>)> {
        let s = solve_ot(&cost, nu, chain.mu())?;
        let w2 = s.value.max(0.0).sqrt();
        // d W2 / d nu = (d T / d nu) / (2 W2)
        Ok((w2, s.u.iter().map(|x| x / (2.0 * w2.max(1e-300))).collect()))
    };
    let (c_primal, witness) = primal_search(chain, &eval, seeds, opts);

    let probe = w2_probe(chain, d, &probe_dir);
    let slope = probe_slope(&probe);
    let diverged = slope <= -0.9 || c_dual >= DIVERGENCE_CAP || c_primal >= DIVERGENCE_CAP;
    BestConstantReport {
        c_dual,
        c_primal,
        witness_u: candidates[best].clone(),
        witness_lambda: k,
        witness_density: witness,
        diverged,
        probe,
    }
}

/// Gap eigenfunction scaled to unit sup norm.
fn gap_direction(chain: &ReversibleChain) -> Vec<f64> {
    let g = crate::markov::spectral_gap(chain).map(|s| s.eigenfunction).unwrap_or_else(|_| vec![0.0; chain.n()]);
    let m = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    g.iter().map(|v| v / m).collect()
}

/// `(eps, W2^2 / (4 I))` along `nu_eps = (1 + eps g) mu` for
/// `eps = 1e-1, ..., 1e-6`.
pub fn w2_probe(chain: &ReversibleChain, d: &MetricMatrix, g: &[f64]) -> Vec<(f64, f64)> {
    let cost = CostMatrix::squared_metric(d);
    (1..=6)
        .filter_map(|k| {
            let eps = 10f64.powi(-k);
            let f = Density::new(chain.mu(), g.iter().map(|v| 1.0 + eps * v).collect()).ok()?;
            let info = fisher_information(chain, &f);
            let t = solve_ot(&cost, &f.measure(chain.mu()), chain.mu()).ok()?.value;
            (info > 0.0).then(|| (eps, t / (4.0 * info)))
        })
        .collect()
}

/// Least-squares slope of `log ratio` against `log eps` over the three
/// smallest probe values.
fn probe_slope(probe: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> =
        probe.iter().rev().take(3).filter(|p| p.1 > 0.0).map(|&(e, r)| (e.ln(), r.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct W2DualReport {
    /// `mu(v)/(4c^2) - Lambda(Qv/(4c^2))` per sample.
    pub slacks: Vec<f64>,
    pub min_slack: f64,
    pub pass: bool,
}

/// Check `Lambda(Qv / (4 c^2)) <= mu(v) / (4 c^2)` on sampled `v`.
pub fn w2i_dual_check(chain: &ReversibleChain, d: &MetricMatrix, c: f64, v_samples: &[Vec<f64>]) -> Result<W2DualReport> {
    if !(c > 0.0) {
        return invalid(format!("constant must be positive, got {c}"));
    }
    let cost = CostMatrix::squared_metric(d);
    let k = 1.0 / (4.0 * c * c);
    let slacks: Vec<f64> = v_samples
        .iter()
        .map(|v| {
            let qv = infconv_potential(&cost, v);
            let w: Vec<f64> = qv.iter().map(|x| k * x).collect();
            k * mean(chain.mu(), v) - lambda_max(chain, &w)
        })
        .collect();
    let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(W2DualReport { slacks, min_slack, pass: min_slack >= -1e-8 })
}

/// `sup H(f mu | mu) / (2 I(f mu | mu))` over the samples with `I > 0`.
pub fn lsi_ratio_scan(chain: &ReversibleChain, samples: &[Density]) -> Result<f64> {
    if samples.len() < 100 {
        return invalid(format!("need at least 100 samples, got {}", samples.len()));
    }
    let mut best = 0.0f64;
    for f in samples {
        let info = fisher_information(chain, f);
        if info > 1e-300 {
            best = best.max(relative_entropy(chain, f) / (2.0 * info));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::build_chain;

    fn jump2(p: f64) -> ReversibleChain {
        let mu = [1.0 - p, p];
        build_chain(&DMatrix::from_row_slice(2, 2, &[0.0, mu[1], mu[0], 0.0]), Some(&mu)).unwrap()
    }

    #[test]
    fn zero_potential() {
        let c = jump2(0.3);
        assert!(lambda_max(&c, &[0.0, 0.0]).abs() < 1e-14);
        assert!((fk_norm(&c, &[0.0, 0.0], 5.0).unwrap() - 1.0).abs() < 1e-13);
        assert_eq!(legendre_of_info(&c, &[1.0, 2.0], 0.0), 0.0);
    }

    #[test]
    fn two_point_equality_case() {
        // p = 0.25, lambda = 1 - 2p = 0.5, u takes 2 - 2p on the p-mass point
        let p = 0.25;
        let c = jump2(p);
        let u = [-2.0 * p, 2.0 - 2.0 * p];
        let lu: Vec<f64> = u.iter().map(|x| 0.5 * x).collect();
        assert!((lambda_max(&c, &lu) - 0.25).abs() < 1e-12);
        assert!((fk_norm(&c, &lu, 10.0).unwrap() - 2.5f64.exp()).abs() < 1e-10);
        assert!((fk_norm_expm(&c, &lu, 10.0).unwrap() / 2.5f64.exp() - 1.0).abs() < 1e-8);
        assert!((legendre_of_info(&c, &u, 0.5) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn horizon_overflow() {
        let c = jump2(0.5);
        assert!(matches!(fk_norm(&c, &[10.0, 10.0], 100.0), Err(Error::HorizonOverflow(_))));
    }

    #[test]
    fn vertex_enumeration_on_trivial_metric() {
        // for the trivial metric on three points the polytope modulo
        // constants is a hexagon
        let v = lipschitz_vertices(&MetricMatrix::trivial(3));
        assert_eq!(v.len(), 6);
        assert_eq!(spanning_trees(4).len(), 16);
    }

    #[test]
    fn phi_violation_detected() {
        let c = jump2(0.3);
        let pairs = [PhiPair { u: vec![0.0, 2.0], v: vec![0.0, 1.0] }];
        let alpha = RateFunction::quadratic(1.0).unwrap();
        assert!(matches!(
            verify_tphi_dual(&c, &pairs, &PhiClass::Ordered, &alpha, &[1.0]),
            Err(Error::PhiConstraintViolated { pair: 0, .. })
        ));
    }

    #[test]
    fn lsi_scan_requires_samples() {
        let c = jump2(0.3);
        assert!(lsi_ratio_scan(&c, &[Density::uniform(2)]).is_err());
    }
}
