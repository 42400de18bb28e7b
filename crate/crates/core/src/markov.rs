//! Finite reversible Markov chains: construction and validation, Dirichlet
//! forms, information functionals, spectral gap and the Poisson equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

const BALANCE_TOL: f64 = 1e-10;
const DENSITY_RENORM_TOL: f64 = 1e-9;

/// A validated irreducible reversible rate matrix together with its
/// reversing probability measure.
#[derive(Debug, Clone)]
pub struct ReversibleChain {
    states: Vec<String>,
    q: DMatrix<f64>,
    mu: Vec<f64>,
    /// Edges `(x, y, kappa)` with `x < y` and edge conductance
    /// `kappa = (mu_x q_xy + mu_y q_yx) / 2 > 0`.
    edges: Vec<(usize, usize, f64)>,
    birth_death: bool,
}

impl ReversibleChain {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// True when every edge joins consecutive states.
    pub fn is_birth_death(&self) -> bool {
        self.birth_death
    }

    pub fn with_states(mut self, states: Vec<String>) -> Result<Self> {
        if states.len() != self.n() {
            return invalid(format!("{} labels for {} states", states.len(), self.n()));
        }
        self.states = states;
        Ok(self)
    }

    /// `(L g)(x) = sum_y q_xy (g_y - g_x)`.
    pub fn apply_generator(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|x| {
                let mut s = 0.0;
                for y in 0..n {
                    if y != x {
                        s += self.q[(x, y)] * (g[y] - g[x]);
                    }
                }
                s
            })
            .collect()
    }

    /// `(L^sigma g)(x)`, the symmetrized generator in L^2(mu).
    pub fn apply_symmetrized(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for &(x, y, k) in &self.edges {
            let diff = g[y] - g[x];
            out[x] += k * diff / self.mu[x];
            out[y] -= k * diff / self.mu[y];
        }
        out
    }

    /// Dense matrix of L^sigma.
    pub fn symmetrized_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for &(x, y, k) in &self.edges {
            m[(x, y)] += k / self.mu[x];
            m[(y, x)] += k / self.mu[y];
            m[(x, x)] -= k / self.mu[x];
            m[(y, y)] -= k / self.mu[y];
        }
        m
    }

    /// `diag(sqrt mu) (L^sigma + diag u) diag(1/sqrt mu)`, a symmetric matrix
    /// with the same spectrum as the L^2(mu) operator.
    pub fn symmetric_form(&self, u: Option<&[f64]>) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for &(x, y, k) in &self.edges {
            let off = k / (self.mu[x] * self.mu[y]).sqrt();
            m[(x, y)] += off;
            m[(y, x)] += off;
            m[(x, x)] -= k / self.mu[x];
            m[(y, y)] -= k / self.mu[y];
        }
        if let Some(u) = u {
            for x in 0..n {
                m[(x, x)] += u[x];
            }
        }
        m
    }

    /// Tridiagonal `(diag, off)` of [`Self::symmetric_form`]; only meaningful
    /// for birth-death chains.
    pub fn symmetric_tridiag(&self, u: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n - 1];
        for &(x, y, k) in &self.edges {
            debug_assert_eq!(y, x + 1);
            e[x] += k / (self.mu[x] * self.mu[y]).sqrt();
            d[x] -= k / self.mu[x];
            d[y] -= k / self.mu[y];
        }
        if let Some(u) = u {
            for x in 0..n {
                d[x] += u[x];
            }
        }
        (d, e)
    }

    /// Top eigenpair of `L^sigma + diag(u)` in L^2(mu). The eigenvector is
    /// returned in flat coordinates (unit Euclidean norm of `sqrt(mu) g`).
    pub fn top_eigenpair(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let (lam, psi) = if self.birth_death {
            let (d, e) = self.symmetric_tridiag(Some(u));
            linalg::tridiag_top(&d, &e)
        } else {
            linalg::sym_top(&self.symmetric_form(Some(u)))
        };
        let g = psi.iter().zip(&self.mu).map(|(p, m)| p / m.sqrt()).collect();
        (lam, g)
    }
}

/// Build and validate a chain from off-diagonal rates. The diagonal of
/// `rates` is ignored and refilled so rows sum to zero. When `mu` is absent
/// the invariant law is obtained from `mu Q = 0`.
pub fn build_chain(rates: &DMatrix<f64>, mu: Option<&[f64]>) -> Result<ReversibleChain> {
    let n = rates.nrows();
    if n < 2 || rates.ncols() != n {
        return invalid(format!("rate matrix must be square with n >= 2, got {}x{}", n, rates.ncols()));
    }
    let mut q = rates.clone();
    for x in 0..n {
        let mut s = 0.0;
        for y in 0..n {
            if x == y {
                continue;
            }
            let v = q[(x, y)];
            if !v.is_finite() || v < 0.0 {
                return invalid(format!("rate ({x},{y}) = {v} is not a nonnegative number"));
            }
            s += v;
        }
        q[(x, x)] = -s;
    }
    if !strongly_connected(&q) {
        return Err(Error::NotIrreducible);
    }
    let mu = match mu {
        Some(m) => {
            if m.len() != n {
                return invalid(format!("mu has length {} but chain has {} states", m.len(), n));
            }
            normalize_probability(m)?
        }
        None => stationary_law(&q)?,
    };
    for (i, &m) in mu.iter().enumerate() {
        if !(m > 0.0) {
            return Err(Error::DegenerateMeasure { index: i, value: m });
        }
    }
    let mut worst = (0, 0, 0.0f64);
    for x in 0..n {
        for y in x + 1..n {
            let a = mu[x] * q[(x, y)];
            let b = mu[y] * q[(y, x)];
            let scale = a.max(b);
            if scale > 0.0 {
                let r = (a - b).abs() / scale;
                if r > worst.2 {
                    worst = (x, y, r);
                }
            }
        }
    }
    if worst.2 > BALANCE_TOL {
        return Err(Error::DetailedBalanceViolated { from: worst.0, to: worst.1, residual: worst.2 });
    }
    Ok(assemble(q, mu))
}

fn assemble(q: DMatrix<f64>, mu: Vec<f64>) -> ReversibleChain {
    let n = mu.len();
    let mut edges = Vec::new();
    let mut birth_death = true;
    for x in 0..n {
        for y in x + 1..n {
            let k = 0.5 * (mu[x] * q[(x, y)] + mu[y] * q[(y, x)]);
            if k > 0.0 {
                edges.push((x, y, k));
                if y != x + 1 {
                    birth_death = false;
                }
            }
        }
    }
    ReversibleChain { states: (0..n).map(|i| i.to_string()).collect(), q, mu, edges, birth_death }
}

fn normalize_probability(m: &[f64]) -> Result<Vec<f64>> {
    for (i, &v) in m.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::DegenerateMeasure { index: i, value: v });
        }
    }
    let s: f64 = m.iter().sum();
    if (s - 1.0).abs() > DENSITY_RENORM_TOL {
        return invalid(format!("mu sums to {s}, not 1"));
    }
    Ok(m.iter().map(|v| v / s).collect())
}

fn strongly_connected(q: &DMatrix<f64>) -> bool {
    let n = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let r = if forward { q[(x, y)] } else { q[(y, x)] };
                if y != x && r > 0.0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Solve `mu Q = 0`, `sum mu = 1` by replacing one equation with the
/// normalization.
fn stationary_law(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = q.nrows();
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = a.lu().solve(&rhs).ok_or(Error::SingularSystem(f64::INFINITY))?;
    let s: f64 = sol.iter().sum();
    Ok(sol.iter().map(|v| v / s).collect())
}

/// Independent product of chains: `L = sum_i L_i` acting on coordinate `i`,
/// with row-major state indexing (first factor most significant).
pub fn product_chain(chains: &[&ReversibleChain]) -> Result<ReversibleChain> {
    if chains.is_empty() {
        return invalid("product of zero chains");
    }
    let dims: Vec<usize> = chains.iter().map(|c| c.n()).collect();
    let size = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
    if size > 2_000 {
        return Err(Error::ProductTooLarge(size));
    }
    let coords: Vec<Vec<usize>> = (0..size).map(|k| crate::transport::product_decode(k, &dims)).collect();
    let mut q = DMatrix::zeros(size, size);
    for x in 0..size {
        for y in 0..size {
            let diff: Vec<usize> = (0..dims.len()).filter(|&i| coords[x][i] != coords[y][i]).collect();
            if diff.len() == 1 {
                let i = diff[0];
                q[(x, y)] = chains[i].q()[(coords[x][i], coords[y][i])];
            }
        }
    }
    let mus: Vec<&[f64]> = chains.iter().map(|c| c.mu()).collect();
    let mu = crate::transport::product_measure(&mus);
    build_chain(&q, Some(&mu))
}

/// A probability density `f = d nu / d mu` with respect to a chain's law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Density(Vec<f64>);

impl Density {
    /// Validate `f` against `mu`. Totals within 1e-9 of one are renormalized;
    /// anything further off is rejected.
    pub fn new(mu: &[f64], f: Vec<f64>) -> Result<Self> {
        if f.len() != mu.len() {
            return Err(Error::InvalidDensity(format!("length {} vs {}", f.len(), mu.len())));
        }
        if let Some(v) = f.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("entry {v} is not a nonnegative number")));
        }
        let total: f64 = f.iter().zip(mu).map(|(a, b)| a * b).sum();
        if (total - 1.0).abs() > DENSITY_RENORM_TOL {
            return Err(Error::InvalidDensity(format!("mu(f) = {total}")));
        }
        Ok(Density(f.into_iter().map(|v| v / total).collect()))
    }

    /// Density of the probability vector `nu` with respect to `mu`.
    pub fn from_measure(mu: &[f64], nu: &[f64]) -> Result<Self> {
        if nu.len() != mu.len() {
            return Err(Error::InvalidDensity(format!("length {} vs {}", nu.len(), mu.len())));
        }
        if let Some(v) = nu.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("mass {v} is not a nonnegative number")));
        }
        let s: f64 = nu.iter().sum();
        if (s - 1.0).abs() > DENSITY_RENORM_TOL {
            return Err(Error::InvalidDensity(format!("nu sums to {s}")));
        }
        Ok(Density(nu.iter().zip(mu).map(|(a, b)| a / s / b).collect()))
    }

    /// Normalize an arbitrary nonnegative, not identically zero weight
    /// vector `w` into a density.
    pub fn from_weights(mu: &[f64], w: &[f64]) -> Result<Self> {
        if w.len() != mu.len() || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity("weights must be finite and nonnegative".into()));
        }
        let total: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDensity("weights vanish".into()));
        }
        Ok(Density(w.iter().map(|v| v / total).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        Density(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The probability vector `nu = f mu`.
    pub fn measure(&self, mu: &[f64]) -> Vec<f64> {
        self.0.iter().zip(mu).map(|(a, b)| a * b).collect()
    }
}

/// A metric on a finite set.
#[derive(Debug, Clone)]
pub struct MetricMatrix {
    d: DMatrix<f64>,
    line: Option<Vec<f64>>,
}

impl MetricMatrix {
    /// Validate symmetry, zero diagonal, positivity off the diagonal and the
    /// triangle inequality (relative tolerance 1e-12).
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        let n = d.nrows();
        if n == 0 || d.ncols() != n {
            return invalid("metric must be a nonempty square matrix");
        }
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for x in 0..n {
            if d[(x, x)] != 0.0 {
                return invalid(format!("d({x},{x}) = {} is not zero", d[(x, x)]));
            }
            for y in 0..n {
                let v = d[(x, y)];
                if !v.is_finite() || (x != y && v <= 0.0) {
                    return invalid(format!("d({x},{y}) = {v} must be positive"));
                }
                if (v - d[(y, x)]).abs() > 1e-12 * scale {
                    return invalid(format!("d is not symmetric at ({x},{y})"));
                }
            }
        }
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if d[(x, z)] > d[(x, y)] + d[(y, z)] + 1e-12 * scale {
                        return invalid(format!("triangle inequality fails on ({x},{y},{z})"));
                    }
                }
            }
        }
        let line = detect_line(&d);
        Ok(MetricMatrix { d, line })
    }

    /// `d(x, y) = 1` for `x != y`.
    pub fn trivial(n: usize) -> Self {
        let d = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        let line = if n <= 2 { Some((0..n).map(|i| i as f64).collect()) } else { None };
        MetricMatrix { d, line }
    }

    /// Euclidean distance between strictly increasing points.
    pub fn line(points: &[f64]) -> Result<Self> {
        for i in 1..points.len() {
            if !(points[i] > points[i - 1]) {
                return Err(Error::UnsortedGrid(i));
            }
        }
        let n = points.len();
        let d = DMatrix::from_fn(n, n, |i, j| (points[i] - points[j]).abs());
        Ok(MetricMatrix { d, line: Some(points.to_vec()) })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.d[(x, y)]
    }

    /// Positions `p` with `d(x,y) = |p_x - p_y|` in index order, when the
    /// metric is isometric to increasing points on a line.
    pub fn line_positions(&self) -> Option<&[f64]> {
        self.line.as_deref()
    }

    pub fn diameter(&self) -> f64 {
        self.d.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Entrywise square, as a cost matrix.
    pub fn squared(&self) -> DMatrix<f64> {
        self.d.map(|v| v * v)
    }
}

fn detect_line(d: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = d.nrows();
    let p: Vec<f64> = (0..n).map(|i| d[(0, i)]).collect();
    // positions relative to state 0 must be monotone in the index for the
    // CDF formula; only accept increasing embeddings anchored at state 0
    for i in 1..n {
        if !(p[i] > p[i - 1]) {
            return None;
        }
    }
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for i in 0..n {
        for j in 0..n {
            if ((p[i] - p[j]).abs() - d[(i, j)]).abs() > 1e-12 * scale {
                return None;
            }
        }
    }
    Some(p)
}

pub fn mean(mu: &[f64], g: &[f64]) -> f64 {
    mu.iter().zip(g).map(|(a, b)| a * b).sum()
}

pub fn inner(mu: &[f64], a: &[f64], b: &[f64]) -> f64 {
    mu.iter().zip(a).zip(b).map(|((m, x), y)| m * x * y).sum()
}

pub fn variance(mu: &[f64], g: &[f64]) -> f64 {
    let m = mean(mu, g);
    mu.iter().zip(g).map(|(w, v)| w * (v - m) * (v - m)).sum()
}

/// Oscillation `sup g - inf g`.
pub fn oscillation(g: &[f64]) -> f64 {
    let hi = g.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lo = g.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    hi - lo
}

/// `E(g, g) = sum_{x<y} kappa_xy (g_y - g_x)^2`.
pub fn dirichlet_energy(chain: &ReversibleChain, g: &[f64]) -> f64 {
    chain.edges.iter().map(|&(x, y, k)| k * (g[y] - g[x]).powi(2)).sum()
}

/// Bilinear Dirichlet form `E(g, h)`.
pub fn dirichlet_form(chain: &ReversibleChain, g: &[f64], h: &[f64]) -> f64 {
    chain.edges.iter().map(|&(x, y, k)| k * (g[y] - g[x]) * (h[y] - h[x])).sum()
}

/// `I(f mu | mu) = E(sqrt f, sqrt f)`.
pub fn fisher_information(chain: &ReversibleChain, f: &Density) -> f64 {
    let g: Vec<f64> = f.values().iter().map(|v| v.sqrt()).collect();
    dirichlet_energy(chain, &g)
}

/// `H(f mu | mu) = sum mu f log f` with `0 log 0 = 0`.
pub fn relative_entropy(chain: &ReversibleChain, f: &Density) -> f64 {
    entropy_of(chain.mu(), f.values())
}

pub(crate) fn entropy_of(mu: &[f64], f: &[f64]) -> f64 {
    mu.iter().zip(f).map(|(m, &v)| if v > 0.0 { m * v * v.ln() } else { 0.0 }).sum::<f64>().max(0.0)
}

/// `sum mu phi |f - 1|`; with `phi = 1` the total variation norm of `nu - mu`.
pub fn tv_weighted(chain: &ReversibleChain, f: &Density, phi: &[f64]) -> f64 {
    tv_weighted_mu(chain.mu(), f.values(), phi)
}

pub(crate) fn tv_weighted_mu(mu: &[f64], f: &[f64], phi: &[f64]) -> f64 {
    mu.iter().zip(f).zip(phi).map(|((m, v), p)| m * p * (v - 1.0).abs()).sum()
}

/// Spectral gap of `-L^sigma` and its eigenfunction.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralGap {
    pub gap: f64,
    pub c_p: f64,
    /// Gap eigenfunction, normalized to unit L^2(mu) norm.
    pub eigenfunction: Vec<f64>,
}

pub fn spectral_gap(chain: &ReversibleChain) -> Result<SpectralGap> {
    let n = chain.n();
    let (gap, psi) = if chain.birth_death {
        let (d, e) = chain.symmetric_tridiag(None);
        let nd: Vec<f64> = d.iter().map(|v| -v).collect();
        let ne: Vec<f64> = e.iter().map(|v| -v).collect();
        let lam = linalg::tridiag_eigenvalue(&nd, &ne, 1);
        (lam, linalg::tridiag_eigenvector(&nd, &ne, lam))
    } else {
        let s = -chain.symmetric_form(None);
        let (vals, vecs) = linalg::sym_eigen_sorted(&s);
        (vals[1], vecs.column(1).iter().copied().collect())
    };
    if !(gap > 0.0) {
        return Err(Error::NotIrreducible);
    }
    let g: Vec<f64> = (0..n).map(|i| psi[i] / chain.mu[i].sqrt()).collect();
    Ok(SpectralGap { gap, c_p: 1.0 / gap, eigenfunction: g })
}

/// Solve `-L^sigma h = g` with `mu(h) = 0`.
pub fn poisson_solve(chain: &ReversibleChain, g: &[f64]) -> Result<Vec<f64>> {
    let n = chain.n();
    if g.len() != n {
        return invalid(format!("g has length {} for {} states", g.len(), n));
    }
    let m = mean(chain.mu(), g);
    if m.abs() > 1e-10 {
        return Err(Error::MeanNotZero(m));
    }
    let mut h = if chain.birth_death {
        // flux through edge i is -sum_{j<=i} mu g = sum_{j>i} mu g; take the
        // lighter side so roundoff does not swamp tiny tail conductances
        let mut right = vec![0.0; n + 1];
        let mut right_mass = vec![0.0; n + 1];
        for i in (0..n).rev() {
            right[i] = right[i + 1] + chain.mu[i] * g[i];
            right_mass[i] = right_mass[i + 1] + chain.mu[i];
        }
        let mut h = vec![0.0; n];
        let (mut left, mut left_mass) = (0.0, 0.0);
        for (i, &(x, y, k)) in chain.edges.iter().enumerate() {
            debug_assert_eq!((x, y), (i, i + 1));
            left += chain.mu[i] * g[i];
            left_mass += chain.mu[i];
            let flux = if left_mass <= right_mass[i + 1] { -left } else { right[i + 1] };
            h[i + 1] = h[i] + flux / k;
        }
        h
    } else {
        let mut a = -chain.symmetrized_matrix();
        for x in 0..n {
            for y in 0..n {
                a[(x, y)] += chain.mu[y];
            }
        }
        let sol = a.lu().solve(&DVector::from_column_slice(g)).ok_or(Error::SingularSystem(f64::INFINITY))?;
        sol.iter().copied().collect()
    };
    let hm = mean(chain.mu(), &h);
    h.iter_mut().for_each(|v| *v -= hm);
    let lh = chain.apply_symmetrized(&h);
    let resid = lh.iter().zip(g).fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
    let qmax = (0..n).fold(0.0f64, |m, x| m.max(-chain.q[(x, x)]));
    let hmax = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scaled = resid / (gmax + qmax * hmax).max(1e-300);
    if !(scaled <= 1e-10) && resid > 1e-300 {
        return Err(Error::SingularSystem(scaled));
    }
    Ok(h)
}

/// Smallest `M` with `|g_x - g_y| <= M d(x, y)`.
pub fn lipschitz_norm(d: &MetricMatrix, g: &[f64]) -> f64 {
    let n = d.n();
    let mut best = 0.0f64;
    for x in 0..n {
        for y in x + 1..n {
            best = best.max((g[x] - g[y]).abs() / d.get(x, y));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli(p: f64) -> ReversibleChain {
        let rates = DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / (1.0 - p), 1.0 / p, 0.0]);
        build_chain(&rates, None).unwrap()
    }

    fn unit_pair() -> ReversibleChain {
        build_chain(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), None).unwrap()
    }

    #[test]
    fn bernoulli_law_and_energy() {
        let c = bernoulli(0.3);
        assert!((c.mu()[0] - 0.7).abs() < 1e-14);
        assert!((c.mu()[1] - 0.3).abs() < 1e-14);
        assert!((dirichlet_energy(&c, &[0.0, 1.0]) - 1.0).abs() < 1e-14);
        assert!((dirichlet_energy(&c, &[2.0, -1.0]) - 9.0).abs() < 1e-13);
    }

    #[test]
    fn symmetric_pair() {
        let c = unit_pair();
        assert_eq!(c.mu(), &[0.5, 0.5]);
        assert!((dirichlet_energy(&c, &[0.0, 1.0]) - 0.5).abs() < 1e-15);
        assert!(dirichlet_energy(&c, &[3.0, 3.0]).abs() < 1e-15);
    }

    #[test]
    fn birth_death_law_matches_nullspace() {
        let up = [0.7, 1.3, 0.4];
        let down = [2.1, 0.6, 1.9];
        let mut rates = DMatrix::zeros(4, 4);
        for i in 0..3 {
            rates[(i, i + 1)] = up[i];
            rates[(i + 1, i)] = down[i];
        }
        let c = build_chain(&rates, None).unwrap();
        // product formula mu_{i+1}/mu_i = up_i / down_i
        let mut w = vec![1.0];
        for i in 0..3 {
            w.push(w[i] * up[i] / down[i]);
        }
        let s: f64 = w.iter().sum();
        for i in 0..4 {
            assert!((c.mu()[i] - w[i] / s).abs() < 1e-14);
        }
        assert!(c.is_birth_death());
    }

    #[test]
    fn construction_errors() {
        let mut r = DMatrix::zeros(3, 3);
        r[(0, 1)] = 1.0;
        r[(1, 0)] = 1.0;
        assert_eq!(build_chain(&r, None).unwrap_err(), Error::NotIrreducible);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            build_chain(&r, Some(&[0.3, 0.7])),
            Err(Error::DetailedBalanceViolated { from: 0, to: 1, .. })
        ));
        assert!(matches!(build_chain(&r, Some(&[0.0, 1.0])), Err(Error::DegenerateMeasure { index: 0, .. })));
        let mut cyc = DMatrix::zeros(3, 3);
        cyc[(0, 1)] = 1.0;
        cyc[(1, 2)] = 1.0;
        cyc[(2, 0)] = 1.0;
        cyc[(1, 0)] = 0.5;
        assert!(matches!(build_chain(&cyc, None), Err(Error::DetailedBalanceViolated { .. })));
    }

    #[test]
    fn information_functionals() {
        let c = unit_pair();
        let f = Density::new(c.mu(), vec![1.5, 0.5]).unwrap();
        let expect = 0.5 * (1.5f64.sqrt() - 0.5f64.sqrt()).powi(2);
        assert!((fisher_information(&c, &f) - expect).abs() < 1e-15);
        assert!((expect - 0.133975).abs() < 1e-6);
        let h = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((relative_entropy(&c, &f) - h).abs() < 1e-15);
        assert!((tv_weighted(&c, &f, &[1.0, 1.0]) - 0.5).abs() < 1e-15);
        let g = Density::new(c.mu(), vec![2.0, 0.0]).unwrap();
        assert!((relative_entropy(&c, &g) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(fisher_information(&c, &Density::uniform(2)), 0.0);
    }

    #[test]
    fn density_validation() {
        let mu = [0.25, 0.75];
        let d = Density::new(&mu, vec![1.0 + 4e-10, 1.0]).unwrap();
        assert!((mean(&mu, d.values()) - 1.0).abs() < 1e-15);
        assert!(Density::new(&mu, vec![1.1, 1.0]).is_err());
        assert!(Density::new(&mu, vec![-0.1, 4.0 / 3.0 + 0.1 / 3.0]).is_err());
        let e = Density::from_measure(&mu, &[0.75, 0.25]).unwrap();
        assert!((e.values()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gap_of_bernoulli() {
        for k in 1..10 {
            let p = k as f64 / 10.0;
            let g = spectral_gap(&bernoulli(p)).unwrap();
            assert!((g.c_p - p * (1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_dense_matches_tridiagonal() {
        let mut rates = DMatrix::zeros(5, 5);
        let up = [0.7, 1.3, 0.4, 2.0];
        let down = [2.1, 0.6, 1.9, 0.3];
        for i in 0..4 {
            rates[(i, i + 1)] = up[i];
            rates[(i + 1, i)] = down[i];
        }
        let c = build_chain(&rates, None).unwrap();
        let tri = spectral_gap(&c).unwrap();
        let (vals, _) = linalg::sym_eigen_sorted(&(-c.symmetric_form(None)));
        assert!((tri.gap - vals[1]).abs() < 1e-12);
        let var = variance(c.mu(), &tri.eigenfunction);
        let en = dirichlet_energy(&c, &tri.eigenfunction);
        assert!((var - tri.c_p * en).abs() < 1e-10);
    }

    #[test]
    fn poisson_pair() {
        let c = unit_pair();
        let h = poisson_solve(&c, &[-1.0, 1.0]).unwrap();
        assert!((h[0] + 0.5).abs() < 1e-14 && (h[1] - 0.5).abs() < 1e-14);
        assert_eq!(poisson_solve(&c, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(poisson_solve(&c, &[1.0, 1.0]), Err(Error::MeanNotZero(_))));
    }

    #[test]
    fn poisson_dense_route() {
        let rates = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 0.5, 2.0, 0.5, 0.0]);
        let c = build_chain(&rates, None).unwrap();
        assert!(!c.is_birth_death());
        let g = [1.0, -2.0, 1.0];
        let h = poisson_solve(&c, &g).unwrap();
        let lh = c.apply_symmetrized(&h);
        for i in 0..3 {
            assert!((lh[i] + g[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_examples() {
        let g = [0.0, 1.0, 2.0];
        assert_eq!(lipschitz_norm(&MetricMatrix::trivial(3), &g), 2.0);
        assert_eq!(lipschitz_norm(&MetricMatrix::line(&[0.0, 1.0, 2.0]).unwrap(), &g), 1.0);
        assert_eq!(lipschitz_norm(&MetricMatrix::trivial(3), &[4.0; 3]), 0.0);
    }

    #[test]
    fn metric_validation_and_line_detection() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 3.0, 1.0, 0.0, 2.0, 3.0, 2.0, 0.0]);
        let m = MetricMatrix::new(d).unwrap();
        assert_eq!(m.line_positions(), Some(&[0.0, 1.0, 3.0][..]));
        let bad = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0]);
        assert!(MetricMatrix::new(bad).is_err());
        assert!(MetricMatrix::trivial(3).line_positions().is_none());
    }
}
