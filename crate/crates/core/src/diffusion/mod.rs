//! One-dimensional diffusions `L h = a h'' + b h'` on an interval: Feller's
//! scale and speed densities, normalization, finite-volume discretization to
//! a reversible birth-death chain, the Lipschitz-Poisson constant `C(rho)`,
//! and the Ornstein-Uhlenbeck closed forms.

pub mod expr;
pub mod quad;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::markov::{build_chain, mean, poisson_solve, Density, ReversibleChain};
pub use expr::Expr;
use quad::{adaptive_simpson, QUAD_TOL};

pub type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Diffusion coefficient `a > 0`, drift `b`, interval `(x0, y0)` with
/// possibly infinite ends, and the reference point `c` of the scale and
/// speed densities.
#[derive(Clone)]
pub struct DiffusionSpec1D {
    a: CoefFn,
    b: CoefFn,
    a_src: Option<String>,
    b_src: Option<String>,
    interval: (f64, f64),
    c_ref: f64,
}

impl fmt::Debug for DiffusionSpec1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec1D")
            .field("a", &self.a_src.as_deref().unwrap_or("<fn>"))
            .field("b", &self.b_src.as_deref().unwrap_or("<fn>"))
            .field("interval", &self.interval)
            .field("c_ref", &self.c_ref)
            .finish()
    }
}

/// JSON form of a diffusion. `null` interval ends are infinite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionFile {
    pub a: Expr,
    pub b: Expr,
    pub interval: [Option<f64>; 2],
    #[serde(default)]
    pub c_ref: f64,
}

impl DiffusionSpec1D {
    pub fn new(a: CoefFn, b: CoefFn, interval: (f64, f64), c_ref: f64) -> Result<Self> {
        let spec = DiffusionSpec1D { a, b, a_src: None, b_src: None, interval, c_ref };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_exprs(a: &str, b: &str, interval: (f64, f64), c_ref: f64) -> Result<Self> {
        let file = DiffusionFile {
            a: Expr::parse(a)?,
            b: Expr::parse(b)?,
            interval: [finite_or_none(interval.0), finite_or_none(interval.1)],
            c_ref,
        };
        Self::from_file(&file)
    }

    pub fn from_file(file: &DiffusionFile) -> Result<Self> {
        let (ea, eb) = (file.a.clone(), file.b.clone());
        let interval = (file.interval[0].unwrap_or(f64::NEG_INFINITY), file.interval[1].unwrap_or(f64::INFINITY));
        let mut spec = Self::new(Arc::new(move |x| ea.eval(x)), Arc::new(move |x| eb.eval(x)), interval, file.c_ref)?;
        spec.a_src = Some(file.a.source().to_string());
        spec.b_src = Some(file.b.source().to_string());
        Ok(spec)
    }

    /// The JSON form, when built from expressions.
    pub fn to_file(&self) -> Option<DiffusionFile> {
        Some(DiffusionFile {
            a: Expr::parse(self.a_src.as_ref()?).ok()?,
            b: Expr::parse(self.b_src.as_ref()?).ok()?,
            interval: [finite_or_none(self.interval.0), finite_or_none(self.interval.1)],
            c_ref: self.c_ref,
        })
    }

    /// `a = 1`, `b = -x` on the line: stationary law N(0, 1).
    pub fn ou() -> Self {
        Self::from_exprs("1", "-x", (f64::NEG_INFINITY, f64::INFINITY), 0.0).expect("valid")
    }

    /// `a = 1`, `b = -x^3` on the line.
    pub fn quartic() -> Self {
        Self::from_exprs("1", "-x^3", (f64::NEG_INFINITY, f64::INFINITY), 0.0).expect("valid")
    }

    /// Brownian motion on `(0, 1)`, reflected at the truncation nodes.
    pub fn unit_interval() -> Self {
        Self::from_exprs("1", "0", (0.0, 1.0), 0.5).expect("valid")
    }

    fn validate(&self) -> Result<()> {
        let (x0, y0) = self.interval;
        if !(x0 < self.c_ref && self.c_ref < y0) {
            return invalid(format!("reference point {} outside ({x0}, {y0})", self.c_ref));
        }
        let lo = if x0.is_finite() { x0 } else { self.c_ref - 10.0 };
        let hi = if y0.is_finite() { y0 } else { self.c_ref + 10.0 };
        for k in 1..200 {
            let x = lo + (hi - lo) * k as f64 / 200.0;
            let (a, b) = (self.a(x), self.b(x));
            if !(a > 0.0 && a.is_finite()) {
                return invalid(format!("diffusion coefficient a({x}) = {a} is not positive"));
            }
            if !b.is_finite() {
                return invalid(format!("drift b({x}) = {b} is not finite"));
            }
        }
        Ok(())
    }

    pub fn a(&self, x: f64) -> f64 {
        (self.a)(x)
    }

    pub fn b(&self, x: f64) -> f64 {
        (self.b)(x)
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn c_ref(&self) -> f64 {
        self.c_ref
    }

    fn contains(&self, x: f64) -> bool {
        self.interval.0 < x && x < self.interval.1
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Strictly increasing nodes inside the interval, at least 16 of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 16 {
            return invalid(format!("grid needs at least 16 nodes, got {}", nodes.len()));
        }
        for i in 1..nodes.len() {
            if !(nodes[i] > nodes[i - 1]) || !nodes[i].is_finite() {
                return Err(Error::UnsortedGrid(i));
            }
        }
        Ok(Grid1D { nodes })
    }

    /// `n` equally spaced nodes from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return invalid("grid needs at least 16 nodes");
        }
        Self::new((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }

    /// Midpoints of `n` equal cells tiling `[lo, hi]`.
    pub fn cell_centered(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect())
    }

    /// Cell-centred grid on a window whose complement carries less than
    /// `1e-8` of the speed measure.
    pub fn auto(spec: &DiffusionSpec1D, n: usize) -> Result<Self> {
        let (lo, hi) = truncation_window(spec, 1e-8)?;
        Self::cell_centered(lo, hi, n)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn steps(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Cell edges: midpoints between nodes, and half a step beyond each end.
    fn edges(&self, spec: &DiffusionSpec1D) -> Vec<f64> {
        let n = self.nodes.len();
        let mut e = Vec::with_capacity(n + 1);
        e.push(self.nodes[0] - 0.5 * (self.nodes[1] - self.nodes[0]));
        for w in self.nodes.windows(2) {
            e.push(0.5 * (w[0] + w[1]));
        }
        e.push(self.nodes[n - 1] + 0.5 * (self.nodes[n - 1] - self.nodes[n - 2]));
        let (x0, y0) = spec.interval;
        e[0] = e[0].max(x0);
        e[n] = e[n].min(y0);
        e
    }
}

/// `int_anchor^{x_i} f` for sorted `xs`, accumulated piece by piece.
fn cumulative<F: Fn(f64) -> f64>(f: &F, xs: &[f64], anchor: f64) -> Result<Vec<f64>> {
    let n = xs.len();
    let k = (0..n).min_by(|&i, &j| (xs[i] - anchor).abs().total_cmp(&(xs[j] - anchor).abs())).unwrap_or(0);
    let mut out = vec![0.0; n];
    out[k] = adaptive_simpson(f, anchor, xs[k], QUAD_TOL)?;
    for i in k + 1..n {
        out[i] = out[i - 1] + adaptive_simpson(f, xs[i - 1], xs[i], QUAD_TOL)?;
    }
    for i in (0..k).rev() {
        out[i] = out[i + 1] - adaptive_simpson(f, xs[i], xs[i + 1], QUAD_TOL)?;
    }
    Ok(out)
}

fn drift_ratio_fn(spec: &DiffusionSpec1D) -> impl Fn(f64) -> f64 + '_ {
    move |x| spec.b(x) / spec.a(x)
}

/// `(s'(x), m'(x))` with `s' = exp(-int_c^x b/a)` and `m' = 1/(a s')`.
pub fn scale_speed(spec: &DiffusionSpec1D, x: f64) -> Result<(f64, f64)> {
    if !spec.contains(x) {
        return invalid(format!("{x} outside the interval"));
    }
    let ls = -adaptive_simpson(drift_ratio_fn(spec), spec.c_ref, x, QUAD_TOL)?;
    Ok((ls.exp(), (-ls).exp() / spec.a(x)))
}

/// `rho_a(x) = int_c^x a^{-1/2}`, the intrinsic distance to `c`.
pub fn rho_a(spec: &DiffusionSpec1D, x: f64) -> Result<f64> {
    if !spec.contains(x) {
        return invalid(format!("{x} outside the interval"));
    }
    adaptive_simpson(|z| 1.0 / spec.a(z).sqrt(), spec.c_ref, x, QUAD_TOL)
}

const SUB: usize = 4;
const TAIL_DROP: f64 = 60.0;

/// Log scale and speed densities on a fine mesh covering a grid and the
/// decayed tails beyond it. Breakpoints (nodes and cell edges) sit at even
/// mesh indices so composite Simpson never straddles them.
struct Profile {
    x: Vec<f64>,
    lm: Vec<f64>,
    lmax: f64,
    node_idx: Vec<usize>,
    edge_idx: Vec<usize>,
}

impl Profile {
    fn build(spec: &DiffusionSpec1D, grid: &Grid1D) -> Result<Self> {
        let nodes = grid.nodes();
        if !spec.contains(nodes[0]) || !spec.contains(nodes[nodes.len() - 1]) {
            return invalid("grid nodes must lie inside the interval");
        }
        let edges = grid.edges(spec);
        let mut breaks = Vec::with_capacity(2 * nodes.len() + 1);
        for i in 0..nodes.len() {
            breaks.push(edges[i]);
            breaks.push(nodes[i]);
        }
        breaks.push(edges[nodes.len()]);
        let left = tail_breaks(spec, edges[0], -1.0, grid)?;
        let right = tail_breaks(spec, edges[nodes.len()], 1.0, grid)?;
        let mut all: Vec<f64> = left.into_iter().rev().collect();
        let offset = all.len();
        all.extend_from_slice(&breaks);
        all.extend(right);
        let all = nudge_ends(spec, all);

        let mut x = Vec::with_capacity(SUB * all.len());
        for w in all.windows(2) {
            for k in 0..SUB {
                x.push(w[0] + (w[1] - w[0]) * k as f64 / SUB as f64);
            }
        }
        x.push(all[all.len() - 1]);
        let node_idx = (0..nodes.len()).map(|i| SUB * (offset + 2 * i + 1)).collect();
        let edge_idx = (0..=nodes.len()).map(|i| SUB * (offset + 2 * i)).collect();
        let cum = cumulative(&drift_ratio_fn(spec), &x, spec.c_ref)?;
        let ls: Vec<f64> = cum.iter().map(|v| -v).collect();
        let lm: Vec<f64> = x.iter().zip(&ls).map(|(&xi, l)| -l - spec.a(xi).ln()).collect();
        if lm.iter().any(|v| v.is_nan()) {
            return Err(Error::QuadratureFailure(x[0], x[x.len() - 1]));
        }
        let lmax = lm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Profile { x, lm, lmax, node_idx, edge_idx })
    }

    /// Shifted speed density `exp(lm - lmax)` on the mesh.
    fn weights(&self) -> Vec<f64> {
        self.lm.iter().map(|l| (l - self.lmax).exp()).collect()
    }

    fn last(&self) -> usize {
        self.x.len() - 1
    }
}

/// Keep evaluation points strictly inside finite interval ends.
fn nudge_ends(spec: &DiffusionSpec1D, mut b: Vec<f64>) -> Vec<f64> {
    let (x0, y0) = spec.interval;
    let n = b.len();
    if b[0] <= x0 {
        b[0] = x0 + 1e-9 * (1.0 + x0.abs()).min(b[1] - x0);
    }
    if b[n - 1] >= y0 {
        b[n - 1] = y0 - 1e-9 * (1.0 + y0.abs()).min(y0 - b[n - 2]);
    }
    b
}

/// Breakpoints extending outward from `start` until the speed density has
/// dropped by `exp(-TAIL_DROP)`, or up to a finite interval end. Steps are
/// sized so `log m'` changes by about 1/4 per segment.
fn tail_breaks(spec: &DiffusionSpec1D, start: f64, dir: f64, grid: &Grid1D) -> Result<Vec<f64>> {
    let end = if dir > 0.0 { spec.interval.1 } else { spec.interval.0 };
    if end.is_finite() {
        return Ok(if (end - start).abs() > 0.0 { vec![end] } else { vec![] });
    }
    let nodes = grid.nodes();
    let h_min = grid.steps().into_iter().fold(f64::INFINITY, f64::min);
    let mut seg_max = (nodes[nodes.len() - 1] - nodes[0]) / 16.0;
    let f = drift_ratio_fn(spec);
    let lm_at = |x: f64, ls: f64| -ls - spec.a(x).ln();
    let mut ls = -adaptive_simpson(&f, spec.c_ref, start, QUAD_TOL)?;
    let lm_start = lm_at(start, ls);
    let mut x = start;
    let mut out = Vec::new();
    for k in 0..4096 {
        if k > 0 && k % 16 == 0 {
            seg_max *= 2.0;
        }
        let step = (0.25 / f(x).abs()).max(h_min).min(seg_max);
        let nx = x + dir * step;
        ls -= adaptive_simpson(&f, x, nx, QUAD_TOL)?;
        x = nx;
        out.push(x);
        let lm = lm_at(x, ls);
        if lm.is_nan() {
            return Err(Error::QuadratureFailure(start, x));
        }
        if lm < lm_start - TAIL_DROP {
            return Ok(out);
        }
    }
    Err(Error::DivergentSpeedMeasure(x))
}

/// Composite Simpson over even mesh indices `i..j`.
fn simpson_range(x: &[f64], y: &[f64], i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    let mut k = i;
    while k + 2 <= j {
        acc += (x[k + 2] - x[k]) / 6.0 * (y[k] + 4.0 * y[k + 1] + y[k + 2]);
        k += 2;
    }
    acc
}

/// Composite Simpson running integral at even mesh indices (odd entries are
/// interpolated and should not be used).
fn simpson_cumulative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![0.0; n];
    let mut i = 0;
    while i + 2 < n {
        let h = x[i + 2] - x[i];
        let v = h / 6.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
        c[i + 1] = c[i] + 0.5 * v;
        c[i + 2] = c[i] + v;
        i += 2;
    }
    c
}

/// Same, accumulated from the right end: `int_{x_i}^{end} y`.
fn simpson_cumulative_rev(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![0.0; n];
    let mut i = n - 1;
    while i >= 2 {
        let h = x[i] - x[i - 2];
        let v = h / 6.0 * (y[i - 2] + 4.0 * y[i - 1] + y[i]);
        c[i - 1] = c[i] + 0.5 * v;
        c[i - 2] = c[i] + v;
        i -= 2;
    }
    c
}

/// Speed-measure normalization on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct Normalization {
    /// `Z = int m'` over the whole interval (may overflow to infinity when
    /// the speed density is astronomically large somewhere).
    pub z: f64,
    pub log_z: f64,
    /// Node masses: cell integrals of `m'/Z`, tails folded into the end cells.
    pub mu: Vec<f64>,
    /// Speed mass outside the outer cell edges, relative to `Z`.
    pub truncation_mass: f64,
}

pub fn normalize(spec: &DiffusionSpec1D, grid: &Grid1D) -> Result<Normalization> {
    let p = Profile::build(spec, grid)?;
    check_tail_decay(spec, &p)?;
    let w = p.weights();
    let n = grid.len();
    let cells: Vec<f64> = (0..n)
        .map(|i| {
            let lo = if i == 0 { 0 } else { p.edge_idx[i] };
            let hi = if i == n - 1 { p.last() } else { p.edge_idx[i + 1] };
            simpson_range(&p.x, &w, lo, hi)
        })
        .collect();
    let total: f64 = cells.iter().sum();
    let mu: Vec<f64> = cells.iter().map(|c| c / total).collect();
    let outside = simpson_range(&p.x, &w, 0, p.edge_idx[0]) + simpson_range(&p.x, &w, p.edge_idx[n], p.last());
    let log_z = p.lmax + total.ln();
    Ok(Normalization { z: log_z.exp(), log_z, mu, truncation_mass: outside / total })
}

/// Ratio test: on each infinite side the speed density must decrease
/// outward across the last 10% of nodes.
fn check_tail_decay(spec: &DiffusionSpec1D, p: &Profile) -> Result<()> {
    let n = p.node_idx.len();
    let k = (n / 10).max(2);
    if spec.interval.1.is_infinite() {
        for i in n - k..n - 1 {
            if p.lm[p.node_idx[i + 1]] >= p.lm[p.node_idx[i]] {
                return Err(Error::DivergentSpeedMeasure(p.x[p.node_idx[i + 1]]));
            }
        }
    }
    if spec.interval.0.is_infinite() {
        for i in 0..k - 1 {
            if p.lm[p.node_idx[i]] >= p.lm[p.node_idx[i + 1]] {
                return Err(Error::DivergentSpeedMeasure(p.x[p.node_idx[i]]));
            }
        }
    }
    Ok(())
}

/// Window `[lo, hi]` around `c` outside which the speed measure has
/// relative mass below `tol`; finite interval ends are kept.
pub fn truncation_window(spec: &DiffusionSpec1D, tol: f64) -> Result<(f64, f64)> {
    let (x0, y0) = spec.interval;
    let c = spec.c_ref;
    let mut reach = [0.0f64; 2];
    for (s, dir) in [(0usize, -1.0f64), (1, 1.0)] {
        let end = if dir > 0.0 { y0 } else { x0 };
        if end.is_finite() {
            reach[s] = end;
            continue;
        }
        let f = drift_ratio_fn(spec);
        let mut ls = 0.0;
        let mut x = c;
        let mut lm_peak = -spec.a(c).ln();
        let mut step = 0.01;
        let mut done = false;
        for _ in 0..4000 {
            let nx = x + dir * step;
            ls -= adaptive_simpson(&f, x, nx, QUAD_TOL)?;
            x = nx;
            let lm = -ls - spec.a(x).ln();
            if lm.is_nan() {
                return Err(Error::QuadratureFailure(c, x));
            }
            lm_peak = lm_peak.max(lm);
            if lm < lm_peak - 45.0 {
                done = true;
                break;
            }
            step = (step * 1.05).min(1.0 + x.abs() * 0.05);
        }
        if !done {
            return Err(Error::DivergentSpeedMeasure(x));
        }
        reach[s] = x;
    }
    let coarse = Grid1D::uniform(reach[0].max(x0 + 1e-9 * (1.0 + x0.abs())), reach[1].min(y0 - 1e-9 * (1.0 + y0.abs())), 2000)?;
    let p = Profile::build(spec, &coarse)?;
    let w = p.weights();
    let cum = simpson_cumulative(&p.x, &w);
    let total = cum[p.last()];
    let nodes = coarse.nodes();
    let mut lo = if x0.is_finite() { x0 } else { nodes[0] };
    let mut hi = if y0.is_finite() { y0 } else { nodes[nodes.len() - 1] };
    if x0.is_infinite() {
        for (i, &k) in p.node_idx.iter().enumerate() {
            if cum[k] > 0.5 * tol * total {
                lo = nodes[i.saturating_sub(1)];
                break;
            }
        }
    }
    if y0.is_infinite() {
        for (i, &k) in p.node_idx.iter().enumerate().rev() {
            if total - cum[k] > 0.5 * tol * total {
                hi = nodes[(i + 1).min(nodes.len() - 1)];
                break;
            }
        }
    }
    Ok((lo, hi))
}

/// Finite-volume birth-death chain on the grid nodes: `mu_i` the cell
/// speed mass, conductance `kappa_{i,i+1} = 1/(s'(mid) (x_{i+1} - x_i) Z)`.
/// Its Dirichlet form approximates `int a (g')^2 dmu`.
pub fn discretize(spec: &DiffusionSpec1D, grid: &Grid1D) -> Result<ReversibleChain> {
    let p = Profile::build(spec, grid)?;
    let norm = normalize(spec, grid)?;
    let total = (norm.log_z - p.lmax).exp();
    let nodes = grid.nodes();
    let n = nodes.len();
    let mut rates = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        let k = p.edge_idx[i + 1];
        // 1/s' = a m'
        let kappa = spec.a(p.x[k]) * (p.lm[k] - p.lmax).exp() / ((nodes[i + 1] - nodes[i]) * total);
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::StepTooCoarse(kappa));
        }
        rates[(i, i + 1)] = kappa / norm.mu[i];
        rates[(i + 1, i)] = kappa / norm.mu[i + 1];
    }
    match build_chain(&rates, Some(&norm.mu)) {
        Err(Error::DetailedBalanceViolated { residual, .. }) => Err(Error::StepTooCoarse(residual)),
        other => other,
    }
}

/// Increasing metric function `rho` for `C(rho)`.
#[derive(Clone)]
pub enum Rho {
    Identity,
    /// `x + eps tanh(x)`.
    TanhWarp(f64),
    /// The intrinsic distance `rho_a`.
    Intrinsic,
    Custom { f: CoefFn, df: CoefFn },
}

impl fmt::Debug for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rho::Identity => write!(f, "Identity"),
            Rho::TanhWarp(e) => write!(f, "TanhWarp({e})"),
            Rho::Intrinsic => write!(f, "Intrinsic"),
            Rho::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Rho {
    /// Values and derivatives at sorted points.
    pub fn eval_sorted(&self, spec: &DiffusionSpec1D, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(match self {
            Rho::Identity => (xs.to_vec(), vec![1.0; xs.len()]),
            Rho::TanhWarp(e) => (
                xs.iter().map(|x| x + e * x.tanh()).collect(),
                xs.iter().map(|x| 1.0 + e / x.cosh().powi(2)).collect(),
            ),
            Rho::Intrinsic => {
                let f = |z: f64| 1.0 / spec.a(z).sqrt();
                (cumulative(&f, xs, spec.c_ref)?, xs.iter().map(|&x| f(x)).collect())
            }
            Rho::Custom { f, df } => (xs.iter().map(|&x| f(x)).collect(), xs.iter().map(|&x| df(x)).collect()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CRhoVariant {
    /// `sup s'(x)/rho'(x) int_x^{y0} (rho - mu(rho)) m'`.
    #[default]
    Corrected,
    /// The same without the `s'(x)` factor.
    Literal,
}

/// `C(rho)`, the supremum over grid nodes. The tail integral is taken from
/// whichever side avoids cancellation.
pub fn c_rho(spec: &DiffusionSpec1D, rho: &Rho, grid: &Grid1D, variant: CRhoVariant) -> Result<f64> {
    let p = Profile::build(spec, grid)?;
    let (r, dr) = rho.eval_sorted(spec, &p.x)?;
    let w = p.weights();
    let total = *simpson_cumulative(&p.x, &w).last().unwrap();
    let rw: Vec<f64> = r.iter().zip(&w).map(|(a, b)| a * b).collect();
    let r2w: Vec<f64> = r.iter().zip(&w).map(|(a, b)| a * a * b).collect();
    let mean_rho = simpson_cumulative(&p.x, &rw)[p.last()] / total;
    let mean_rho2 = simpson_cumulative(&p.x, &r2w)[p.last()] / total;
    if !mean_rho2.is_finite() {
        return Err(Error::DivergenceDetected(mean_rho2));
    }
    let g: Vec<f64> = r.iter().zip(&w).map(|(a, b)| (a - mean_rho) * b).collect();
    let left = simpson_cumulative(&p.x, &g);
    let right = simpson_cumulative_rev(&p.x, &g);
    let mut sup = f64::NEG_INFINITY;
    for &k in &p.node_idx {
        if !(dr[k] > 0.0) {
            return invalid(format!("rho' = {} is not positive at {}", dr[k], p.x[k]));
        }
        let tail = if r[k] >= mean_rho { right[k] } else { -left[k] };
        let v = match variant {
            CRhoVariant::Corrected => tail * (p.lmax - p.lm[k]).exp() / (spec.a(p.x[k]) * dr[k]),
            CRhoVariant::Literal => tail * p.lmax.exp() / dr[k],
        };
        sup = sup.max(v);
    }
    if !sup.is_finite() || sup > 1e12 {
        return Err(Error::DivergenceDetected(sup));
    }
    Ok(sup)
}

/// `sup_g ||h||_Lip(rho) / ||g||_Lip(rho)` over the samples and the witness
/// `g = rho - mu(rho)`, with `h` the discrete Poisson solution on the
/// discretized chain.
pub fn lip_poisson_ratio(spec: &DiffusionSpec1D, grid: &Grid1D, rho: &Rho, g_samples: &[Vec<f64>]) -> Result<f64> {
    let chain = discretize(spec, grid)?;
    let (r, _) = rho.eval_sorted(spec, grid.nodes())?;
    let mu = chain.mu();
    let lip = |v: &[f64]| {
        (0..v.len() - 1).map(|i| (v[i + 1] - v[i]).abs() / (r[i + 1] - r[i])).fold(0.0, f64::max)
    };
    let mut best = 0.0f64;
    for g in std::iter::once(&r).chain(g_samples) {
        if g.len() != mu.len() {
            return invalid("observable length differs from the grid");
        }
        let m = mean(mu, g);
        let gc: Vec<f64> = g.iter().map(|v| v - m).collect();
        let lg = lip(&gc);
        if lg < 1e-14 {
            continue;
        }
        let h = poisson_solve(&chain, &gc)?;
        best = best.max(lip(&h) / lg);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NonExplosion {
    Divergent,
    Inconclusive,
}

/// Growth of `J(y) = int_c^y s'(x) int_c^x m'(z) dz dx` toward one end.
#[derive(Debug, Clone, Serialize)]
pub struct SideEvidence {
    pub cutoff: f64,
    /// `log J` at 16 equally spaced checkpoints up to the cutoff.
    pub log_j: Vec<f64>,
    /// Slope of `log log J` against `log |y - c|` over the last half.
    pub growth_exponent: f64,
    pub divergent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonExplosionReport {
    pub verdict: NonExplosion,
    pub left: SideEvidence,
    pub right: SideEvidence,
}

/// Evidence that both ends are inaccessible. `cutoff` bounds the right
/// side; the left side uses its mirror image around `c` (clipped to the
/// interval). Never claims convergence.
pub fn check_nonexplosion(spec: &DiffusionSpec1D, cutoff: f64) -> Result<NonExplosionReport> {
    if !spec.contains(cutoff) || cutoff <= spec.c_ref {
        return invalid("cutoff must lie inside the interval, right of the reference point");
    }
    let c = spec.c_ref;
    let x0 = spec.interval.0;
    let left_cut = (2.0 * c - cutoff).max(x0 + 1e-9 * (1.0 + x0.abs()).min(c - x0));
    let right = side_evidence(spec, cutoff)?;
    let left = side_evidence(spec, left_cut)?;
    let verdict = if left.divergent && right.divergent { NonExplosion::Divergent } else { NonExplosion::Inconclusive };
    Ok(NonExplosionReport { verdict, left, right })
}

fn side_evidence(spec: &DiffusionSpec1D, cut: f64) -> Result<SideEvidence> {
    let c = spec.c_ref;
    let m = 2048;
    let xs: Vec<f64> = (0..=m).map(|k| c + (cut - c) * k as f64 / m as f64).collect();
    let ls: Vec<f64> = cumulative(&drift_ratio_fn(spec), &xs, c)?.iter().map(|v| -v).collect();
    let lm: Vec<f64> = xs.iter().zip(&ls).map(|(&x, l)| -l - spec.a(x).ln()).collect();
    let lmax = lm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lm.iter().map(|l| (l - lmax).exp()).collect();
    // |int_c^x m'| in units of exp(lmax); orientation cancels in the product
    let inner: Vec<f64> = simpson_cumulative(&xs, &w).iter().map(|v| v.abs()).collect();
    let log_integrand: Vec<f64> = (0..=m).map(|k| ls[k] + lmax + inner[k].ln()).collect();
    let h = (cut - c).abs() / m as f64;
    let mut log_j = Vec::new();
    let mut acc = f64::NEG_INFINITY;
    let mut k = 0;
    while k + 2 <= m {
        for (wt, idx) in [(1.0, k), (4.0, k + 1), (1.0, k + 2)] {
            acc = log_add(acc, (wt * h / 3.0).ln() + log_integrand[idx]);
        }
        k += 2;
        if k % (m / 16) == 0 {
            log_j.push(acc);
        }
    }
    let half = log_j.len() / 2;
    let pts: Vec<(f64, f64)> = (half..log_j.len())
        .filter(|&i| log_j[i] > 1.0)
        .map(|i| (((i + 1) as f64 / 16.0 * (cut - c).abs()).ln(), log_j[i].ln()))
        .collect();
    let growth_exponent = if pts.len() >= 2 { slope(&pts) } else { f64::NAN };
    let incr: Vec<f64> = log_j[half..].windows(2).map(|w| w[1] - w[0]).collect();
    let convex = incr.windows(2).all(|w| w[1] >= w[0] - 1e-9) && incr.iter().all(|&d| d > 0.0);
    let divergent = *log_j.last().unwrap() >= 1e6f64.ln() && convex;
    Ok(SideEvidence { cutoff: cut, log_j, growth_exponent, divergent })
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Variance of `(1/t) int_0^t X_s ds` for the stationary OU process:
/// `2/t - 2(1 - e^{-t})/t^2`.
pub fn ou_sigma2(t: f64) -> f64 {
    if t < 1e-4 {
        // series avoids cancellation: 1 - t/3 + t^2/12
        return 1.0 - t / 3.0 + t * t / 12.0;
    }
    2.0 / t - 2.0 * (-(-t).exp_m1()) / (t * t)
}

/// `(1/t) log P(N(0, sigma2(t)) > r)`.
pub fn ou_tail_lograte(r: f64, t: f64) -> f64 {
    log_gauss_tail(r / ou_sigma2(t).sqrt()) / t
}

/// `log P(Z > z)` for standard normal `Z`, stable far into the tail.
pub fn log_gauss_tail(z: f64) -> f64 {
    if z < 5.0 {
        return (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln();
    }
    // Mills ratio by continued fraction (modified Lentz):
    // Q(z) = phi(z) / (z + 1/(z + 2/(z + 3/(z + ...))))
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - f.ln()
}

/// `inf -(|sigma(y) - sigma(x)|_F^2 + <y - x, b(y) - b(x)>) / |y - x|^2` over
/// sampled pairs. A sampled estimate, not a certified bound.
pub fn dissipativity_margin(
    sigma: &dyn Fn(&[f64]) -> DMatrix<f64>,
    b: &dyn Fn(&[f64]) -> Vec<f64>,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> f64 {
    let mut inf = f64::INFINITY;
    for (x, y) in pairs {
        let dist2: f64 = x.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum();
        if dist2 == 0.0 {
            continue;
        }
        let ds = sigma(y) - sigma(x);
        let (bx, by) = (b(x), b(y));
        let drift: f64 = (0..x.len()).map(|i| (y[i] - x[i]) * (by[i] - bx[i])).sum();
        inf = inf.min(-(ds.norm_squared() + drift) / dist2);
    }
    inf
}

/// `n` uniform pairs in the box `[-half_width, half_width]^dim`.
pub fn sample_pairs(dim: usize, half_width: f64, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (0..dim).map(|_| half_width * (2.0 * rng.random::<f64>() - 1.0)).collect::<Vec<f64>>();
    (0..n).map(|_| (draw(), draw())).collect()
}

/// Density of the shifted Gaussian `N(m, 1)` against the discretized
/// `N(0, 1)`: weights `exp(m x_i)`.
pub fn gaussian_shift_density(nodes: &[f64], mu: &[f64], m: f64) -> Result<Density> {
    let w: Vec<f64> = nodes.iter().map(|x| (m * x).exp()).collect();
    Density::from_weights(mu, &w)
}
