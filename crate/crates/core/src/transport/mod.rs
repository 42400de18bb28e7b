//! Transportation costs on finite spaces: exact optimal transport with
//! Kantorovich potentials, Wasserstein distances, product (sum) costs and the
//! rate-function calculus.

mod rate;
mod simplex;

pub use rate::{alpha_conjugate, alpha_infconv, alpha_infconv_identical, RateFunction};
pub(crate) use rate::golden_min;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::markov::{fisher_information, Density, MetricMatrix, ReversibleChain};

const MARGINAL_TOL: f64 = 1e-9;
const DUALITY_TOL: f64 = 1e-9;
const MAX_PRODUCT_ENTRIES: usize = 10_000;

/// A nonnegative cost matrix `c(x, y)`; rows index the first marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(DMatrix<f64>);

impl CostMatrix {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if c.nrows() == 0 || c.ncols() == 0 {
            return invalid("cost matrix is empty");
        }
        if let Some(v) = c.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return invalid(format!("cost entry {v} is not a nonnegative number"));
        }
        Ok(CostMatrix(c))
    }

    /// A square cost that must vanish on the diagonal.
    pub fn square(c: DMatrix<f64>) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return invalid("cost matrix is not square");
        }
        if (0..c.nrows()).any(|i| c[(i, i)] != 0.0) {
            return invalid("square cost must vanish on the diagonal");
        }
        Self::new(c)
    }

    pub fn from_metric(d: &MetricMatrix) -> Self {
        CostMatrix(d.matrix().clone())
    }

    pub fn squared_metric(d: &MetricMatrix) -> Self {
        CostMatrix(d.squared())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0[(x, y)]
    }
}

/// Transport plan with row marginal `nu` and column marginal `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub pi: DMatrix<f64>,
}

impl Coupling {
    pub fn row_sums(&self) -> Vec<f64> {
        self.pi.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.pi.column_iter().map(|c| c.sum()).collect()
    }
}

/// Optimal primal and dual solution of one transport problem.
#[derive(Debug, Clone)]
pub struct OtSolution {
    pub value: f64,
    pub coupling: Coupling,
    /// Dual value `<u, nu> - <v, mu>`.
    pub dual_value: f64,
    /// Potentials with `u(x) - v(y) <= c(x, y)`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn check_marginal(p: &[f64], name: &str) -> Result<f64> {
    if p.is_empty() {
        return invalid(format!("{name} is empty"));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return invalid(format!("{name} has entry {v}"));
    }
    Ok(p.iter().sum())
}

/// Exact optimal transport of `nu` (rows) onto `mu` (columns).
pub fn solve_ot(c: &CostMatrix, nu: &[f64], mu: &[f64]) -> Result<OtSolution> {
    if nu.len() != c.rows() || mu.len() != c.cols() {
        return invalid(format!(
            "marginal lengths ({}, {}) do not match a {}x{} cost",
            nu.len(),
            mu.len(),
            c.rows(),
            c.cols()
        ));
    }
    let sn = check_marginal(nu, "nu")?;
    let sm = check_marginal(mu, "mu")?;
    if (sn - sm).abs() > MARGINAL_TOL || (sn - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::InfeasibleMarginals(sn, sm));
    }
    let a: Vec<f64> = nu.iter().map(|v| v / sn).collect();
    let b: Vec<f64> = mu.iter().map(|v| v / sm).collect();
    let sol = simplex::solve(c.matrix(), &a, &b);
    let u = sol.row.clone();
    let v: Vec<f64> = sol.col.iter().map(|x| -x).collect();
    let dual_value = dot(&u, &a) - dot(&v, &b);
    let scale = c.matrix().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    debug_assert!(
        (sol.value - dual_value).abs() <= DUALITY_TOL * scale,
        "duality gap {} after {} pivots",
        sol.value - dual_value,
        sol.pivots
    );
    Ok(OtSolution { value: sol.value, coupling: Coupling { pi: sol.flow }, dual_value, u, v })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `T_c(nu, mu)` and an optimal coupling.
pub fn ot_cost(c: &CostMatrix, nu: &[f64], mu: &[f64]) -> Result<(f64, Coupling)> {
    let s = solve_ot(c, nu, mu)?;
    Ok((s.value, s.coupling))
}

/// Optimal Kantorovich potentials `(value, u, v)` with `u(x) - v(y) <= c(x, y)`.
pub fn kantorovich_dual(c: &CostMatrix, nu: &[f64], mu: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let s = solve_ot(c, nu, mu)?;
    Ok((s.dual_value, s.u, s.v))
}

/// `W_1(nu, mu)`. Metrics isometric to a line use the CDF formula.
pub fn w1(d: &MetricMatrix, nu: &[f64], mu: &[f64]) -> Result<f64> {
    w1_with_potential(d, nu, mu).map(|(v, _)| v)
}

/// `W_1` together with a 1-Lipschitz potential `w` attaining
/// `W_1 = <w, nu - mu>`.
pub fn w1_with_potential(d: &MetricMatrix, nu: &[f64], mu: &[f64]) -> Result<(f64, Vec<f64>)> {
    if let Some(p) = d.line_positions() {
        if nu.len() != p.len() || mu.len() != p.len() {
            return invalid("marginal length does not match metric");
        }
        let sn = check_marginal(nu, "nu")?;
        let sm = check_marginal(mu, "mu")?;
        if (sn - sm).abs() > MARGINAL_TOL || (sn - 1.0).abs() > MARGINAL_TOL {
            return Err(Error::InfeasibleMarginals(sn, sm));
        }
        let n = p.len();
        let mut cum = 0.0;
        let mut value = 0.0;
        let mut w = vec![0.0; n];
        let mut signs = vec![0.0; n];
        for k in 0..n - 1 {
            cum += nu[k] / sn - mu[k] / sm;
            let gap = p[k + 1] - p[k];
            value += cum.abs() * gap;
            signs[k] = if cum > 0.0 {
                1.0
            } else if cum < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        for k in (0..n - 1).rev() {
            w[k] = w[k + 1] + signs[k] * (p[k + 1] - p[k]);
        }
        return Ok((value, w));
    }
    let s = solve_ot(&CostMatrix::from_metric(d), nu, mu)?;
    Ok((s.value, s.u))
}

/// `W_2(nu, mu) = sqrt(T_{d^2}(nu, mu))`.
pub fn w2(d: &MetricMatrix, nu: &[f64], mu: &[f64]) -> Result<f64> {
    let (v, _) = ot_cost(&CostMatrix::squared_metric(d), nu, mu)?;
    Ok(v.max(0.0).sqrt())
}

/// `W_2` on the real line by the monotone (quantile) coupling.
pub fn w2_quantile_1d(grid: &[f64], nu: &[f64], mu: &[f64]) -> Result<f64> {
    for i in 1..grid.len() {
        if !(grid[i] > grid[i - 1]) {
            return Err(Error::UnsortedGrid(i));
        }
    }
    if nu.len() != grid.len() || mu.len() != grid.len() {
        return invalid("marginal length does not match grid");
    }
    let sn = check_marginal(nu, "nu")?;
    let sm = check_marginal(mu, "mu")?;
    if (sn - sm).abs() > MARGINAL_TOL {
        return Err(Error::InfeasibleMarginals(sn, sm));
    }
    let n = grid.len();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (nu[0] / sn, mu[0] / sm);
    let mut total = 0.0;
    while i < n && j < n {
        let m = ra.min(rb);
        total += m * (grid[i] - grid[j]).powi(2);
        ra -= m;
        rb -= m;
        if ra <= rb {
            i += 1;
            if i < n {
                ra = nu[i] / sn;
            }
        } else {
            j += 1;
            if j < n {
                rb = mu[j] / sm;
            }
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// Row-major multi-index of `idx` in a product with factor sizes `dims`
/// (first factor most significant).
pub fn product_decode(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
    out
}

/// Inverse of [`product_decode`].
pub fn product_encode(coords: &[usize], dims: &[usize]) -> usize {
    coords.iter().zip(dims).fold(0, |acc, (&c, &d)| acc * d + c)
}

/// Product measure in row-major order.
pub fn product_measure(factors: &[&[f64]]) -> Vec<f64> {
    let dims: Vec<usize> = factors.iter().map(|f| f.len()).collect();
    let total: usize = dims.iter().product();
    (0..total)
        .map(|k| product_decode(k, &dims).iter().zip(factors).map(|(&i, f)| f[i]).product())
        .collect()
}

/// Sum cost `sum_i c_i(x_i, y_i)` on the product space, row-major indexing.
pub fn tensor_cost(costs: &[CostMatrix]) -> Result<CostMatrix> {
    if costs.is_empty() {
        return invalid("tensor_cost needs at least one factor");
    }
    let mut dims = Vec::with_capacity(costs.len());
    for c in costs {
        if c.rows() != c.cols() {
            return invalid("tensor_cost factors must be square");
        }
        dims.push(c.rows());
    }
    let size = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
    let entries = size.saturating_mul(size);
    if entries > MAX_PRODUCT_ENTRIES {
        return Err(Error::ProductTooLarge(entries));
    }
    let decoded: Vec<Vec<usize>> = (0..size).map(|k| product_decode(k, &dims)).collect();
    let m = DMatrix::from_fn(size, size, |x, y| {
        costs.iter().enumerate().map(|(i, c)| c.get(decoded[x][i], decoded[y][i])).sum()
    });
    Ok(CostMatrix(m))
}

/// Conditional laws of coordinate `i` given the others under the product
/// space probability `nu`: pairs `(weight of the conditioning value, law)`.
fn conditionals(nu: &[f64], dims: &[usize], i: usize) -> Vec<(f64, Vec<f64>)> {
    let size: usize = dims.iter().product();
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for k in 0..size {
        let mut coords = product_decode(k, dims);
        let xi = coords[i];
        coords[i] = 0;
        let key = product_encode(&coords, dims);
        groups.entry(key).or_insert_with(|| vec![0.0; dims[i]])[xi] += nu[k];
    }
    groups
        .into_values()
        .filter_map(|law| {
            let w: f64 = law.iter().sum();
            (w > 0.0).then(|| (w, law.iter().map(|v| v / w).collect()))
        })
        .collect()
}

/// Both sides of `T_{sum c}(mu, nu) <= E^nu sum_i T_{c_i}(mu_i, nu_i)`, where
/// `mu` is the product of `mus`, `nu = f mu` and `nu_i` is the conditional
/// law of `x_i` given the other coordinates.
pub fn tensor_subadditivity_check(costs: &[CostMatrix], mus: &[&[f64]], f: &Density) -> Result<(f64, f64)> {
    if costs.len() != mus.len() {
        return invalid("one marginal per cost factor required");
    }
    let dims: Vec<usize> = mus.iter().map(|m| m.len()).collect();
    let big = tensor_cost(costs)?;
    let mu = product_measure(mus);
    if f.len() != mu.len() {
        return invalid("density length does not match the product space");
    }
    let nu = f.measure(&mu);
    let (lhs, _) = ot_cost(&big, &mu, &nu)?;
    let mut rhs = 0.0;
    for (i, c) in costs.iter().enumerate() {
        for (w, law) in conditionals(&nu, &dims, i) {
            rhs += w * ot_cost(c, mus[i], &law)?.0;
        }
    }
    Ok((lhs, rhs))
}

/// Both sides of the additivity identity `I(nu | mu) = E^nu sum_i I_i(nu_i | mu_i)`
/// for the product chain of `chains` and a density `f` on the product space.
pub fn fisher_additivity_check(chains: &[&ReversibleChain], f: &Density) -> Result<(f64, f64)> {
    let product = crate::markov::product_chain(chains)?;
    let dims: Vec<usize> = chains.iter().map(|c| c.n()).collect();
    let nu = f.measure(product.mu());
    let lhs = fisher_information(&product, f);
    let mut rhs = 0.0;
    for (i, chain) in chains.iter().enumerate() {
        for (w, law) in conditionals(&nu, &dims, i) {
            let fi = Density::from_measure(chain.mu(), &law)?;
            rhs += w * fisher_information(chain, &fi);
        }
    }
    Ok((lhs, rhs))
}

/// `Qv(x) = min_y { v(y) + c(x, y) }`.
pub fn infconv_potential(c: &CostMatrix, v: &[f64]) -> Vec<f64> {
    (0..c.rows()).map(|x| (0..c.cols()).map(|y| v[y] + c.get(x, y)).fold(f64::INFINITY, f64::min)).collect()
}

/// `Su(y) = max_x { u(x) - c(x, y) }`.
pub fn supconv_potential(c: &CostMatrix, u: &[f64]) -> Vec<f64> {
    (0..c.cols()).map(|y| (0..c.rows()).map(|x| u[x] - c.get(x, y)).fold(f64::NEG_INFINITY, f64::max)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial_cost(n: usize) -> CostMatrix {
        CostMatrix::from_metric(&MetricMatrix::trivial(n))
    }

    #[test]
    fn identical_marginals_cost_nothing() {
        let mu = [0.2, 0.5, 0.3];
        let (v, pi) = ot_cost(&trivial_cost(3), &mu, &mu).unwrap();
        assert!(v.abs() < 1e-15);
        for i in 0..3 {
            assert!((pi.pi[(i, i)] - mu[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn trivial_metric_is_half_tv() {
        let nu = [0.1, 0.6, 0.3];
        let mu = [0.4, 0.4, 0.2];
        let (v, _) = ot_cost(&trivial_cost(3), &nu, &mu).unwrap();
        let tv: f64 = nu.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        assert!((v - 0.5 * tv).abs() < 1e-15);
    }

    #[test]
    fn two_point_w1() {
        let d = MetricMatrix::trivial(2);
        let (p, q) = (0.3, 0.55);
        let v = w1(&d, &[1.0 - q, q], &[1.0 - p, p]).unwrap();
        assert!((v - (q - p)).abs() < 1e-15);
    }

    #[test]
    fn infeasible_marginals() {
        assert!(matches!(
            ot_cost(&trivial_cost(2), &[0.5, 0.6], &[0.5, 0.5]),
            Err(Error::InfeasibleMarginals(..))
        ));
    }

    #[test]
    fn quantile_hand_value() {
        // mass 1/2 at 0 and 1/2 at 1 against all mass at 1: W2^2 = 1/2
        let w = w2_quantile_1d(&[0.0, 1.0], &[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(w2_quantile_1d(&[0.0, 0.0], &[0.5, 0.5], &[0.5, 0.5]), Err(Error::UnsortedGrid(1))));
    }

    #[test]
    fn tensor_of_trivial_is_hamming() {
        let c = tensor_cost(&[trivial_cost(2), trivial_cost(2)]).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let h = ((x >> 1) != (y >> 1)) as u32 + ((x & 1) != (y & 1)) as u32;
                assert_eq!(c.get(x, y), h as f64);
            }
        }
        let line = CostMatrix::from_metric(&MetricMatrix::line(&[0.0, 1.0, 2.0]).unwrap());
        let l1 = tensor_cost(&[line.clone(), line.clone()]).unwrap();
        assert_eq!(l1.get(product_encode(&[0, 2], &[3, 3]), product_encode(&[2, 1], &[3, 3])), 3.0);
        assert_eq!(tensor_cost(std::slice::from_ref(&line)).unwrap(), line);
        let big = CostMatrix::from_metric(&MetricMatrix::trivial(11));
        assert!(matches!(tensor_cost(&[big.clone(), big]), Err(Error::ProductTooLarge(14641))));
    }

    #[test]
    fn potentials_two_point() {
        let c = CostMatrix::square(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(infconv_potential(&c, &[0.0, 3.0]), vec![0.0, 1.0]);
        assert_eq!(supconv_potential(&c, &[0.0, 3.0]), vec![2.0, 3.0]);
        assert_eq!(infconv_potential(&c, &[2.0, 2.0]), vec![2.0, 2.0]);
    }
}
