//! Small dense and tridiagonal symmetric eigen helpers.
//!
//! Birth-death chains produce tridiagonal symmetric forms, so the hot paths
//! (principal eigenvalues of 400-node discretized diffusions) use Sturm
//! bisection plus inverse iteration instead of a dense decomposition.

use nalgebra::{DMatrix, SymmetricEigen};

/// Number of eigenvalues of the symmetric tridiagonal matrix `(d, e)` that are
/// strictly below `x`.
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let scale = d.iter().chain(e.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tiny = f64::MIN_POSITIVE.sqrt() * scale;
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() < tiny {
        q = -tiny;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval containing the spectrum of `(d, e)`.
pub fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += e[i - 1].abs();
        }
        if i + 1 < n {
            r += e[i].abs();
        }
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) of the symmetric tridiagonal
/// matrix with diagonal `d` and off-diagonal `e`, by bisection.
pub fn tridiag_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    assert!(k < d.len());
    assert_eq!(e.len() + 1, d.len());
    let (mut lo, mut hi) = gershgorin(d, e);
    let pad = 1e-12 * (lo.abs() + hi.abs() + 1.0);
    lo -= pad;
    hi += pad;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solve a general tridiagonal system with partial pivoting.
/// `sub[i]` is entry (i+1, i), `sup[i]` is entry (i, i+1).
pub fn solve_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![rhs[0] / nonzero(diag[0])];
    }
    // Row i holds (d, u1, u2) in columns (i, i+1, i+2) after elimination.
    let mut d = diag.to_vec();
    let mut u1: Vec<f64> = (0..n).map(|i| if i + 1 < n { sup[i] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; n];
    let mut l = sub.to_vec();
    let mut b = rhs.to_vec();
    for i in 0..n - 1 {
        if l[i].abs() > d[i].abs() {
            // swap rows i and i+1
            let next_u1 = if i + 2 < n { sup[i + 1] } else { 0.0 };
            let (di, ui1) = (d[i], u1[i]);
            d[i] = l[i];
            u1[i] = d[i + 1];
            u2[i] = next_u1;
            l[i] = di;
            d[i + 1] = ui1;
            u1[i + 1] = 0.0;
            b.swap(i, i + 1);
            let m = l[i] / d[i];
            d[i + 1] -= m * u1[i];
            if i + 2 < n {
                u1[i + 1] -= m * u2[i];
            }
            b[i + 1] -= m * b[i];
        } else {
            let m = l[i] / nonzero(d[i]);
            d[i + 1] -= m * u1[i];
            b[i + 1] -= m * b[i];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / nonzero(d[i]);
    }
    x
}

fn nonzero(v: f64) -> f64 {
    if v.abs() < 1e-300 {
        if v.is_sign_negative() {
            -1e-300
        } else {
            1e-300
        }
    } else {
        v
    }
}

/// Unit eigenvector for eigenvalue `lambda` of `(d, e)` by inverse iteration.
/// Sign is fixed so that the component sum is nonnegative.
pub fn tridiag_eigenvector(d: &[f64], e: &[f64], lambda: f64) -> Vec<f64> {
    let n = d.len();
    let scale = d.iter().chain(e.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let shift = lambda + 4.0 * f64::EPSILON * scale;
    let shifted: Vec<f64> = d.iter().map(|v| v - shift).collect();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 13) as f64).collect();
    normalize(&mut x);
    for _ in 0..4 {
        let mut y = solve_tridiag(e, &shifted, e, &x);
        if y.iter().any(|v| !v.is_finite()) {
            break;
        }
        normalize(&mut y);
        x = y;
    }
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    x
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// Eigen-decomposition of a dense symmetric matrix, eigenvalues ascending.
/// Column `k` of the returned matrix is the eigenvector of value `k`.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).clone_owned();
        if col.sum() < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(k, &col);
    }
    (vals, vecs)
}

/// Largest eigenvalue and unit eigenvector of a dense symmetric matrix.
pub fn sym_top(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let (vals, vecs) = sym_eigen_sorted(m);
    let n = vals.len();
    (vals[n - 1], vecs.column(n - 1).iter().copied().collect())
}

/// Largest eigenvalue and unit eigenvector of a symmetric tridiagonal matrix.
pub fn tridiag_top(d: &[f64], e: &[f64]) -> (f64, Vec<f64>) {
    let n = d.len();
    let lam = tridiag_eigenvalue(d, e, n - 1);
    (lam, tridiag_eigenvector(d, e, lam))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(d: &[f64], e: &[f64]) -> DMatrix<f64> {
        let n = d.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
            if i + 1 < n {
                m[(i, i + 1)] = e[i];
                m[(i + 1, i)] = e[i];
            }
        }
        m
    }

    #[test]
    fn bisection_matches_dense() {
        let d = [2.0, -1.0, 0.5, 3.0, 1.0];
        let e = [0.7, -0.3, 1.2, 0.01];
        let (vals, _) = sym_eigen_sorted(&dense(&d, &e));
        for k in 0..5 {
            assert!((tridiag_eigenvalue(&d, &e, k) - vals[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_iteration_residual() {
        let d = [2.0, -1.0, 0.5, 3.0, 1.0];
        let e = [0.7, -0.3, 1.2, 0.01];
        let m = dense(&d, &e);
        for k in 0..5 {
            let lam = tridiag_eigenvalue(&d, &e, k);
            let v = tridiag_eigenvector(&d, &e, lam);
            let mv = &m * nalgebra::DVector::from_vec(v.clone());
            for i in 0..5 {
                assert!((mv[i] - lam * v[i]).abs() < 1e-10, "k={k}");
            }
        }
    }

    #[test]
    fn pivoted_tridiag_solve() {
        let sub = [3.0, 1.0, -2.0];
        let diag = [1e-3, 2.0, 0.5, 4.0];
        let sup = [1.0, -1.0, 2.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiag(&sub, &diag, &sup, &rhs);
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..4 {
            m[(i, i)] = diag[i];
            if i < 3 {
                m[(i + 1, i)] = sub[i];
                m[(i, i + 1)] = sup[i];
            }
        }
        let r = &m * nalgebra::DVector::from_vec(x);
        for i in 0..4 {
            assert!((r[i] - rhs[i]).abs() < 1e-12);
        }
    }
}
