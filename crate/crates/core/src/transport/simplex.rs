//! Transportation simplex on the bipartite transport polytope.
//!
//! The basis is a spanning tree of basic cells over `n` row nodes and `m`
//! column nodes. Prices come from MODI potentials, the entering cell closes a
//! unique cycle with the tree and the blocking cell on that cycle leaves.
//! After a long run of degenerate pivots the pricing switches to Bland's
//! rule, which cannot cycle.

use nalgebra::DMatrix;

pub(crate) struct TransportSolution {
    pub value: f64,
    pub flow: DMatrix<f64>,
    /// `row[i] + col[j] <= c[i][j]` everywhere, with equality on the basis.
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub pivots: usize,
}

struct Basis {
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn north_west(a: &[f64], b: &[f64]) -> Basis {
        let (n, m) = (a.len(), b.len());
        let mut cells = Vec::with_capacity(n + m - 1);
        let mut flow = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (a[0], b[0]);
        loop {
            if i == n - 1 && j == m - 1 {
                cells.push((i, j));
                flow.push(ra.max(0.0));
                break;
            }
            let x = ra.min(rb).max(0.0);
            cells.push((i, j));
            flow.push(x);
            ra -= x;
            rb -= x;
            let advance_row = if i == n - 1 {
                false
            } else if j == m - 1 {
                true
            } else {
                ra <= rb
            };
            if advance_row {
                i += 1;
                rb = rb.max(0.0);
                ra = a[i];
            } else {
                j += 1;
                ra = ra.max(0.0);
                rb = b[j];
            }
        }
        let mut basis = Basis { n, cells, flow, adj: vec![Vec::new(); n + m] };
        basis.rebuild_adjacency();
        basis
    }

    fn rebuild_adjacency(&mut self) {
        for a in &mut self.adj {
            a.clear();
        }
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            self.adj[i].push(k);
            self.adj[self.n + j].push(k);
        }
    }

    /// Potentials, parent cell and depth of every node in the tree rooted at
    /// row node 0.
    fn traverse(&self, c: &DMatrix<f64>) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
        let nodes = self.adj.len();
        let mut pot = vec![0.0; nodes];
        let mut parent = vec![usize::MAX; nodes];
        let mut depth = vec![usize::MAX; nodes];
        depth[0] = 0;
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            for &k in &self.adj[node] {
                let (i, j) = self.cells[k];
                let other = if node == i { self.n + j } else { i };
                if depth[other] != usize::MAX {
                    continue;
                }
                pot[other] = c[(i, j)] - pot[node];
                parent[other] = k;
                depth[other] = depth[node] + 1;
                stack.push(other);
            }
        }
        (pot, parent, depth)
    }

    fn other_end(&self, k: usize, node: usize) -> usize {
        let (i, j) = self.cells[k];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    /// Tree cells on the path from column node `n + j` to row node `i`, in
    /// walking order.
    fn path(&self, i: usize, j: usize, parent: &[usize], depth: &[usize]) -> Vec<usize> {
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        let (mut a, mut b) = (self.n + j, i);
        while depth[a] > depth[b] {
            from_col.push(parent[a]);
            a = self.other_end(parent[a], a);
        }
        while depth[b] > depth[a] {
            from_row.push(parent[b]);
            b = self.other_end(parent[b], b);
        }
        while a != b {
            from_col.push(parent[a]);
            a = self.other_end(parent[a], a);
            from_row.push(parent[b]);
            b = self.other_end(parent[b], b);
        }
        from_row.reverse();
        from_col.extend(from_row);
        from_col
    }
}

pub(crate) fn solve(c: &DMatrix<f64>, a: &[f64], b: &[f64]) -> TransportSolution {
    let (n, m) = (a.len(), b.len());
    let cmax = c.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let tol = 1e-13 * cmax;
    let mut basis = Basis::north_west(a, b);
    let max_pivots = 50 * (n * m + n + m) + 1000;
    let bland_after = 20 * (n + m) + 100;
    let mut degenerate_run = 0usize;
    let mut pivots = 0usize;
    loop {
        let (pot, parent, depth) = basis.traverse(c);
        let bland = degenerate_run > bland_after;
        let mut enter: Option<(usize, usize)> = None;
        let mut best = -tol;
        'price: for i in 0..n {
            for j in 0..m {
                let r = c[(i, j)] - pot[i] - pot[n + j];
                if r < best {
                    enter = Some((i, j));
                    if bland {
                        break 'price;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = enter else {
            let mut flow = DMatrix::zeros(n, m);
            let mut value = 0.0;
            for (k, &(i, j)) in basis.cells.iter().enumerate() {
                flow[(i, j)] += basis.flow[k];
                value += basis.flow[k] * c[(i, j)];
            }
            let row = pot[..n].to_vec();
            let col = pot[n..].to_vec();
            return TransportSolution { value, flow, row, col, pivots };
        };
        if pivots >= max_pivots {
            // Unreachable in exact arithmetic; fall through with the current
            // basis so the caller's duality check reports the gap.
            let mut flow = DMatrix::zeros(n, m);
            let mut value = 0.0;
            for (k, &(i, j)) in basis.cells.iter().enumerate() {
                flow[(i, j)] += basis.flow[k];
                value += basis.flow[k] * c[(i, j)];
            }
            return TransportSolution { value, flow, row: pot[..n].to_vec(), col: pot[n..].to_vec(), pivots };
        }
        let cycle = basis.path(ei, ej, &parent, &depth);
        // cycle[0], cycle[2], ... lose flow
        let mut leave = usize::MAX;
        let mut theta = f64::INFINITY;
        for (pos, &k) in cycle.iter().enumerate().step_by(2) {
            let f = basis.flow[k];
            let better = f < theta || (bland && f == theta && basis.cells[k] < basis.cells[cycle[leave]]);
            if better {
                theta = f;
                leave = pos;
            }
        }
        let theta = theta.max(0.0);
        for (pos, &k) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[k] = (basis.flow[k] - theta).max(0.0);
            } else {
                basis.flow[k] += theta;
            }
        }
        let slot = cycle[leave];
        basis.cells[slot] = (ei, ej);
        basis.flow[slot] = theta;
        basis.rebuild_adjacency();
        pivots += 1;
        if theta == 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }
}
