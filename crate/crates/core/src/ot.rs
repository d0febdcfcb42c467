//! Exact linear optimal transport by the transportation simplex method.
//!
//! The basis is kept as a spanning tree of the bipartite row/column graph
//! with exactly `n + m - 1` cells, so every returned plan is a vertex of the
//! transportation polytope. Entering cells follow Dantzig's rule with
//! lowest-index tie breaking; after a run of degenerate pivots the solver
//! switches to Bland's rule, which cannot cycle.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::network::PROBABILITY_TOL;

/// Reduced-cost threshold, relative to the rescaled costs.
const PIVOT_TOL: f64 = 1e-12;
/// Degenerate pivots in a row before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 50;

/// A linear transport problem `min <cost, C>` over couplings of `p` and `q`.
#[derive(Debug, Clone)]
pub struct OtProblem {
    cost: Array2<f64>,
    p: Array1<f64>,
    q: Array1<f64>,
}

impl OtProblem {
    pub fn new(cost: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> Result<Self> {
        let (n, m) = cost.dim();
        if p.len() != n || q.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "cost is {n}x{m}, marginals have lengths {} and {}",
                p.len(),
                q.len()
            )));
        }
        if n == 0 || m == 0 {
            return Err(Error::InfeasibleMarginals("empty marginal".into()));
        }
        if let Some(((row, col), _)) = cost.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row, col });
        }
        for (name, v) in [("p", &p), ("q", &q)] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InfeasibleMarginals(format!("{name} has a negative entry")));
            }
            let s = v.sum();
            if (s - 1.0).abs() > PROBABILITY_TOL {
                return Err(Error::InfeasibleMarginals(format!("{name} sums to {s}")));
            }
        }
        Ok(Self { cost, p, q })
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }
}

/// Solves the transport problem, returning an optimal vertex coupling and its cost.
pub fn solve_linear_ot(prob: &OtProblem) -> Result<(Coupling, f64)> {
    let scale = prob.cost.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cost = if scale > 0.0 {
        &prob.cost / scale
    } else {
        prob.cost.clone()
    };
    let mut tree = BasisTree::northwest(&prob.p, &prob.q);
    tree.optimize(&cost);
    let plan = tree.rebalanced(&prob.p, &prob.q);
    let value = (&plan * &prob.cost).sum();
    let coupling = Coupling::from_parts_unchecked(plan, prob.p.clone(), prob.q.clone());
    Ok((coupling, value))
}

/// Convenience wrapper around [`OtProblem::new`] and [`solve_linear_ot`].
pub fn solve(cost: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> Result<(Coupling, f64)> {
    solve_linear_ot(&OtProblem::new(cost.clone(), p.clone(), q.clone())?)
}

struct BasisTree {
    n: usize,
    m: usize,
    /// Flow on every cell, row-major; zero off the basis.
    flow: Vec<f64>,
    basic: Vec<bool>,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
}

impl BasisTree {
    fn northwest(p: &Array1<f64>, q: &Array1<f64>) -> Self {
        let n = p.len();
        let m = q.len();
        let mut t = Self {
            n,
            m,
            flow: vec![0.0; n * m],
            basic: vec![false; n * m],
            row_adj: vec![Vec::new(); n],
            col_adj: vec![Vec::new(); m],
        };
        let mut r = p.to_vec();
        let mut c = q.to_vec();
        let (mut i, mut j) = (0, 0);
        while i < n && j < m {
            let x = r[i].min(c[j]);
            t.add(i, j, x);
            r[i] -= x;
            c[j] -= x;
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || r[i] <= c[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        t
    }

    fn add(&mut self, i: usize, j: usize, x: f64) {
        let k = i * self.m + j;
        self.basic[k] = true;
        self.flow[k] = x;
        self.row_adj[i].push(j);
        self.col_adj[j].push(i);
    }

    fn remove(&mut self, i: usize, j: usize) {
        let k = i * self.m + j;
        self.basic[k] = false;
        self.flow[k] = 0.0;
        self.row_adj[i].retain(|&c| c != j);
        self.col_adj[j].retain(|&r| r != i);
    }

    /// Dual potentials with `u[0] = 0`.
    fn potentials(&self, cost: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![f64::NAN; self.n];
        let mut v = vec![f64::NAN; self.m];
        let mut queue = VecDeque::new();
        u[0] = 0.0;
        queue.push_back(Node::Row(0));
        while let Some(node) = queue.pop_front() {
            match node {
                Node::Row(i) => {
                    for &j in &self.row_adj[i] {
                        if v[j].is_nan() {
                            v[j] = cost[[i, j]] - u[i];
                            queue.push_back(Node::Col(j));
                        }
                    }
                }
                Node::Col(j) => {
                    for &i in &self.col_adj[j] {
                        if u[i].is_nan() {
                            u[i] = cost[[i, j]] - v[j];
                            queue.push_back(Node::Row(i));
                        }
                    }
                }
            }
        }
        (u, v)
    }

    /// Tree path from row `i` to column `j`, as the sequence of cells on it.
    fn path(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let total = self.n + self.m;
        let mut parent = vec![usize::MAX; total];
        let row_id = |r: usize| r;
        let col_id = |c: usize| self.n + c;
        let start = row_id(i);
        let goal = col_id(j);
        parent[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == goal {
                break;
            }
            let neighbours: Vec<usize> = if node < self.n {
                self.row_adj[node].iter().map(|&c| col_id(c)).collect()
            } else {
                self.col_adj[node - self.n].iter().map(|&r| row_id(r)).collect()
            };
            for nb in neighbours {
                if parent[nb] == usize::MAX {
                    parent[nb] = node;
                    queue.push_back(nb);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = goal;
        while node != start {
            let prev = parent[node];
            let cell = if node < self.n {
                (node, prev - self.n)
            } else {
                (prev, node - self.n)
            };
            cells.push(cell);
            node = prev;
        }
        cells.reverse();
        cells
    }

    fn optimize(&mut self, cost: &Array2<f64>) {
        let max_pivots = 50 * self.n * self.m + 1000;
        let mut streak = 0;
        for _ in 0..max_pivots {
            let (u, v) = self.potentials(cost);
            let bland = streak >= DEGENERATE_STREAK;
            let mut entering = None;
            let mut best = -PIVOT_TOL;
            'scan: for i in 0..self.n {
                for j in 0..self.m {
                    if self.basic[i * self.m + j] {
                        continue;
                    }
                    let d = cost[[i, j]] - u[i] - v[j];
                    if d < best {
                        entering = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                        best = d;
                    }
                }
            }
            let Some((ei, ej)) = entering else {
                return;
            };
            // Cells on the tree path alternate -, +, -, ... starting at row ei.
            let path = self.path(ei, ej);
            let mut theta = f64::INFINITY;
            let mut leaving = (usize::MAX, usize::MAX);
            for (k, &(r, c)) in path.iter().enumerate() {
                if k % 2 == 0 {
                    let x = self.flow[r * self.m + c];
                    let better = x < theta
                        || (x == theta && (r * self.m + c) < (leaving.0 * self.m + leaving.1));
                    if better {
                        theta = x;
                        leaving = (r, c);
                    }
                }
            }
            let theta = theta.max(0.0);
            for (k, &(r, c)) in path.iter().enumerate() {
                let cell = &mut self.flow[r * self.m + c];
                if k % 2 == 0 {
                    *cell = (*cell - theta).max(0.0);
                } else {
                    *cell += theta;
                }
            }
            self.remove(leaving.0, leaving.1);
            self.add(ei, ej, theta);
            streak = if theta > 0.0 { 0 } else { streak + 1 };
        }
    }

    /// Recomputes basic flows from the marginals by peeling leaves of the tree.
    fn rebalanced(&self, p: &Array1<f64>, q: &Array1<f64>) -> Array2<f64> {
        let (n, m) = (self.n, self.m);
        let mut row_adj = self.row_adj.clone();
        let mut col_adj = self.col_adj.clone();
        let mut r = p.to_vec();
        let mut c = q.to_vec();
        let mut plan = Array2::zeros((n, m));
        let mut queue: VecDeque<Node> = (0..n)
            .filter(|&i| row_adj[i].len() == 1)
            .map(Node::Row)
            .chain((0..m).filter(|&j| col_adj[j].len() == 1).map(Node::Col))
            .collect();
        let mut remaining = n + m - 1;
        while remaining > 0 {
            let Some(node) = queue.pop_front() else { break };
            match node {
                Node::Row(i) => {
                    if row_adj[i].len() != 1 {
                        continue;
                    }
                    let j = row_adj[i][0];
                    let x = r[i].max(0.0);
                    plan[[i, j]] = x;
                    c[j] -= x;
                    r[i] = 0.0;
                    row_adj[i].clear();
                    col_adj[j].retain(|&k| k != i);
                    if col_adj[j].len() == 1 {
                        queue.push_back(Node::Col(j));
                    }
                }
                Node::Col(j) => {
                    if col_adj[j].len() != 1 {
                        continue;
                    }
                    let i = col_adj[j][0];
                    let x = c[j].max(0.0);
                    plan[[i, j]] = x;
                    r[i] -= x;
                    c[j] = 0.0;
                    col_adj[j].clear();
                    row_adj[i].retain(|&k| k != j);
                    if row_adj[i].len() == 1 {
                        queue.push_back(Node::Row(i));
                    }
                }
            }
            remaining -= 1;
        }
        plan
    }
}

#[derive(Clone, Copy)]
enum Node {
    Row(usize),
    Col(usize),
}
