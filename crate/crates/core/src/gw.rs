//! Distortion of couplings, the gradient of the Gromov-Wasserstein quadratic
//! form for possibly asymmetric weights, and a conditional-gradient solver
//! for locally optimal couplings.
//!
//! For networks `X` (n nodes) and `Y` (m nodes) and an `n x m` matrix `C`,
//! the linear map `A C = L(X, Y) ⊗ C` with `L = |X_ik - Y_jl|^2` expands to
//!
//! ```text
//! (A C)_ij  = (X.^2 r)_i + (Y.^2 s)_j - 2 (X C Y^T)_ij
//! (A* C)_kl = (X.^2^T r)_k + (Y.^2^T s)_l - 2 (X^T C Y)_kl
//! ```
//!
//! where `r` and `s` are the row and column sums of `C`. The four-index
//! tensor is never formed except in [`distortion_tensor`].

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coupling::{Coupling, SolveReport};
use crate::error::{Error, Result};
use crate::network::MeasureNetwork;
use crate::ot;
use crate::par;

/// Radicands in `[-RADICAND_TOL * scale, 0)` are treated as rounding noise.
const RADICAND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSearch {
    /// Closed-form minimizer of the quadratic restricted to the segment.
    ExactQuadratic,
    /// Backtracking from the full step with the sufficient-decrease test.
    Armijo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitCoupling {
    /// `mu_X mu_Y^T`.
    Product,
    /// North-west corner coupling; the diagonal coupling on equal measures.
    IdentityBlock,
    Given(Coupling),
}

/// Parameters of [`solve_gw`].
#[derive(Debug, Clone, PartialEq)]
pub struct GwParams {
    pub max_outer_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub objective_tol: f64,
    pub line_search: LineSearch,
    pub init: InitCoupling,
    /// Additional starts from random vertices of the coupling polytope.
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for GwParams {
    fn default() -> Self {
        Self {
            max_outer_iters: 200,
            objective_tol: 1e-9,
            line_search: LineSearch::ExactQuadratic,
            init: InitCoupling::Product,
            restarts: 0,
            rng_seed: 0,
        }
    }
}

impl GwParams {
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_init(mut self, init: InitCoupling) -> Self {
        self.init = init;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidParams("max_outer_iters must be at least 1".into()));
        }
        if !(self.objective_tol > 0.0) {
            return Err(Error::InvalidParams("objective_tol must be positive".into()));
        }
        Ok(())
    }
}

fn check_dims(x: &MeasureNetwork, y: &MeasureNetwork, c: &Array2<f64>) -> Result<()> {
    if c.dim() != (x.size(), y.size()) {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {:?}, networks have {} and {} nodes",
            c.dim(),
            x.size(),
            y.size()
        )));
    }
    Ok(())
}

/// Distortion by explicit four-index summation, `O(n^2 m^2)`.
pub fn distortion_tensor(x: &MeasureNetwork, y: &MeasureNetwork, c: &Coupling) -> Result<f64> {
    let c = c.matrix();
    check_dims(x, y, c)?;
    let (xw, yw) = (x.omega(), y.omega());
    let (n, m) = c.dim();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let cij = c[[i, j]];
            if cij == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for k in 0..n {
                for l in 0..m {
                    let d = xw[[i, k]] - yw[[j, l]];
                    inner += d * d * c[[k, l]];
                }
            }
            total += inner * cij;
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// Distortion via `<mu_X, X.^2 mu_X> + <mu_Y, Y.^2 mu_Y> - 2 tr(C^T X^T C Y)`.
pub fn distortion_matrix(x: &MeasureNetwork, y: &MeasureNetwork, c: &Coupling) -> Result<f64> {
    let cm = c.matrix();
    check_dims(x, y, cm)?;
    let (xw, yw) = (x.omega(), y.omega());
    let (p, q) = (x.mu(), y.mu());
    let x_term = p.dot(&xw.mapv(|v| v * v).dot(p));
    let y_term = q.dot(&yw.mapv(|v| v * v).dot(q));
    let cross = (&xw.dot(cm) * &cm.dot(yw)).sum();
    let radicand = x_term + y_term - 2.0 * cross;
    clamp_radicand(radicand, x_term + y_term).map(f64::sqrt)
}

fn clamp_radicand(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -RADICAND_TOL * scale.abs().max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeRadicand(value))
    }
}

/// `A C` for an arbitrary `n x m` matrix.
pub fn apply_operator(x: &Array2<f64>, y: &Array2<f64>, c: &Array2<f64>) -> Array2<f64> {
    let r = c.sum_axis(Axis(1));
    let s = c.sum_axis(Axis(0));
    let xr = x.mapv(|v| v * v).dot(&r);
    let ys = y.mapv(|v| v * v).dot(&s);
    let mut out = x.dot(c).dot(&y.t()) * -2.0;
    add_outer(&mut out, &xr, &ys);
    out
}

/// `A* C` for an arbitrary `n x m` matrix.
pub fn apply_adjoint(x: &Array2<f64>, y: &Array2<f64>, c: &Array2<f64>) -> Array2<f64> {
    let r = c.sum_axis(Axis(1));
    let s = c.sum_axis(Axis(0));
    let xr = x.mapv(|v| v * v).t().dot(&r);
    let ys = y.mapv(|v| v * v).t().dot(&s);
    let mut out = x.t().dot(c).dot(y) * -2.0;
    add_outer(&mut out, &xr, &ys);
    out
}

fn add_outer(out: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for ((i, j), v) in out.indexed_iter_mut() {
        *v += a[i] + b[j];
    }
}

/// The quadratic form `<A C, C>`; the squared distortion when `C` is a coupling.
pub fn quadratic_objective(x: &Array2<f64>, y: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (&apply_operator(x, y, c) * c).sum()
}

/// Gradient `(A + A*) C` of `C -> <A C, C>` at an arbitrary matrix.
pub fn gradient_matrix(x: &Array2<f64>, y: &Array2<f64>, c: &Array2<f64>) -> Array2<f64> {
    apply_operator(x, y, c) + apply_adjoint(x, y, c)
}

/// Gradient of the GW quadratic form at a coupling of `X` and `Y`.
pub fn gw_gradient(x: &MeasureNetwork, y: &MeasureNetwork, c: &Coupling) -> Result<Array2<f64>> {
    check_dims(x, y, c.matrix())?;
    Ok(gradient_matrix(x.omega(), y.omega(), c.matrix()))
}

/// Locally optimal coupling by conditional gradient (Frank-Wolfe) descent.
///
/// Each iteration solves the linear transport problem whose cost is the
/// current gradient and moves along the segment toward that vertex. With
/// `restarts > 0` further runs start from random polytope vertices; the
/// lowest final objective wins, ties going to the earliest start.
pub fn solve_gw(
    x: &MeasureNetwork,
    y: &MeasureNetwork,
    params: &GwParams,
) -> Result<(Coupling, SolveReport)> {
    params.validate()?;
    let first = match &params.init {
        InitCoupling::Product => Coupling::product(x.mu(), y.mu()),
        InitCoupling::IdentityBlock => Coupling::northwest_corner(x.mu(), y.mu()),
        InitCoupling::Given(c) => {
            check_dims(x, y, c.matrix())?;
            c.clone()
        }
    };
    let runs = par::try_map_range(params.restarts + 1, |k| {
        let start = if k == 0 {
            first.clone()
        } else {
            random_vertex(x.mu(), y.mu(), params.rng_seed.wrapping_add(k as u64))?
        };
        frank_wolfe(x.omega(), y.omega(), start, params)
    })?;
    let mut best: Option<(Coupling, SolveReport)> = None;
    for run in runs {
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| run.1.cost < b.cost);
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

/// `d_N(X, Y)` estimated by [`solve_gw`].
pub fn gw_distance(x: &MeasureNetwork, y: &MeasureNetwork, params: &GwParams) -> Result<f64> {
    Ok(solve_gw(x, y, params)?.1.gw_distance)
}

/// Random vertex of the transportation polytope: an optimal plan for a
/// Gaussian random cost.
pub fn random_vertex(p: &Array1<f64>, q: &Array1<f64>, seed: u64) -> Result<Coupling> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = Array2::from_shape_fn((p.len(), q.len()), |_| StandardNormal.sample(&mut rng));
    Ok(ot::solve(&cost, p, q)?.0)
}

fn frank_wolfe(
    x: &Array2<f64>,
    y: &Array2<f64>,
    start: Coupling,
    params: &GwParams,
) -> Result<(Coupling, SolveReport)> {
    let p = start.row_marginal().clone();
    let q = start.col_marginal().clone();
    let mut c = start.into_matrix();
    let mut f = quadratic_objective(x, y, &c);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_outer_iters {
        iterations += 1;
        let grad = gradient_matrix(x, y, &c);
        let (vertex, _) = ot::solve(&grad, &p, &q)?;
        let dir = vertex.matrix() - &c;
        let slope = (&grad * &dir).sum();
        let curvature = quadratic_objective(x, y, &dir);
        let t = match params.line_search {
            LineSearch::ExactQuadratic => exact_step(curvature, slope),
            LineSearch::Armijo => armijo_step(x, y, &c, &dir, f, slope),
        };
        if t <= 0.0 {
            converged = true;
            break;
        }
        let next = &c + &(&dir * t);
        let f_next = quadratic_objective(x, y, &next);
        if f_next > f {
            // Rounding placed the step uphill; keep the current iterate.
            converged = true;
            break;
        }
        let decrease = f - f_next;
        c = next;
        f = f_next;
        trace.push(f);
        if decrease <= params.objective_tol * f.abs().max(f64::MIN_POSITIVE) + f64::MIN_POSITIVE {
            converged = true;
            break;
        }
    }
    // Clear negative rounding dust so the result is a valid coupling.
    c.mapv_inplace(|v| v.max(0.0));
    let sq = clamp_radicand(f, trace[0]).unwrap_or(0.0);
    let cost = sq.sqrt();
    Ok((
        Coupling::from_parts_unchecked(c, p, q),
        SolveReport {
            cost,
            gw_distance: cost / 2.0,
            iterations,
            converged,
            objective_trace: trace,
        },
    ))
}

/// Step minimizing `a t^2 + b t` on `[0, 1]`; a non-increasing endpoint is
/// preferred when the quadratic is not strictly convex.
fn exact_step(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a + b <= 0.0 {
        1.0
    } else {
        0.0
    }
}

fn armijo_step(
    x: &Array2<f64>,
    y: &Array2<f64>,
    c: &Array2<f64>,
    dir: &Array2<f64>,
    f: f64,
    slope: f64,
) -> f64 {
    const SIGMA: f64 = 1e-4;
    const BETA: f64 = 0.5;
    if slope >= 0.0 {
        return 0.0;
    }
    let mut t = 1.0;
    for _ in 0..40 {
        let trial = c + &(dir * t);
        if quadratic_objective(x, y, &trial) <= f + SIGMA * t * slope {
            return t;
        }
        t *= BETA;
    }
    0.0
}

/// Whether the positive support of `c` is a forest in the bipartite
/// row/column graph, i.e. `c` is a vertex of its transportation polytope.
pub fn is_vertex(c: &Array2<f64>, threshold: f64) -> bool {
    let (n, m) = c.dim();
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for ((i, j), v) in c.indexed_iter() {
        if *v > threshold {
            let a = find(&mut parent, i);
            let b = find(&mut parent, n + j);
            if a == b {
                return false;
            }
            parent[a] = b;
        }
    }
    true
}

/// Moves a non-vertex coupling to a vertex without raising the objective
/// when it can.
///
/// First tries the linear-transport vertex for the gradient at `c`. If that
/// is worse, support cycles are cancelled one at a time along directions on
/// which the objective is concave or flat, where the better endpoint of the
/// feasible segment is never worse than `c`. Returns `c` unchanged if
/// neither stage helps; the result may then still have a cycle.
pub fn round_to_vertex(
    x: &MeasureNetwork,
    y: &MeasureNetwork,
    c: &Coupling,
    threshold: f64,
) -> Result<Coupling> {
    check_dims(x, y, c.matrix())?;
    if is_vertex(c.matrix(), threshold) {
        return Ok(c.clone());
    }
    let grad = gradient_matrix(x.omega(), y.omega(), c.matrix());
    let (vertex, _) = ot::solve(&grad, c.row_marginal(), c.col_marginal())?;
    let f_old = quadratic_objective(x.omega(), y.omega(), c.matrix());
    let f_new = quadratic_objective(x.omega(), y.omega(), vertex.matrix());
    let slack = 1e-12 * f_old.abs().max(1.0);
    if f_new <= f_old + slack {
        return Ok(vertex);
    }
    let reduced = cancel_cycles(x.omega(), y.omega(), c.matrix().clone(), threshold);
    let f_red = quadratic_objective(x.omega(), y.omega(), &reduced);
    if f_red <= f_old + slack {
        Ok(Coupling::from_parts_unchecked(
            reduced,
            c.row_marginal().clone(),
            c.col_marginal().clone(),
        ))
    } else {
        Ok(c.clone())
    }
}

/// Cells of a cycle in the support with alternating signs.
type Cycle = Vec<((usize, usize), f64)>;

fn cancel_cycles(x: &Array2<f64>, y: &Array2<f64>, mut c: Array2<f64>, threshold: f64) -> Array2<f64> {
    for c_i in c.iter_mut() {
        if *c_i <= threshold {
            *c_i = 0.0;
        }
    }
    'outer: loop {
        let grad = gradient_matrix(x, y, &c);
        let base = quadratic_objective(x, y, &c);
        for cycle in support_cycles(&c) {
            let mut d = Array2::<f64>::zeros(c.dim());
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for &((i, j), sign) in &cycle {
                d[[i, j]] = sign;
                if sign > 0.0 {
                    lo = lo.max(-c[[i, j]]);
                } else {
                    hi = hi.min(c[[i, j]]);
                }
            }
            let a = quadratic_objective(x, y, &d);
            let b = (&grad * &d).sum();
            if a > 1e-12 * b.abs().max(base.abs()).max(1.0) {
                continue;
            }
            let along = |t: f64| t * b + t * t * a;
            let t = if along(lo) <= along(hi) { lo } else { hi };
            for &((i, j), sign) in &cycle {
                let v = c[[i, j]] + sign * t;
                c[[i, j]] = if v.abs() <= threshold.max(1e-15 * t.abs()) { 0.0 } else { v };
            }
            continue 'outer;
        }
        return c;
    }
}

/// One fundamental cycle per support cell outside a spanning forest of the
/// bipartite row/column support graph.
fn support_cycles(c: &Array2<f64>) -> Vec<Cycle> {
    let (n, m) = c.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + m];
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let mut extra = Vec::new();
    for ((i, j), v) in c.indexed_iter() {
        if *v > 0.0 {
            let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
            if a == b {
                extra.push((i, j));
            } else {
                parent[a] = b;
                adj[i].push(n + j);
                adj[n + j].push(i);
            }
        }
    }
    extra
        .into_iter()
        .map(|(i, j)| {
            // tree path from column j back to row i
            let mut prev = vec![usize::MAX; n + m];
            let mut queue = std::collections::VecDeque::from([n + j]);
            prev[n + j] = n + j;
            while let Some(u) = queue.pop_front() {
                if u == i {
                    break;
                }
                for &w in &adj[u] {
                    if prev[w] == usize::MAX {
                        prev[w] = u;
                        queue.push_back(w);
                    }
                }
            }
            let mut cycle = vec![((i, j), 1.0)];
            let mut sign = -1.0;
            let mut u = i;
            while u != n + j {
                let w = prev[u];
                let cell = if u < n { (u, w - n) } else { (w, u - n) };
                cycle.push((cell, sign));
                sign = -sign;
                u = w;
            }
            cycle
        })
        .collect()
}
