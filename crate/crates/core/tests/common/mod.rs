//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use gwnet::{Coupling, MeasureNetwork};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |_| StandardNormal.sample(rng))
}

/// Strictly positive probability vector.
pub fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let v = Array1::from_shape_fn(n, |_| 0.2 + rng.random::<f64>());
    &v / v.sum()
}

/// Network with Gaussian weights and random non-uniform measure.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> MeasureNetwork {
    let omega = gaussian_matrix(rng, n, n);
    let mu = random_measure(rng, n);
    MeasureNetwork::new(omega, mu).unwrap()
}

pub fn uniform_network(rng: &mut ChaCha8Rng, n: usize) -> MeasureNetwork {
    MeasureNetwork::uniform(gaussian_matrix(rng, n, n)).unwrap()
}

/// Dense coupling obtained by scaling a random positive matrix.
pub fn random_coupling(rng: &mut ChaCha8Rng, p: &Array1<f64>, q: &Array1<f64>) -> Coupling {
    let mut k = Array2::from_shape_fn((p.len(), q.len()), |_| 0.05 + rng.random::<f64>());
    for _ in 0..500 {
        let r = k.sum_axis(ndarray::Axis(1));
        for i in 0..p.len() {
            let s = p[i] / r[i];
            k.row_mut(i).mapv_inplace(|v| v * s);
        }
        let c = k.sum_axis(ndarray::Axis(0));
        for j in 0..q.len() {
            let s = q[j] / c[j];
            k.column_mut(j).mapv_inplace(|v| v * s);
        }
    }
    Coupling::new(k, p.clone(), q.clone()).unwrap()
}

/// `Σ_{ijkl} (x_ik - y_jl)^2 c_ij c_kl` by direct summation.
pub fn quadratic_sum(x: &Array2<f64>, y: &Array2<f64>, c: &Array2<f64>) -> f64 {
    let (n, m) = c.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    let d = x[[i, k]] - y[[j, l]];
                    s += d * d * c[[i, j]] * c[[k, l]];
                }
            }
        }
    }
    s
}

/// Central finite-difference gradient of [`quadratic_sum`] in `c`.
pub fn finite_difference_gradient(x: &Array2<f64>, y: &Array2<f64>, c: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(c.dim());
    for idx in ndarray::indices(c.dim()) {
        let mut plus = c.clone();
        let mut minus = c.clone();
        plus[idx] += h;
        minus[idx] -= h;
        g[idx] = (quadratic_sum(x, y, &plus) - quadratic_sum(x, y, &minus)) / (2.0 * h);
    }
    g
}

/// Optimal value of a transport problem by enumerating every set of
/// `n + m - 1` cells that spans the bipartite graph.
pub fn lp_by_basis_enumeration(cost: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    let (n, m) = cost.dim();
    let cells: Vec<(usize, usize)> = ndarray::indices((n, m)).into_iter().collect();
    let mut best = f64::INFINITY;
    for subset in combinations(cells.len(), n + m - 1) {
        let chosen: Vec<(usize, usize)> = subset.iter().map(|&k| cells[k]).collect();
        if let Some(flow) = tree_flow(&chosen, p, q) {
            if flow.iter().all(|f| *f >= -1e-12) {
                let v: f64 = chosen.iter().zip(&flow).map(|(&(i, j), f)| cost[[i, j]] * f).sum();
                best = best.min(v);
            }
        }
    }
    best
}

fn tree_flow(cells: &[(usize, usize)], p: &Array1<f64>, q: &Array1<f64>) -> Option<Vec<f64>> {
    let (n, m) = (p.len(), q.len());
    let a = DMatrix::from_fn(n + m, cells.len(), |r, k| {
        let (i, j) = cells[k];
        if r < n { (i == r) as u8 as f64 } else { (j == r - n) as u8 as f64 }
    });
    let b = DVector::from_iterator(n + m, p.iter().chain(q.iter()).copied());
    let svd = a.clone().svd(true, true);
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-9).count();
    if rank < cells.len() {
        return None;
    }
    let x = svd.solve(&b, 1e-12).ok()?;
    ((&a * &x - &b).norm() < 1e-9).then(|| x.iter().copied().collect())
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Exact global minimum of the GW quadratic over the coupling polytope.
///
/// The minimizer lies in the relative interior of some face, where it is a
/// stationary point of the quadratic restricted to the face's affine hull
/// with positive semidefinite reduced Hessian; zero-curvature directions
/// can be followed to a smaller face without changing the value. So it
/// suffices to visit every support set, keep the stationary points of faces
/// with positive definite reduced Hessian (or a unique feasible point), and
/// take the best feasible one. Feasible only for `n * m <= 12` or so.
pub fn gw_global_minimum(x: &MeasureNetwork, y: &MeasureNetwork) -> (f64, Array2<f64>) {
    let (n, m) = (x.size(), y.size());
    let nm = n * m;
    assert!(nm <= 16, "face enumeration is exponential in n*m");
    let xo = x.omega();
    let yo = y.omega();
    // Symmetric part of the form: asymmetric weights make the raw one asymmetric.
    let q = DMatrix::from_fn(nm, nm, |a, b| {
        let (i, j) = (a / m, a % m);
        let (k, l) = (b / m, b % m);
        0.5 * ((xo[[i, k]] - yo[[j, l]]).powi(2) + (xo[[k, i]] - yo[[l, j]]).powi(2))
    });
    let rhs = DVector::from_iterator(n + m, x.mu().iter().chain(y.mu().iter()).copied());
    let mut best = (f64::INFINITY, Array2::zeros((n, m)));
    for mask in 1u32..(1u32 << nm) {
        let support: Vec<usize> = (0..nm).filter(|b| mask >> b & 1 == 1).collect();
        let s = support.len();
        if s < n.max(m) {
            continue;
        }
        let a = DMatrix::from_fn(n + m, s, |r, k| {
            let (i, j) = (support[k] / m, support[k] % m);
            if r < n { (i == r) as u8 as f64 } else { (j == r - n) as u8 as f64 }
        });
        let svd = a.clone().svd(true, true);
        let Ok(c0) = svd.solve(&rhs, 1e-10) else { continue };
        if (&a * &c0 - &rhs).norm() > 1e-10 {
            continue;
        }
        let rank = svd.singular_values.iter().filter(|v| **v > 1e-10).count();
        let c = if rank == s {
            c0
        } else {
            // Null-space basis from the right singular vectors.
            let full = a.clone().insert_rows(n + m, s.saturating_sub(n + m), 0.0);
            let svd_full = full.svd(false, true);
            let vt = svd_full.v_t.expect("requested");
            let mut order: Vec<usize> = (0..s).collect();
            order.sort_by(|&i, &j| svd_full.singular_values[i].total_cmp(&svd_full.singular_values[j]));
            let null: Vec<DVector<f64>> = order
                .iter()
                .take(s - rank)
                .map(|&i| vt.row(i).transpose())
                .collect();
            let nb = DMatrix::from_columns(&null);
            let qs = DMatrix::from_fn(s, s, |i, j| q[(support[i], support[j])]);
            let h = nb.transpose() * &qs * &nb;
            let eig = h.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|v| *v <= 1e-10) {
                continue;
            }
            let g = nb.transpose() * &qs * &c0;
            let z = h.cholesky().expect("positive definite").solve(&(-g));
            c0 + nb * z
        };
        if c.iter().any(|v| *v < -1e-12) {
            continue;
        }
        let mut full = Array2::zeros((n, m));
        for (k, &cell) in support.iter().enumerate() {
            full[[cell / m, cell % m]] = c[k].max(0.0);
        }
        let v = quadratic_sum(xo, yo, &full);
        if v < best.0 {
            best = (v, full);
        }
    }
    best
}

/// Global `d_N` from [`gw_global_minimum`].
pub fn gw_distance_oracle(x: &MeasureNetwork, y: &MeasureNetwork) -> f64 {
    gw_global_minimum(x, y).0.max(0.0).sqrt() / 2.0
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenvalues in
/// descending order with matching unit eigenvector columns.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = ndarray::indices((n, n))
            .into_iter()
            .filter(|(i, j)| i != j)
            .map(|(i, j)| a[[i, j]].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let vals = order.iter().map(|&i| a[[i, i]]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (vals, vecs)
}

/// Cardinality of the entries strictly above `1e-9` of the largest entry.
pub fn support(c: &Array2<f64>) -> usize {
    let max = c.iter().fold(0.0_f64, |a, v| a.max(*v));
    c.iter().filter(|v| **v > 1e-9 * max).count()
}

/// Smallest `d_N` found by the solver over random restarts and the given
/// starting couplings.
pub fn best_distance(x: &MeasureNetwork, y: &MeasureNetwork, starts: &[Coupling]) -> f64 {
    use gwnet::gw::{self, GwParams, InitCoupling};
    let mut best = gw::gw_distance(x, y, &GwParams::default().with_restarts(8)).unwrap();
    for c in starts {
        let p = GwParams::default().with_init(InitCoupling::Given(c.clone()));
        best = best.min(gw::gw_distance(x, y, &p).unwrap());
        best = best.min(gw::distortion_matrix(x, y, c).unwrap() / 2.0);
    }
    best
}

/// `diag(mu)` as a coupling of a network with itself or with a network on
/// the same node set.
pub fn diagonal_coupling(mu: &Array1<f64>) -> Coupling {
    Coupling::new(Array2::from_diag(mu), mu.clone(), mu.clone()).unwrap()
}

/// Eigenpairs of the weighted covariance through its symmetric form
/// `W^{1/2} Rᵀ R W^{1/2} / (k - 1)`.
pub fn dense_pca_oracle(ds: &gwnet::analysis::TangentDataset) -> (Vec<f64>, Vec<Array1<f64>>) {
    let k = ds.len();
    let mean = ds.vectors.mean_axis(ndarray::Axis(0)).unwrap();
    let rc = &ds.vectors - &mean;
    let s = ds.weights.mapv(f64::sqrt);
    let scaled = &rc * &s;
    let m = scaled.t().dot(&scaled) / (k - 1) as f64;
    let (vals, vecs) = jacobi_eigen(&m);
    for (i, l) in vals.iter().enumerate() {
        let e = vecs.column(i);
        let res = (&m.dot(&e) - &(&e * *l)).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(res < 1e-10, "oracle residual {res}");
    }
    let comps = (0..vals.len()).map(|i| &vecs.column(i) / &s).collect();
    (vals, comps)
}
