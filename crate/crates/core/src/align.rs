//! Blow-ups and alignment.
//!
//! Every support cell `(x, y)` of a coupling becomes one node of the common
//! expansion, carrying mass `C[x, y]`. Node `(x, i)` of the blow-up of `X`
//! is matched with the `i`-th target of `x` in ascending order, so the
//! identity map on the expanded node set is the transport map and the
//! aligned coupling is `diag(mu_hat)`. Nodes are listed in row-major order
//! of the support.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::coupling::{Coupling, SolveReport};
use crate::error::{Error, Result};
use crate::gw::{self, GwParams};
use crate::network::MeasureNetwork;

/// Entries at or below this fraction of the largest entry count as zero.
pub const SUPPORT_REL_THRESHOLD: f64 = 1e-9;

/// Absolute support threshold for `c`.
pub fn support_threshold(c: &Array2<f64>) -> f64 {
    SUPPORT_REL_THRESHOLD * c.iter().fold(0.0_f64, |a, v| a.max(*v))
}

/// `1` where the coupling exceeds the support threshold, `0` elsewhere.
pub fn binarize(c: &Coupling) -> Array2<u8> {
    let thr = support_threshold(c.matrix());
    c.matrix().mapv(|v| u8::from(v > thr))
}

pub fn support_size(c: &Coupling) -> usize {
    let thr = support_threshold(c.matrix());
    c.matrix().iter().filter(|v| **v > thr).count()
}

/// Replication data of a blow-up: how many copies each node received and
/// which `(source, target)` cell every expanded node stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlowupPlan {
    /// Copies of each node of the source network.
    pub u: Vec<usize>,
    /// Copies of each node of the target network.
    pub v: Vec<usize>,
    /// `(x, y)` for every expanded node, in expanded order.
    pub nodes: Vec<(usize, usize)>,
}

impl BlowupPlan {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn source_index(&self) -> Vec<usize> {
        self.nodes.iter().map(|&(x, _)| x).collect()
    }

    pub fn target_index(&self) -> Vec<usize> {
        self.nodes.iter().map(|&(_, y)| y).collect()
    }

    /// Expanded node indices belonging to source node `x`, in copy order.
    pub fn copies_of_source(&self, x: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, &(s, _))| s == x)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Pulls a square matrix on the original nodes back along an index map.
pub fn pull_back(m: &Array2<f64>, index: &[usize]) -> Array2<f64> {
    let n = index.len();
    Array2::from_shape_fn((n, n), |(a, b)| m[[index[a], index[b]]])
}

/// Coupling between an expanded network (rows) and its source (columns)
/// sending each expanded node to its origin. Its distortion is zero.
pub fn expansion_coupling(mu_hat: &Array1<f64>, index: &[usize], source_mu: &Array1<f64>) -> Coupling {
    let mut c = Array2::zeros((mu_hat.len(), source_mu.len()));
    for (k, &s) in index.iter().enumerate() {
        c[[k, s]] += mu_hat[k];
    }
    Coupling::from_parts_unchecked(c, mu_hat.clone(), source_mu.clone())
}

/// Blown-up and aligned networks on a common expanded node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub x_hat: MeasureNetwork,
    pub y_hat: MeasureNetwork,
    pub plan: BlowupPlan,
}

impl AlignedPair {
    pub fn size(&self) -> usize {
        self.plan.len()
    }

    pub fn mu_hat(&self) -> &Array1<f64> {
        self.x_hat.mu()
    }

    /// Certificate coupling of `x_hat` with the source `X`.
    pub fn source_coupling(&self, source: &MeasureNetwork) -> Coupling {
        expansion_coupling(self.mu_hat(), &self.plan.source_index(), source.mu())
    }

    /// Certificate coupling of `y_hat` with the target `Y`.
    pub fn target_coupling(&self, target: &MeasureNetwork) -> Coupling {
        expansion_coupling(self.mu_hat(), &self.plan.target_index(), target.mu())
    }
}

/// Cleans sub-threshold dust from a coupling and restores its marginals.
fn clean_support(c: &Coupling) -> Array2<f64> {
    let m = c.matrix();
    let thr = support_threshold(m);
    let mut kept = m.mapv(|v| if v > thr { v } else { 0.0 });
    // Every marginal is positive, so every row and column keeps a cell.
    for (i, row) in m.axis_iter(Axis(0)).enumerate() {
        if kept.row(i).iter().all(|v| *v == 0.0) {
            let j = argmax(row.iter().copied());
            kept[[i, j]] = m[[i, j]].max(f64::MIN_POSITIVE);
        }
    }
    for (j, col) in m.axis_iter(Axis(1)).enumerate() {
        if kept.column(j).iter().all(|v| *v == 0.0) {
            let i = argmax(col.iter().copied());
            kept[[i, j]] = m[[i, j]].max(f64::MIN_POSITIVE);
        }
    }
    let dropped = m.iter().zip(kept.iter()).any(|(a, b)| a != b);
    if dropped {
        rebalance(&mut kept, c.row_marginal(), c.col_marginal());
    }
    kept
}

/// Alternating row/column scaling on a fixed support.
fn rebalance(m: &mut Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) {
    for _ in 0..1000 {
        for (mut row, &target) in m.axis_iter_mut(Axis(0)).zip(p) {
            let s: f64 = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|v| v * target / s);
            }
        }
        for (mut col, &target) in m.axis_iter_mut(Axis(1)).zip(q) {
            let s: f64 = col.sum();
            if s > 0.0 {
                col.mapv_inplace(|v| v * target / s);
            }
        }
        if crate::coupling::marginal_error(m, p, q) < 1e-15 {
            break;
        }
    }
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in it.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Blows up `X` and `Y` along the support of `C` and aligns `Y` to `X`.
pub fn blow_up(x: &MeasureNetwork, y: &MeasureNetwork, c: &Coupling) -> Result<AlignedPair> {
    if c.dim() != (x.size(), y.size()) {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {:?}, networks have {} and {} nodes",
            c.dim(),
            x.size(),
            y.size()
        )));
    }
    let cleaned = clean_support(c);
    let (n, m) = cleaned.dim();
    let mut nodes = Vec::new();
    let mut masses = Vec::new();
    let mut u = vec![0; n];
    let mut v = vec![0; m];
    for i in 0..n {
        for j in 0..m {
            let w = cleaned[[i, j]];
            if w > 0.0 {
                nodes.push((i, j));
                masses.push(w);
                u[i] += 1;
                v[j] += 1;
            }
        }
    }
    let plan = BlowupPlan { u, v, nodes };
    let mu_hat = Array1::from(masses);
    let x_hat = MeasureNetwork::new(pull_back(x.omega(), &plan.source_index()), mu_hat.clone())?;
    let y_hat = MeasureNetwork::new(pull_back(y.omega(), &plan.target_index()), mu_hat)?;
    Ok(AlignedPair { x_hat, y_hat, plan })
}

/// Half the distortion of the diagonal coupling of an aligned pair.
pub fn aligned_distance(pair: &AlignedPair) -> f64 {
    weighted_norm(&(pair.y_hat.omega() - pair.x_hat.omega()), pair.mu_hat()) / 2.0
}

/// `L^2(mu ⊗ mu)` norm of a square matrix.
pub fn weighted_norm(f: &Array2<f64>, mu: &Array1<f64>) -> f64 {
    weighted_inner(f, f, mu).max(0.0).sqrt()
}

/// `sum_ij f_ij g_ij mu_i mu_j`.
pub fn weighted_inner(f: &Array2<f64>, g: &Array2<f64>, mu: &Array1<f64>) -> f64 {
    f.indexed_iter()
        .map(|((i, j), a)| a * g[[i, j]] * mu[i] * mu[j])
        .sum()
}

/// Solves for a coupling, rounds it to a vertex when that costs nothing, and aligns.
pub fn align(
    x: &MeasureNetwork,
    y: &MeasureNetwork,
    params: &GwParams,
) -> Result<(AlignedPair, Coupling, SolveReport)> {
    let (c, report) = gw::solve_gw(x, y, params)?;
    let c = gw::round_to_vertex(x, y, &c, support_threshold(c.matrix()))?;
    let pair = blow_up(x, y, &c)?;
    Ok((pair, c, report))
}
