use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::matrix_to_rows;

/// Absolute per-entry tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-8;

/// A nonnegative `n x m` matrix whose row and column sums are the prescribed
/// marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    matrix: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl Coupling {
    /// Validates `matrix` against the marginals `p` (rows) and `q` (columns).
    pub fn new(matrix: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> Result<Self> {
        let (n, m) = matrix.dim();
        if p.len() != n || q.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "coupling is {n}x{m}, marginals have lengths {} and {}",
                p.len(),
                q.len()
            )));
        }
        if let Some(((i, j), v)) = matrix.indexed_iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParams(format!(
                "coupling entry ({i}, {j}) = {v} is not a finite nonnegative number"
            )));
        }
        check_marginals(&matrix, &p, &q, MARGINAL_TOL)?;
        Ok(Self {
            matrix,
            row_marginal: p,
            col_marginal: q,
        })
    }

    /// Builds without checks; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(matrix: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> Self {
        Self {
            matrix,
            row_marginal: p,
            col_marginal: q,
        }
    }

    /// The independent coupling `p q^T`.
    pub fn product(p: &Array1<f64>, q: &Array1<f64>) -> Self {
        let n = p.len();
        let m = q.len();
        let matrix = Array2::from_shape_fn((n, m), |(i, j)| p[i] * q[j]);
        Self::from_parts_unchecked(matrix, p.clone(), q.clone())
    }

    /// North-west corner rule. Equals `diag(p)` when `p == q`.
    pub fn northwest_corner(p: &Array1<f64>, q: &Array1<f64>) -> Self {
        let n = p.len();
        let m = q.len();
        let mut matrix = Array2::zeros((n, m));
        let mut r = p.to_vec();
        let mut c = q.to_vec();
        let (mut i, mut j) = (0, 0);
        while i < n && j < m {
            let x = r[i].min(c[j]);
            matrix[[i, j]] = x;
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
        Self::from_parts_unchecked(matrix, p.clone(), q.clone())
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row_marginal(&self) -> &Array1<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Array1<f64> {
        &self.col_marginal
    }

    pub fn dim(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    /// Swaps the roles of the two marginals.
    pub fn transposed(&self) -> Self {
        Self::from_parts_unchecked(
            self.matrix.t().to_owned(),
            self.col_marginal.clone(),
            self.row_marginal.clone(),
        )
    }

    /// Largest absolute deviation of the row and column sums from the marginals.
    pub fn marginal_error(&self) -> f64 {
        marginal_error(&self.matrix, &self.row_marginal, &self.col_marginal)
    }
}

pub(crate) fn marginal_error(matrix: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    let rows = matrix.sum_axis(Axis(1));
    let cols = matrix.sum_axis(Axis(0));
    let r = rows
        .iter()
        .zip(p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let c = cols
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.max(c)
}

fn check_marginals(matrix: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>, tol: f64) -> Result<()> {
    let err = marginal_error(matrix, p, q);
    if err > tol {
        return Err(Error::InvalidParams(format!(
            "coupling marginals off by {err:e} (tolerance {tol:e})"
        )));
    }
    Ok(())
}

/// Outcome of a Gromov-Wasserstein solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Distortion `dis(C)` of the returned coupling.
    pub cost: f64,
    /// `cost / 2`.
    pub gw_distance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Squared distortion after each accepted iterate (first entry is the start).
    pub objective_trace: Vec<f64>,
}

/// Wire format for coupling files: `{"matrix": [[..]], "cost": r}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingFile {
    pub matrix: Vec<Vec<f64>>,
    pub cost: f64,
}

impl CouplingFile {
    pub fn new(c: &Coupling, cost: f64) -> Self {
        Self {
            matrix: matrix_to_rows(c.matrix()),
            cost,
        }
    }
}
