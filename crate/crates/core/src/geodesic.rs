//! Geodesics between measure networks.
//!
//! Given an optimal coupling `C` of `X` and `Y`, the curve
//! `t -> (1 - t) ω_X(x, x') + t ω_Y(y, y')` on the support of `C` is a
//! geodesic. [`geodesic_naive`] builds it directly on the support cells;
//! [`GeodesicRep`] stores the blown-up, aligned endpoints instead and
//! evaluates by linear interpolation.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::align::{self, support_threshold, AlignedPair};
use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::gw::GwParams;
use crate::network::MeasureNetwork;

/// Geodesic on the support of `c`, evaluated at `t`.
///
/// Nodes are the cells `(x, y)` with `c[x, y]` above the support threshold,
/// in row-major order, weighted by `c` (renormalized after dropping dust).
pub fn geodesic_naive(
    x: &MeasureNetwork,
    y: &MeasureNetwork,
    c: &Coupling,
    t: f64,
) -> Result<MeasureNetwork> {
    check_t(t)?;
    if c.dim() != (x.size(), y.size()) {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {:?}, networks have {} and {} nodes",
            c.dim(),
            x.size(),
            y.size()
        )));
    }
    let thr = support_threshold(c.matrix());
    let cells: Vec<(usize, usize, f64)> = c
        .matrix()
        .indexed_iter()
        .filter(|(_, v)| **v > thr)
        .map(|((i, j), v)| (i, j, *v))
        .collect();
    let total: f64 = cells.iter().map(|c| c.2).sum();
    let n = cells.len();
    let omega = Array2::from_shape_fn((n, n), |(a, b)| {
        let (i, j, _) = cells[a];
        let (k, l, _) = cells[b];
        (1.0 - t) * x.omega()[[i, k]] + t * y.omega()[[j, l]]
    });
    let mu = Array1::from_iter(cells.iter().map(|c| c.2 / total));
    MeasureNetwork::new(omega, mu)
}

/// Minimal aligned representation of a geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicRep {
    pub pair: AlignedPair,
    /// `d_N(X, Y)` realized by the aligning coupling.
    pub half_length: f64,
}

impl GeodesicRep {
    pub fn from_pair(pair: AlignedPair) -> Self {
        let half_length = align::aligned_distance(&pair);
        Self { pair, half_length }
    }

    /// Geodesic induced by a given coupling.
    pub fn from_coupling(x: &MeasureNetwork, y: &MeasureNetwork, c: &Coupling) -> Result<Self> {
        Ok(Self::from_pair(align::blow_up(x, y, c)?))
    }

    pub fn size(&self) -> usize {
        self.pair.size()
    }

    /// `((1 - t) ω_X̂ + t ω_Ŷ, μ̂)`.
    pub fn evaluate(&self, t: f64) -> Result<MeasureNetwork> {
        check_t(t)?;
        let omega = self.pair.x_hat.omega() * (1.0 - t) + self.pair.y_hat.omega() * t;
        self.pair.x_hat.with_omega(omega)
    }

    /// Evaluates on every point of a grid.
    pub fn sample(&self, ts: &[f64]) -> Result<Vec<MeasureNetwork>> {
        ts.iter().map(|&t| self.evaluate(t)).collect()
    }
}

/// Solves, blows up and aligns `x` and `y`.
pub fn geodesic_aligned(
    x: &MeasureNetwork,
    y: &MeasureNetwork,
    params: &GwParams,
) -> Result<GeodesicRep> {
    let (pair, _, _) = align::align(x, y, params)?;
    Ok(GeodesicRep::from_pair(pair))
}

/// `n` evenly spaced parameters from 0 to 1 inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

/// Nodes whose mass is below `fraction` of the largest node mass.
pub fn low_weight_mask(net: &MeasureNetwork, fraction: f64) -> Vec<bool> {
    let max = net.mu().iter().fold(0.0_f64, |a, v| a.max(*v));
    net.mu().iter().map(|m| *m < fraction * max).collect()
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("geodesic parameter {t} is outside [0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn example() -> (MeasureNetwork, MeasureNetwork) {
        (
            MeasureNetwork::new(array![[1.0]], array![1.0]).unwrap(),
            MeasureNetwork::new(array![[0.0, 1.0], [1.0, 0.0]], array![0.5, 0.5]).unwrap(),
        )
    }

    #[test]
    fn point_to_pair_midpoint() {
        let (x, y) = example();
        let g = geodesic_aligned(&x, &y, &GwParams::default()).unwrap();
        let z = g.evaluate(0.5).unwrap();
        assert_eq!(z.omega(), &array![[0.5, 1.0], [1.0, 0.5]]);
        assert_eq!(z.mu(), &array![0.5, 0.5]);
        assert!((g.half_length - 0.125f64.sqrt()).abs() < 1e-12);

        let c = Coupling::product(x.mu(), y.mu());
        assert_eq!(geodesic_naive(&x, &y, &c, 0.5).unwrap(), z);
    }

    #[test]
    fn endpoints_are_blowups() {
        let (x, y) = example();
        let g = geodesic_aligned(&x, &y, &GwParams::default()).unwrap();
        assert_eq!(&g.evaluate(0.0).unwrap(), &g.pair.x_hat);
        assert_eq!(&g.evaluate(1.0).unwrap(), &g.pair.y_hat);
    }

    #[test]
    fn rejects_parameters_outside_unit_interval() {
        let (x, y) = example();
        let g = geodesic_aligned(&x, &y, &GwParams::default()).unwrap();
        assert!(matches!(g.evaluate(1.5), Err(Error::OutOfRange(_))));
        assert!(matches!(g.evaluate(-0.1), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn grid_and_mask() {
        assert_eq!(uniform_grid(5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(uniform_grid(0).is_empty());
        let n = MeasureNetwork::new(Array2::zeros((3, 3)), array![0.6, 0.3, 0.1]).unwrap();
        assert_eq!(low_weight_mask(&n, 0.5), vec![false, false, true]);
    }
}
