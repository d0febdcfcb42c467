//! Tangent vectors at a network: log and exp maps, the `L^2(mu ⊗ mu)` inner
//! product, and the injectivity radius certificate.
//!
//! A tangent vector is stored together with the concrete representative of
//! the base class it lives on, so arithmetic and inner products require
//! identical bases; nothing is re-aligned implicitly.

use std::ops::{Add, Mul, Neg, Sub};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::align::{self, weighted_inner, AlignedPair, BlowupPlan};
use crate::error::{Error, Result};
use crate::gw::GwParams;
use crate::network::MeasureNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: MeasureNetwork,
    #[serde(with = "crate::network::matrix_rows")]
    pub f: Array2<f64>,
    /// Blow-up that produced `base`, when it came from a log map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<BlowupPlan>,
}

impl TangentVector {
    pub fn new(base: MeasureNetwork, f: Array2<f64>) -> Result<Self> {
        let n = base.size();
        if f.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "tangent matrix is {:?} on a {n}-node base",
                f.dim()
            )));
        }
        if let Some(((row, col), _)) = f.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row, col });
        }
        Ok(Self { base, f, plan: None })
    }

    pub fn zero(base: MeasureNetwork) -> Self {
        let n = base.size();
        Self {
            base,
            f: Array2::zeros((n, n)),
            plan: None,
        }
    }

    pub fn with_plan(mut self, plan: BlowupPlan) -> Self {
        self.plan = Some(plan);
        self
    }

    pub fn norm(&self) -> f64 {
        align::weighted_norm(&self.f, self.base.mu())
    }

    pub fn max_abs(&self) -> f64 {
        self.f.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            base: self.base.clone(),
            f: &self.f * s,
            plan: self.plan.clone(),
        }
    }

    fn same_base(&self, other: &Self) -> Result<()> {
        if self.base == other.base {
            Ok(())
        } else {
            Err(Error::BaseMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_base(other)?;
        Ok(Self {
            base: self.base.clone(),
            f: &self.f + &other.f,
            plan: self.plan.clone(),
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&-other)
    }
}

impl Neg for &TangentVector {
    type Output = TangentVector;
    fn neg(self) -> TangentVector {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for &TangentVector {
    type Output = TangentVector;
    fn mul(self, s: f64) -> TangentVector {
        self.scaled(s)
    }
}

/// Panicking sum; use [`TangentVector::try_add`] when bases may differ.
impl Add for &TangentVector {
    type Output = TangentVector;
    fn add(self, other: &TangentVector) -> TangentVector {
        self.try_add(other).expect("tangent vectors on different bases")
    }
}

impl Sub for &TangentVector {
    type Output = TangentVector;
    fn sub(self, other: &TangentVector) -> TangentVector {
        self.try_sub(other).expect("tangent vectors on different bases")
    }
}

/// `<v, w>` in `L^2(mu ⊗ mu)` on their shared base.
pub fn inner_product(v: &TangentVector, w: &TangentVector) -> Result<f64> {
    v.same_base(w)?;
    Ok(weighted_inner(&v.f, &w.f, v.base.mu()))
}

/// Log map with respect to the coupling found by the solver: `ω_Ŷ - ω_X̂`
/// on the blown-up base `X̂`.
pub fn log_map(
    x: &MeasureNetwork,
    y: &MeasureNetwork,
    params: &GwParams,
) -> Result<(TangentVector, AlignedPair)> {
    let (pair, _, _) = align::align(x, y, params)?;
    Ok((log_from_pair(&pair), pair))
}

/// Tangent vector of an already aligned pair.
pub fn log_from_pair(pair: &AlignedPair) -> TangentVector {
    TangentVector {
        base: pair.x_hat.clone(),
        f: pair.y_hat.omega() - pair.x_hat.omega(),
        plan: Some(pair.plan.clone()),
    }
}

/// `(Z, ω_Z + f, μ_Z)`.
pub fn exp_map(v: &TangentVector) -> Result<MeasureNetwork> {
    v.base.with_omega(v.base.omega() + &v.f)
}

/// Half the smallest strictly positive gap between weight values; infinite
/// for constant weights.
pub fn injectivity_radius(x: &MeasureNetwork) -> f64 {
    let mut values: Vec<f64> = x.omega().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min)
        / 2.0
}

/// Sup-norm certificates for a tangent vector at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    /// `max |f| < ε`: `exp(f)` ends a geodesic from the base.
    pub geodesic: bool,
    /// `max |f| < ε / 2`: the exp map is injective around `f`.
    pub injective: bool,
}

/// Certificates for `v` using the injectivity radius of `x`.
///
/// `x` must be weakly isomorphic to `v.base`; blow-ups do not change the set
/// of weight values, so passing the unexpanded network is fine.
pub fn geodesic_certificate(x: &MeasureNetwork, v: &TangentVector) -> Certificate {
    let eps = injectivity_radius(x);
    let m = v.max_abs();
    Certificate {
        geodesic: m < eps,
        injective: m < eps / 2.0,
    }
}
