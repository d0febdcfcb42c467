//! Tangent-space vectorization and weighted tangent PCA.
//!
//! A dataset is a set of tangent vectors at one common base, flattened
//! row-major into length-`N²` rows. All geometry uses the weights
//! `w_(ij) = mu_i mu_j`, so `<r, s>_w = Σ w r s` is the tangent inner product.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::align_members;
use crate::gw::GwParams;
use crate::network::MeasureNetwork;
use crate::tangent::TangentVector;

/// Eigenvalues below this fraction of the total variance count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentDataset {
    pub base: MeasureNetwork,
    /// `k x N²`, one flattened tangent per input network.
    #[serde(with = "crate::network::matrix_rows")]
    pub vectors: Array2<f64>,
    #[serde(with = "crate::network::vector")]
    pub weights: Array1<f64>,
}

impl TangentDataset {
    /// Stacks tangents that share one base.
    pub fn from_tangents(tangents: &[TangentVector]) -> Result<Self> {
        let first = tangents.first().ok_or(Error::Empty)?;
        let n = first.base.size();
        let mut vectors = Array2::zeros((tangents.len(), n * n));
        for (k, t) in tangents.iter().enumerate() {
            if t.base != first.base {
                return Err(Error::BaseMismatch);
            }
            vectors.row_mut(k).assign(&Array1::from_iter(t.f.iter().copied()));
        }
        Ok(Self {
            weights: pair_weights(first.base.mu()),
            base: first.base.clone(),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn base_size(&self) -> usize {
        self.base.size()
    }

    /// Row `k` as a tangent vector.
    pub fn tangent(&self, k: usize) -> Result<TangentVector> {
        if k >= self.len() {
            return Err(Error::IndexOutOfRange { index: k, len: self.len() });
        }
        TangentVector::new(self.base.clone(), self.unflatten(&self.vectors.row(k).to_owned())?)
    }

    pub fn unflatten(&self, row: &Array1<f64>) -> Result<Array2<f64>> {
        let n = self.base.size();
        row.clone()
            .into_shape_with_order((n, n))
            .map_err(|e| Error::DimensionMismatch(e.to_string()))
    }

    pub fn inner(&self, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        (a * b * &self.weights).sum()
    }

    /// Rows scaled by `sqrt(w)`: plain dot products of these are the
    /// weighted tangent inner products.
    pub fn features(&self) -> Array2<f64> {
        let s = self.weights.mapv(f64::sqrt);
        &self.vectors * &s
    }
}

/// `mu ⊗ mu` flattened row-major.
pub fn pair_weights(mu: &Array1<f64>) -> Array1<f64> {
    let n = mu.len();
    Array1::from_shape_fn(n * n, |k| mu[k / n] * mu[k % n])
}

/// Log maps of every network at a common blow-up of `base`.
pub fn vectorize_at_base(
    base: &MeasureNetwork,
    nets: &[MeasureNetwork],
    params: &GwParams,
) -> Result<TangentDataset> {
    let a = align_members(base, nets, params, None)?;
    let tangents: Vec<TangentVector> = (0..nets.len()).map(|k| a.tangent(k)).collect();
    TangentDataset::from_tangents(&tangents)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    #[serde(with = "crate::network::vector")]
    pub mean: Array1<f64>,
    /// Unit vectors in the weighted inner product, by decreasing variance.
    #[serde(with = "crate::network::vectors")]
    pub components: Vec<Array1<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// PCA of the centered rows in the weighted inner product, through the
/// `k x k` Gram matrix.
///
/// Variances use the `1 / (k - 1)` normalization. Each component's sign is
/// fixed so that its largest-magnitude entry is positive.
pub fn tangent_pca(ds: &TangentDataset, num_components: usize) -> Result<PcaResult> {
    let k = ds.len();
    if k < 2 {
        return Err(Error::InvalidParams(format!("PCA needs at least 2 rows, got {k}")));
    }
    let mean = ds.vectors.mean_axis(Axis(0)).expect("nonempty");
    let centered = &ds.vectors - &mean;
    let weighted = &centered * &ds.weights;
    let gram = weighted.dot(&centered.t());
    let g = DMatrix::from_fn(k, k, |i, j| 0.5 * (gram[[i, j]] + gram[[j, i]]));
    let eig = SymmetricEigen::new(g);
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateData("all tangent rows are equal".into()));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Vec::new();
    let mut variance = Vec::new();
    let mut ratio = Vec::new();
    for &i in order.iter().take(num_components) {
        let lambda = eig.eigenvalues[i];
        if lambda <= RANK_TOL * total {
            break;
        }
        let alpha = Array1::from_iter(eig.eigenvectors.column(i).iter().copied());
        let mut c = centered.t().dot(&alpha) / lambda.sqrt();
        let lead = c
            .iter()
            .copied()
            .fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            c.mapv_inplace(|v| -v);
        }
        components.push(c);
        variance.push(lambda / (k - 1) as f64);
        ratio.push(lambda / total);
    }
    Ok(PcaResult {
        mean,
        components,
        explained_variance: variance,
        explained_variance_ratio: ratio,
    })
}

/// `exp_base(mean + s * component)`.
pub fn project_along_component(
    pca: &PcaResult,
    base: &MeasureNetwork,
    component: usize,
    s: f64,
) -> Result<MeasureNetwork> {
    let c = pca.components.get(component).ok_or(Error::IndexOutOfRange {
        index: component,
        len: pca.components.len(),
    })?;
    let n = base.size();
    if c.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "component of length {} for a {n}-node base",
            c.len()
        )));
    }
    let f = (&pca.mean + &(c * s))
        .into_shape_with_order((n, n))
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    base.with_omega(base.omega() + &f)
}

/// Writes `label,f0,f1,...` rows; labels default to the row index.
pub fn write_features_csv<W: Write>(
    writer: W,
    features: &Array2<f64>,
    labels: Option<&[String]>,
) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != features.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} feature rows",
                l.len(),
                features.nrows()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut head = vec!["label".to_string()];
    head.extend((0..features.ncols()).map(|j| format!("f{j}")));
    w.write_record(&head)?;
    for (k, row) in features.rows().into_iter().enumerate() {
        let label = labels.map_or_else(|| k.to_string(), |l| l[k].clone());
        let mut rec = vec![label];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
