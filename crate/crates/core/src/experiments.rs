//! Seeded generators and experiment harnesses: block-model compression,
//! coupling support sizes, and diagonal/asymmetry sweeps of Frechet means.
//!
//! All randomness comes from `ChaCha8Rng`; normal variates are drawn with
//! `rand_distr`'s ziggurat sampler. Results are bit-reproducible for a given
//! seed within this implementation.

use std::io::Write;

use itertools::Itertools;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::align::{self, support_size};
use crate::error::{Error, Result};
use crate::frechet::{self, Compression, FrechetParams, Seed};
use crate::gw::GwParams;
use crate::network::MeasureNetwork;
use crate::par;

/// Largest block count matched by exhaustive permutation search.
pub const MAX_MATCH_BLOCKS: usize = 8;

/// Stochastic block model: `ω(y, y') ~ N(means[i, j], variance)` for
/// `y ∈ B_i`, `y' ∈ B_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    #[serde(with = "crate::network::matrix_rows")]
    pub means: Array2<f64>,
    pub variance: f64,
    pub rng_seed: u64,
}

impl SbmSpec {
    /// Five blocks of twenty nodes, variance 5, and the asymmetric Latin
    /// square of means `25 * ((i + 2j) mod 5)`.
    pub fn reference(rng_seed: u64) -> Self {
        Self {
            block_sizes: vec![20; 5],
            means: Array2::from_shape_fn((5, 5), |(i, j)| 25.0 * ((i + 2 * j) % 5) as f64),
            variance: 5.0,
            rng_seed,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.block_sizes.len();
        if b == 0 {
            return Err(Error::InvalidParams("no blocks".into()));
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::InvalidParams("empty block".into()));
        }
        if self.means.dim() != (b, b) {
            return Err(Error::DimensionMismatch(format!(
                "means are {:?} for {b} blocks",
                self.means.dim()
            )));
        }
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidParams("variance must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Samples a block-model network with uniform measure and shuffled node
/// order. Labels name the block of each node (`B0`, `B1`, ...).
pub fn generate_sbm(spec: &SbmSpec) -> Result<MeasureNetwork> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let block: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = block.len();
    let sd = spec.variance.sqrt();
    let mut omega = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let m = spec.means[[block[i], block[j]]];
            omega[[i, j]] = if sd > 0.0 {
                Normal::new(m, sd).expect("valid sd").sample(&mut rng)
            } else {
                m
            };
        }
    }
    let labels = block.iter().map(|b| format!("B{b}")).collect();
    let net = MeasureNetwork::with_labels(omega, Array1::from_elem(n, 1.0 / n as f64), Some(labels))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    net.permuted(&order)
}

/// Relabeling that best matches `recovered` to `target` in max norm.
///
/// Returns `perm` minimizing `max |recovered[perm[i], perm[j]] - target[i, j]|`
/// and that deviation; ties go to the lexicographically first permutation.
pub fn best_permutation(recovered: &Array2<f64>, target: &Array2<f64>) -> Result<(Vec<usize>, f64)> {
    let b = target.nrows();
    if recovered.dim() != (b, b) || target.ncols() != b {
        return Err(Error::DimensionMismatch("matrices to match differ in shape".into()));
    }
    if b > MAX_MATCH_BLOCKS {
        return Err(Error::InvalidParams(format!(
            "exhaustive matching supports at most {MAX_MATCH_BLOCKS} blocks"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..b).permutations(b) {
        let dev = max_deviation(recovered, target, &perm);
        if best.as_ref().is_none_or(|(_, d)| dev < *d) {
            best = Some((perm, dev));
        }
    }
    Ok(best.expect("at least one permutation"))
}

fn max_deviation(r: &Array2<f64>, t: &Array2<f64>, perm: &[usize]) -> f64 {
    t.indexed_iter()
        .map(|((i, j), v)| (r[[perm[i], perm[j]]] - v).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmReport {
    #[serde(with = "crate::network::matrix_rows")]
    pub recovered: Array2<f64>,
    #[serde(with = "crate::network::matrix_rows")]
    pub target: Array2<f64>,
    pub permutation: Vec<usize>,
    pub max_deviation: f64,
    /// Deviation of the single compressed average of the zero seed and `Y`.
    pub one_shot_deviation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Parameters used by [`sbm_compression_experiment`].
pub fn sbm_frechet_params(blocks: usize, rng_seed: u64) -> Result<FrechetParams> {
    Ok(FrechetParams {
        compress: Compression::ToSeedSize,
        seed: Seed::Network(MeasureNetwork::uniform(Array2::zeros((blocks, blocks)))?),
        gw: GwParams::default().with_seed(rng_seed),
        ..FrechetParams::default()
    })
}

/// Compresses a sampled block model onto a `B`-node zero network.
///
/// The compressed Frechet flow of `{0, Y}` is run from the zero seed; each
/// full step is the compressed average of the zero network and `Y` taken
/// at the current alignment, so the limit estimates `means / 2`.
pub fn sbm_compression_experiment(spec: &SbmSpec, rng_seed: u64) -> Result<SbmReport> {
    let params = sbm_frechet_params(spec.num_blocks(), rng_seed)?;
    sbm_compression_with(spec, &params)
}

pub fn sbm_compression_with(spec: &SbmSpec, params: &FrechetParams) -> Result<SbmReport> {
    let y = generate_sbm(spec)?;
    let b = spec.num_blocks();
    let zero = MeasureNetwork::uniform(Array2::zeros((b, b)))?;
    let target = &spec.means * 0.5;
    let one_shot = frechet::compressed_average(&zero, &y, &params.gw)?;
    let (_, one_shot_deviation) = best_permutation(one_shot.omega(), &target)?;
    let result = frechet::frechet_mean(&[zero, y], params)?;
    let recovered = result.mean.omega().clone();
    if recovered.dim() != (b, b) {
        return Err(Error::DimensionMismatch("compressed mean changed size".into()));
    }
    let (permutation, max_deviation) = best_permutation(&recovered, &target)?;
    Ok(SbmReport {
        recovered,
        target,
        permutation,
        max_deviation,
        one_shot_deviation,
        iterations: result.iterations,
        converged: result.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub n: usize,
    pub trial: usize,
    pub support: usize,
    /// `support / (2n)`.
    pub ratio: f64,
}

/// Pair of uniform networks with iid standard normal weights for trial
/// `trial` of size `n`.
pub fn gaussian_pair(n: usize, trial: usize, rng_seed: u64) -> Result<(MeasureNetwork, MeasureNetwork)> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(((n as u64) << 32) | trial as u64);
    let mut draw = || Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
    let x = draw();
    let y = draw();
    Ok((MeasureNetwork::uniform(x)?, MeasureNetwork::uniform(y)?))
}

/// Support sizes of solver couplings between random Gaussian pairs.
pub fn support_size_sweep(
    sizes: &[usize],
    trials: usize,
    rng_seed: u64,
    params: &GwParams,
) -> Result<Vec<SupportRow>> {
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..trials).map(move |t| (n, t)))
        .collect();
    par::try_map_range(jobs.len(), |k| {
        let (n, trial) = jobs[k];
        let (x, y) = gaussian_pair(n, trial, rng_seed)?;
        let (_, c, _) = align::align(&x, &y, params)?;
        let support = support_size(&c);
        Ok(SupportRow {
            n,
            trial,
            support,
            ratio: support as f64 / (2 * n) as f64,
        })
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// `(n, median support)` for every size, in first-appearance order.
pub fn median_support(rows: &[SupportRow]) -> Vec<(usize, f64)> {
    rows.iter()
        .map(|r| r.n)
        .unique()
        .map(|n| {
            let s: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.support as f64).collect();
            (n, median(&s).expect("nonempty"))
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(points: &[(f64, f64)]) -> Option<f64> {
    let k = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymMode {
    /// `Y_j + α D_j` with `D_j` the diagonal part.
    Diagonal,
    /// `S_j + α A_j` with `S_j`, `A_j` the symmetric and antisymmetric parts.
    Antisymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymSweepSpec {
    pub mode: AsymMode,
    /// Node counts of the two base networks.
    pub sizes: (usize, usize),
    pub alphas: Vec<f64>,
    /// Random Frechet seeds per `α`.
    pub seeds: usize,
    /// Symmetrize the base networks before decomposing.
    pub symmetrize: bool,
    pub data_seed: u64,
    pub frechet: FrechetParams,
}

impl AsymSweepSpec {
    pub fn new(mode: AsymMode, sizes: (usize, usize)) -> Self {
        Self {
            mode,
            sizes,
            alphas: (0..=10).map(|k| k as f64 / 10.0).collect(),
            seeds: 100,
            symmetrize: false,
            data_seed: 0,
            frechet: FrechetParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymRow {
    pub alpha: f64,
    pub seed: usize,
    pub final_loss: f64,
    pub final_size: usize,
    pub max_size: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// The two base networks: iid uniform `[0, 1)` weights, uniform measure.
pub fn asym_base_networks(spec: &AsymSweepSpec) -> Result<[MeasureNetwork; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.data_seed);
    let mut draw = |n: usize| {
        let mut m = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
        if spec.symmetrize {
            m = (&m + &m.t()) * 0.5;
        }
        MeasureNetwork::uniform(m)
    };
    Ok([draw(spec.sizes.0)?, draw(spec.sizes.1)?])
}

/// `X^(α)` for one base network.
pub fn asym_variant(x: &MeasureNetwork, mode: AsymMode, alpha: f64) -> Result<MeasureNetwork> {
    let w = x.omega();
    let omega = match mode {
        AsymMode::Diagonal => Array2::from_shape_fn(w.dim(), |(i, j)| {
            if i == j {
                alpha * w[[i, j]]
            } else {
                w[[i, j]]
            }
        }),
        AsymMode::Antisymmetric => {
            let s = (w + &w.t()) * 0.5;
            let a = (w - &w.t()) * 0.5;
            s + a * alpha
        }
    };
    x.with_omega(omega)
}

/// Runs the sweep on the generated base networks.
pub fn asymmetry_sweep(spec: &AsymSweepSpec) -> Result<Vec<AsymRow>> {
    asymmetry_sweep_on(&asym_base_networks(spec)?, spec)
}

/// Frechet means of `{X_1^(α), X_2^(α)}` from `spec.seeds` random seeds
/// for every `α`.
pub fn asymmetry_sweep_on(bases: &[MeasureNetwork], spec: &AsymSweepSpec) -> Result<Vec<AsymRow>> {
    if bases.is_empty() {
        return Err(Error::Empty);
    }
    let seed_size = bases.iter().map(|b| b.size()).max().expect("nonempty");
    let jobs: Vec<(f64, usize)> = spec
        .alphas
        .iter()
        .flat_map(|&a| (0..spec.seeds).map(move |s| (a, s)))
        .collect();
    par::try_map_range(jobs.len(), |k| {
        let (alpha, s) = jobs[k];
        let members = bases
            .iter()
            .map(|b| asym_variant(b, spec.mode, alpha))
            .collect::<Result<Vec<_>>>()?;
        let params = spec.frechet.clone().with_seed(Seed::Random {
            size: seed_size,
            rng_seed: spec.data_seed.wrapping_add(1 + s as u64),
        });
        let r = frechet::frechet_mean(&members, &params)?;
        Ok(AsymRow {
            alpha,
            seed: s,
            final_loss: r.loss,
            final_size: r.mean.size(),
            max_size: r.max_base_size(),
            iterations: r.iterations,
            converged: r.converged,
        })
    })
}

/// `(α, median final loss)` in first-appearance order.
pub fn median_loss_by_alpha(rows: &[AsymRow]) -> Vec<(f64, f64)> {
    let mut alphas: Vec<f64> = Vec::new();
    for r in rows {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    alphas
        .into_iter()
        .map(|a| {
            let l: Vec<f64> = rows.iter().filter(|r| r.alpha == a).map(|r| r.final_loss).collect();
            (a, median(&l).expect("nonempty"))
        })
        .collect()
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn noiseless_sbm_is_block_constant() {
        let spec = SbmSpec {
            block_sizes: vec![2, 3],
            means: array![[1.0, 2.0], [3.0, 4.0]],
            variance: 0.0,
            rng_seed: 7,
        };
        let y = generate_sbm(&spec).unwrap();
        let labels = y.labels().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let bi = (labels[i] == "B1") as usize;
                let bj = (labels[j] == "B1") as usize;
                assert_eq!(y.omega()[[i, j]], spec.means[[bi, bj]]);
            }
        }
        assert_eq!(generate_sbm(&spec).unwrap(), y);
    }

    #[test]
    fn single_block_network() {
        let spec = SbmSpec {
            block_sizes: vec![1],
            means: array![[3.0]],
            variance: 5.0,
            rng_seed: 1,
        };
        assert_eq!(generate_sbm(&spec).unwrap().size(), 1);
    }

    #[test]
    fn permutation_matching() {
        let t = array![[0.0, 1.0, 2.0], [3.0, 4.0, 5.0], [6.0, 7.0, 8.0]];
        let order = [2, 0, 1];
        let r = Array2::from_shape_fn((3, 3), |(i, j)| {
            let inv = |k: usize| order.iter().position(|&o| o == k).unwrap();
            t[[inv(i), inv(j)]]
        });
        let (perm, dev) = best_permutation(&r, &t).unwrap();
        assert_eq!(dev, 0.0);
        assert_eq!(perm, vec![2, 0, 1]);
    }

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        let s = fitted_slope(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_trials_give_an_empty_table() {
        let rows = support_size_sweep(&[5, 10], 0, 0, &GwParams::default()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn variants() {
        let x = MeasureNetwork::uniform(array![[1.0, 2.0], [4.0, 3.0]]).unwrap();
        let d = asym_variant(&x, AsymMode::Diagonal, 0.5).unwrap();
        assert_eq!(d.omega(), &array![[0.5, 2.0], [4.0, 1.5]]);
        let a = asym_variant(&x, AsymMode::Antisymmetric, 0.0).unwrap();
        assert_eq!(a.omega(), &array![[1.0, 3.0], [3.0, 3.0]]);
        let a1 = asym_variant(&x, AsymMode::Antisymmetric, 1.0).unwrap();
        assert_eq!(a1.omega(), x.omega());
    }
}
