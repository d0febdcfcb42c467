//! Frechet loss, its gradient, and gradient-flow means.
//!
//! With `F_S(X) = (1/n) Σ_k d_N(X, Y_k)²`, aligning every member to a common
//! blow-up `X̂` of `X` gives the gradient `g = 2 (ω_X̂ - (1/n) Σ_k ω_Ŷ_k)` as a
//! tangent vector at `X̂`. A step `X ← exp(-τ g)` with `τ = 1/2` lands on the
//! entrywise mean of the aligned members.
//!
//! Distances are half distortions, so along a direction `f` with frozen
//! couplings `d/dt F(exp(t f)) = <f, g> / 4`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{self, pull_back, weighted_inner, weighted_norm, AlignedPair};
use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::gw::{self, GwParams, InitCoupling};
use crate::network::MeasureNetwork;
use crate::par;
use crate::tangent::TangentVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `full_steps` steps of `τ = 1/2`, then Armijo backtracking from `τ = 1/2`.
    FullThenArmijo,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compression {
    None,
    /// Block-average every log map back onto the seed's node set.
    ToSeedSize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    FirstMember,
    Network(MeasureNetwork),
    /// Uniform `[0, 1)` weights and uniform measure on `size` nodes.
    Random { size: usize, rng_seed: u64 },
}

impl Seed {
    pub fn resolve(&self, members: &[MeasureNetwork]) -> Result<MeasureNetwork> {
        match self {
            Seed::FirstMember => members.first().cloned().ok_or(Error::Empty),
            Seed::Network(n) => Ok(n.clone()),
            Seed::Random { size, rng_seed } => random_network(*size, *rng_seed),
        }
    }
}

/// Uniform-measure network with iid uniform `[0, 1)` weights.
pub fn random_network(size: usize, rng_seed: u64) -> Result<MeasureNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    MeasureNetwork::uniform(Array2::from_shape_fn((size, size), |_| rng.random::<f64>()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetParams {
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub full_steps: usize,
    pub armijo_beta: f64,
    pub armijo_sigma: f64,
    pub max_backtracks: usize,
    /// Relative loss change counted as stagnation.
    pub loss_tol: f64,
    /// Consecutive stagnant iterations that end the run.
    pub patience: usize,
    pub compress: Compression,
    /// Heavy-ball coefficient; `None` disables momentum.
    pub momentum: Option<f64>,
    /// Stop (unconverged) once the aligned base exceeds this many nodes.
    pub max_base_size: Option<usize>,
    pub seed: Seed,
    pub gw: GwParams,
}

impl Default for FrechetParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            step_rule: StepRule::FullThenArmijo,
            full_steps: 5,
            armijo_beta: 0.5,
            armijo_sigma: 1e-4,
            max_backtracks: 30,
            loss_tol: 1e-8,
            patience: 3,
            compress: Compression::None,
            momentum: None,
            max_base_size: None,
            seed: Seed::FirstMember,
            gw: GwParams::default(),
        }
    }
}

impl FrechetParams {
    pub fn with_seed(mut self, seed: Seed) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gw.validate()?;
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.armijo_beta > 0.0 && self.armijo_beta < 1.0) {
            return bad("armijo_beta must lie in (0, 1)");
        }
        if !(self.armijo_sigma > 0.0 && self.armijo_sigma < 1.0) {
            return bad("armijo_sigma must lie in (0, 1)");
        }
        if !(self.loss_tol > 0.0) {
            return bad("loss_tol must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if let StepRule::Fixed(t) = self.step_rule {
            if !(t > 0.0 && t.is_finite()) {
                return bad("fixed step must be positive");
            }
        }
        if let Some(m) = self.momentum {
            if !(0.0..1.0).contains(&m) {
                return bad("momentum must lie in [0, 1)");
            }
        }
        Ok(())
    }
}

/// `(1/n) Σ_k d_N(Y_k, z)²` with independently solved couplings.
pub fn frechet_loss(members: &[MeasureNetwork], z: &MeasureNetwork, params: &GwParams) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Empty);
    }
    let d = par::try_map_range(members.len(), |k| gw::gw_distance(&members[k], z, params))?;
    Ok(d.iter().map(|v| v * v).sum::<f64>() / members.len() as f64)
}

/// Members aligned onto one common blow-up of a base network.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Common base after all blow-ups.
    pub base: MeasureNetwork,
    /// `ω_Ŷ_k - ω_base` for every member.
    pub tangents: Vec<Array2<f64>>,
    /// Member node matched to every base node.
    pub maps: Vec<Vec<usize>>,
    /// Node of the starting base every final base node descends from.
    pub origin: Vec<usize>,
}

impl Alignment {
    /// Squared distances realized by the alignment.
    pub fn squared_distances(&self) -> Vec<f64> {
        self.tangents
            .iter()
            .map(|f| weighted_norm(f, self.base.mu()).powi(2) / 4.0)
            .collect()
    }

    pub fn loss(&self) -> f64 {
        let d = self.squared_distances();
        d.iter().sum::<f64>() / d.len() as f64
    }

    pub fn tangent(&self, k: usize) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            f: self.tangents[k].clone(),
            plan: None,
        }
    }

    /// Mean of the member tangents.
    pub fn mean_tangent(&self) -> Array2<f64> {
        let n = self.base.size();
        let mut m = Array2::<f64>::zeros((n, n));
        for f in &self.tangents {
            m += f;
        }
        m / self.tangents.len() as f64
    }

    /// `g = -2 * mean(f_k)` at the common base.
    pub fn gradient(&self) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            f: self.mean_tangent() * -2.0,
            plan: None,
        }
    }

    /// Diagonal-style couplings of the base to each member.
    pub fn member_couplings(&self, members: &[MeasureNetwork]) -> Vec<Coupling> {
        self.maps
            .iter()
            .zip(members)
            .map(|(map, y)| map_coupling(self.base.mu(), map, y))
            .collect()
    }
}

/// `C[b, map(b)] += mu_b`.
fn map_coupling(mu: &Array1<f64>, map: &[usize], y: &MeasureNetwork) -> Coupling {
    let mut m = Array2::zeros((mu.len(), y.size()));
    for (b, &t) in map.iter().enumerate() {
        m[[b, t]] += mu[b];
    }
    let col = m.sum_axis(ndarray::Axis(0));
    Coupling::from_parts_unchecked(m, mu.clone(), col)
}

/// Solves `base` against `y`, also trying `warm` as a start, and rounds the
/// winner to a vertex when that is free.
pub fn solve_member(
    base: &MeasureNetwork,
    y: &MeasureNetwork,
    params: &GwParams,
    warm: Option<&Coupling>,
) -> Result<Coupling> {
    let (mut c, report) = gw::solve_gw(base, y, params)?;
    if let Some(w) = warm {
        let p = params.clone().with_init(InitCoupling::Given(w.clone())).with_restarts(0);
        let (cw, rw) = gw::solve_gw(base, y, &p)?;
        if rw.cost <= report.cost {
            c = cw;
        }
    }
    gw::round_to_vertex(base, y, &c, align::support_threshold(c.matrix()))
}

/// Solves every member against `base` (in parallel) and merges the
/// resulting blow-ups into one common base.
///
/// Member `k`'s coupling is lifted to the current common base (see
/// `lift_coupling`), which preserves its distortion, and that base is then
/// blown up along it. Earlier tangents and
/// maps are pulled back along every new blow-up.
pub fn align_members(
    base: &MeasureNetwork,
    members: &[MeasureNetwork],
    params: &GwParams,
    warm: Option<&[Coupling]>,
) -> Result<Alignment> {
    if members.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(w) = warm {
        if w.len() != members.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} warm couplings for {} members",
                w.len(),
                members.len()
            )));
        }
    }
    let couplings = par::try_map_range(members.len(), |k| {
        solve_member(base, &members[k], params, warm.map(|w| &w[k]))
    })?;
    let mut current = base.clone();
    let mut origin: Vec<usize> = (0..base.size()).collect();
    let mut tangents: Vec<Array2<f64>> = Vec::with_capacity(members.len());
    let mut maps: Vec<Vec<usize>> = Vec::with_capacity(members.len());
    for (y, c) in members.iter().zip(&couplings) {
        let lifted = lift_coupling(c, base.mu(), &current, &origin);
        let pair = align::blow_up(&current, y, &lifted)?;
        let idx = pair.plan.source_index();
        for f in tangents.iter_mut() {
            *f = pull_back(f, &idx);
        }
        for map in maps.iter_mut() {
            *map = idx.iter().map(|&b| map[b]).collect();
        }
        origin = idx.iter().map(|&b| origin[b]).collect();
        tangents.push(pair.y_hat.omega() - pair.x_hat.omega());
        maps.push(pair.plan.target_index());
        current = pair.x_hat;
    }
    Ok(Alignment {
        base: current,
        tangents,
        maps,
        origin,
    })
}

/// Lifts `c` (from the starting base) to the current common base.
///
/// Copies of a node carry identical weights, so every split of its row has
/// the same distortion. Each row is split north-west-corner style: copies
/// and targets are laid out as consecutive intervals of the row's mass and
/// paired by overlap. This keeps the lift sparse, and identical members
/// reuse the copies an earlier member created.
fn lift_coupling(
    c: &Coupling,
    base_mu: &Array1<f64>,
    current: &MeasureNetwork,
    origin: &[usize],
) -> Coupling {
    let m = c.dim().1;
    let mu = current.mu();
    let mut matrix = Array2::<f64>::zeros((origin.len(), m));
    for (o, &total) in base_mu.iter().enumerate() {
        let copies: Vec<usize> = (0..origin.len()).filter(|&b| origin[b] == o).collect();
        let copy_total: f64 = copies.iter().map(|&b| mu[b]).sum();
        let row = c.matrix().row(o);
        let row_total = row.sum();
        if row_total <= 0.0 {
            continue;
        }
        let scale = copy_total / row_total;
        let crumb = 1e-12 * total;
        let mut lo_b = 0.0;
        for &b in &copies {
            let hi_b = lo_b + mu[b];
            let mut lo_y = 0.0;
            for (y, &v) in row.iter().enumerate() {
                let hi_y = lo_y + v * scale;
                let overlap = hi_b.min(hi_y) - lo_b.max(lo_y);
                if overlap > crumb {
                    matrix[[b, y]] = overlap;
                }
                lo_y = hi_y;
            }
            lo_b = hi_b;
        }
    }
    let col = matrix.sum_axis(ndarray::Axis(0));
    Coupling::from_parts_unchecked(matrix, mu.clone(), col)
}

/// Frechet gradient at `x`: the tangent `g = 2 (ω_X̂ - mean ω_Ŷ_k)` together
/// with the alignment it was computed from.
pub fn frechet_gradient(
    members: &[MeasureNetwork],
    x: &MeasureNetwork,
    params: &GwParams,
) -> Result<(TangentVector, Alignment)> {
    let a = align_members(x, members, params, None)?;
    Ok((a.gradient(), a))
}

/// Compressed log map: the aligned tangent `ω_Ŷ - ω_X̂` averaged over the
/// blow-up copies of each node pair of `X`.
pub fn compress_log(x: &MeasureNetwork, y: &MeasureNetwork, params: &GwParams) -> Result<Array2<f64>> {
    let (pair, _, _) = align::align(x, y, params)?;
    Ok(compress_pair(x, &pair))
}

/// `v(x, x') = Σ ω_Ŷ((x,i),(x',j)) / (u_x u_x') - ω_X(x, x')` for an
/// aligned pair whose source is `x`.
pub fn compress_pair(x: &MeasureNetwork, pair: &AlignedPair) -> Array2<f64> {
    let n = x.size();
    let mut sums = Array2::<f64>::zeros((n, n));
    let src = pair.plan.source_index();
    let yo = pair.y_hat.omega();
    for (a, &i) in src.iter().enumerate() {
        for (b, &j) in src.iter().enumerate() {
            sums[[i, j]] += yo[[a, b]];
        }
    }
    let u = &pair.plan.u;
    Array2::from_shape_fn((n, n), |(i, j)| {
        sums[[i, j]] / (u[i] * u[j]) as f64 - x.omega()[[i, j]]
    })
}

/// `(X, ω_X + v / 2, μ_X)` with `v` the compressed log map of `y`.
pub fn compressed_average(
    x: &MeasureNetwork,
    y: &MeasureNetwork,
    params: &GwParams,
) -> Result<MeasureNetwork> {
    let v = compress_log(x, y, params)?;
    x.with_omega(x.omega() + &(v * 0.5))
}

/// Compressed tangents of every member at `x`, with the couplings used.
fn compressed_members(
    x: &MeasureNetwork,
    members: &[MeasureNetwork],
    params: &GwParams,
    warm: Option<&[Coupling]>,
) -> Result<(Vec<Array2<f64>>, Vec<f64>, Vec<Coupling>)> {
    let out = par::try_map_range(members.len(), |k| {
        let c = solve_member(x, &members[k], params, warm.map(|w| &w[k]))?;
        let pair = align::blow_up(x, &members[k], &c)?;
        let d = align::aligned_distance(&pair);
        Ok::<_, Error>((compress_pair(x, &pair), d * d, c))
    })?;
    let mut vs = Vec::new();
    let mut ds = Vec::new();
    let mut cs = Vec::new();
    for (v, d, c) in out {
        vs.push(v);
        ds.push(d);
        cs.push(c);
    }
    Ok((vs, ds, cs))
}

/// One row of the optimization trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub base_size: usize,
    /// Step length that produced this iterate (0 for the seed).
    pub step: f64,
    /// `(1/n) Σ ‖v_k‖² / 4` of the compressed tangents, when compressing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressed_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetResult {
    /// Lowest-loss iterate.
    pub mean: MeasureNetwork,
    pub loss: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
}

impl FrechetResult {
    pub fn max_base_size(&self) -> usize {
        self.trace.iter().map(|r| r.base_size).max().unwrap_or(0)
    }
}

/// Loss, gradient and warm-start data at one iterate.
struct State {
    x: MeasureNetwork,
    /// Representative of `x` the gradient lives on.
    base: MeasureNetwork,
    origin: Vec<usize>,
    loss: f64,
    compressed_loss: Option<f64>,
    grad: Array2<f64>,
    warm: Vec<Coupling>,
}

fn evaluate(
    x: MeasureNetwork,
    members: &[MeasureNetwork],
    params: &FrechetParams,
    warm: Option<&[Coupling]>,
) -> Result<State> {
    match params.compress {
        Compression::None => {
            let a = align_members(&x, members, &params.gw, warm)?;
            let warm = a.member_couplings(members);
            Ok(State {
                loss: a.loss(),
                compressed_loss: None,
                grad: a.gradient().f,
                base: a.base.clone(),
                origin: a.origin,
                x,
                warm,
            })
        }
        Compression::ToSeedSize => {
            let (vs, ds, cs) = compressed_members(&x, members, &params.gw, warm)?;
            let n = members.len() as f64;
            let compressed = vs
                .iter()
                .map(|v| weighted_norm(v, x.mu()).powi(2) / 4.0)
                .sum::<f64>()
                / n;
            let mut mean = Array2::<f64>::zeros(x.omega().dim());
            for v in &vs {
                mean += v;
            }
            Ok(State {
                loss: ds.iter().sum::<f64>() / n,
                compressed_loss: Some(compressed),
                grad: mean * (-2.0 / n),
                base: x.clone(),
                origin: (0..x.size()).collect(),
                x,
                warm: cs,
            })
        }
    }
}

/// Frechet mean by gradient flow from `params.seed`.
pub fn frechet_mean(members: &[MeasureNetwork], params: &FrechetParams) -> Result<FrechetResult> {
    params.validate()?;
    if members.is_empty() {
        return Err(Error::Empty);
    }
    let seed = params.seed.resolve(members)?;
    let mut state = evaluate(seed, members, params, None)?;
    let mut trace = vec![TraceRow {
        iter: 0,
        loss: state.loss,
        base_size: state.base.size(),
        step: 0.0,
        compressed_loss: state.compressed_loss,
    }];
    let mut best = (state.loss, state.x.clone());
    let mut velocity: Option<Array2<f64>> = None;
    let mut stagnant = 0;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=params.max_iters {
        iterations = iter;
        if let Some(limit) = params.max_base_size {
            if state.base.size() > limit {
                break;
            }
        }
        let mu = state.base.mu().clone();
        let g = &state.grad;
        // Descent direction, with the previous velocity pulled onto this base.
        let mut dir = -g;
        if let (Some(m), Some(v)) = (params.momentum, velocity.as_ref()) {
            let heavy = &dir - &(pull_back(v, &state.origin) * m);
            if weighted_inner(&heavy, g, &mu) < 0.0 {
                dir = heavy;
            }
        }
        let slope = weighted_inner(&dir, g, &mu) / 4.0;

        let fixed = match params.step_rule {
            StepRule::Fixed(t) => Some(t),
            StepRule::FullThenArmijo if iter <= params.full_steps => Some(0.5),
            StepRule::FullThenArmijo => None,
        };
        let next = match fixed {
            Some(t) => Some((t, step(&state, &dir, t, members, params)?)),
            None => {
                let mut t = 0.5;
                let mut accepted = None;
                for _ in 0..=params.max_backtracks {
                    let cand = step(&state, &dir, t, members, params)?;
                    if cand.loss <= state.loss + params.armijo_sigma * t * slope {
                        accepted = Some((t, cand));
                        break;
                    }
                    t *= params.armijo_beta;
                }
                accepted
            }
        };

        let prev_loss = state.loss;
        let t = match next {
            Some((t, cand)) => {
                velocity = Some(&dir * -1.0);
                state = cand;
                t
            }
            None => {
                velocity = None;
                0.0
            }
        };
        trace.push(TraceRow {
            iter,
            loss: state.loss,
            base_size: state.base.size(),
            step: t,
            compressed_loss: state.compressed_loss,
        });
        if state.loss < best.0 {
            best = (state.loss, state.x.clone());
        }
        let rel = (prev_loss - state.loss).abs() / prev_loss.abs().max(f64::MIN_POSITIVE);
        if rel < params.loss_tol || state.loss == 0.0 {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        if stagnant >= params.patience {
            converged = true;
            break;
        }
    }
    Ok(FrechetResult {
        mean: best.1,
        loss: best.0,
        trace,
        converged,
        iterations,
    })
}

fn step(
    state: &State,
    dir: &Array2<f64>,
    t: f64,
    members: &[MeasureNetwork],
    params: &FrechetParams,
) -> Result<State> {
    let x = state.base.with_omega(state.base.omega() + &(dir * t))?;
    evaluate(x, members, params, Some(&state.warm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn example() -> (MeasureNetwork, MeasureNetwork) {
        (
            MeasureNetwork::new(array![[1.0, 1.0], [1.0, 1.0]], array![0.5, 0.5]).unwrap(),
            MeasureNetwork::new(array![[0.0, 1.0], [1.0, 0.0]], array![0.5, 0.5]).unwrap(),
        )
    }

    #[test]
    fn point_and_pair_mean() {
        let (xh, y) = example();
        let params = FrechetParams::default();
        let r = frechet_mean(&[xh, y], &params).unwrap();
        assert!(r.converged);
        let z = MeasureNetwork::new(array![[0.5, 1.0], [1.0, 0.5]], array![0.5, 0.5]).unwrap();
        assert!(gw::gw_distance(&r.mean, &z, &params.gw).unwrap() < 1e-9);
        assert!((r.loss - 0.03125).abs() < 1e-12);
    }

    #[test]
    fn single_member_gradient_is_minus_twice_log() {
        let (xh, y) = example();
        let (g, a) = frechet_gradient(std::slice::from_ref(&y), &xh, &GwParams::default()).unwrap();
        assert_eq!(g.f, a.tangents[0].mapv(|v| -2.0 * v));
    }

    #[test]
    fn mean_of_single_member_is_fixed() {
        let (_, y) = example();
        let r = frechet_mean(std::slice::from_ref(&y), &FrechetParams::default()).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.converged);
        assert_eq!(r.trace.len(), 4);
    }

    #[test]
    fn compress_one_node_zero_seed() {
        let x = MeasureNetwork::new(array![[0.0]], array![1.0]).unwrap();
        let (_, y) = example();
        let v = compress_log(&x, &y, &GwParams::default()).unwrap();
        assert_eq!(v, array![[0.5]]);
        let avg = compressed_average(&x, &y, &GwParams::default()).unwrap();
        assert_eq!(avg.omega(), &array![[0.25]]);
    }

    #[test]
    fn loss_of_member_set_containing_target() {
        let (xh, _) = example();
        let l = frechet_loss(std::slice::from_ref(&xh), &xh, &GwParams::default()).unwrap();
        assert!(l < 1e-20);
        assert!(frechet_loss(&[], &xh, &GwParams::default()).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = FrechetParams {
            armijo_beta: 1.5,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
    }
}
