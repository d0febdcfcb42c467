use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use gwnet::analysis::{self, tangent_pca, vectorize_at_base, write_features_csv};
use gwnet::coupling::CouplingFile;
use gwnet::experiments::{self, AsymMode, AsymSweepSpec, SbmSpec};
use gwnet::frechet::{self, Compression, FrechetParams, Seed};
use gwnet::geodesic::{self, geodesic_aligned};
use gwnet::gw::{self, GwParams, InitCoupling};
use ndarray::Array2;
use serde_json::json;

use crate::io::{emit, json_bytes, network_bytes, out_dir, read_dir, read_network};
use crate::{Common, Init, Mode, OutFormat, SbmArgs, SolverArgs, Status};

fn gw_params(solver: &SolverArgs, common: &Common) -> GwParams {
    GwParams {
        max_outer_iters: solver.max_outer_iters,
        restarts: solver.restarts,
        rng_seed: common.seed,
        init: match solver.init {
            Init::Product => InitCoupling::Product,
            Init::Identity => InitCoupling::IdentityBlock,
        },
        ..GwParams::default()
    }
}

fn status(converged: bool) -> Status {
    if converged {
        Status::Done
    } else {
        Status::NotConverged
    }
}

fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    experiments::write_csv(&mut buf, rows)?;
    Ok(buf)
}

pub fn distance(a: &Path, b: &Path, coupling_out: Option<&Path>, solver: &SolverArgs, common: &Common) -> Result<Status> {
    let (x, y) = (read_network(a)?, read_network(b)?);
    let (c, rep) = gw::solve_gw(&x, &y, &gw_params(solver, common))?;
    if let Some(p) = coupling_out {
        let file = serde_json::to_value(CouplingFile::new(&c, rep.cost))?;
        fs::write(p, json_bytes(&file)?).with_context(|| format!("writing {}", p.display()))?;
    }
    let bytes = match common.format_or(OutFormat::Json) {
        OutFormat::Json => json_bytes(&json!({
            "gw_distance": rep.gw_distance,
            "cost": rep.cost,
            "iterations": rep.iterations,
            "converged": rep.converged,
        }))?,
        OutFormat::Csv => format!(
            "gw_distance,cost,iterations,converged\n{},{},{},{}\n",
            rep.gw_distance, rep.cost, rep.iterations, rep.converged
        )
        .into_bytes(),
    };
    emit(common, &bytes)?;
    Ok(status(rep.converged))
}

pub fn geodesic(
    a: &Path,
    b: &Path,
    steps: usize,
    mask_fraction: f64,
    solver: &SolverArgs,
    common: &Common,
) -> Result<Status> {
    ensure!(steps >= 1, "--steps must be at least 1");
    let (x, y) = (read_network(a)?, read_network(b)?);
    let g = geodesic_aligned(&x, &y, &gw_params(solver, common))?;
    let ts = geodesic::uniform_grid(steps);
    let nets = g.sample(&ts)?;
    let masks: Vec<Vec<bool>> = nets.iter().map(|n| geodesic::low_weight_mask(n, mask_fraction)).collect();
    match common.format_or(OutFormat::Json) {
        OutFormat::Json => {
            let points: Vec<_> = ts
                .iter()
                .zip(&nets)
                .zip(&masks)
                .map(|((t, n), m)| json!({ "t": t, "network": n, "low_weight": m }))
                .collect();
            emit(
                common,
                &json_bytes(&json!({ "size": g.size(), "gw_distance": g.half_length, "points": points }))?,
            )?;
        }
        OutFormat::Csv => {
            let dir = out_dir(common)?;
            for (k, n) in nets.iter().enumerate() {
                n.write_csv(fs::File::create(dir.join(format!("geodesic_{k:03}.csv")))?)?;
            }
        }
    }
    Ok(Status::Done)
}

pub struct MeanOpts {
    pub seed_net: Option<PathBuf>,
    pub seed_size: Option<usize>,
    pub compress: bool,
    pub max_iters: usize,
    pub momentum: Option<f64>,
    pub trace: Option<PathBuf>,
}

pub fn mean(dir: &Path, opts: &MeanOpts, solver: &SolverArgs, common: &Common) -> Result<Status> {
    let (members, _) = read_dir(dir)?;
    let seed = match (&opts.seed_net, opts.seed_size) {
        (Some(p), _) => Seed::Network(read_network(p)?),
        (None, Some(size)) => Seed::Random { size, rng_seed: common.seed },
        (None, None) => Seed::FirstMember,
    };
    let params = FrechetParams {
        max_iters: opts.max_iters,
        momentum: opts.momentum,
        compress: if opts.compress { Compression::ToSeedSize } else { Compression::None },
        seed,
        gw: gw_params(solver, common),
        ..FrechetParams::default()
    };
    let res = frechet::frechet_mean(&members, &params)?;
    if let Some(p) = &opts.trace {
        fs::write(p, csv_bytes(&res.trace)?).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(common, &network_bytes(&res.mean, common.format_or(OutFormat::Json))?)?;
    Ok(status(res.converged))
}

pub fn compress(x: &Path, y: &Path, average: bool, solver: &SolverArgs, common: &Common) -> Result<Status> {
    let (x, y) = (read_network(x)?, read_network(y)?);
    let params = gw_params(solver, common);
    let net = if average {
        frechet::compressed_average(&x, &y, &params)?
    } else {
        x.with_omega(x.omega() + &frechet::compress_log(&x, &y, &params)?)?
    };
    emit(common, &network_bytes(&net, common.format_or(OutFormat::Json))?)?;
    Ok(Status::Done)
}

pub fn pca(
    dir: &Path,
    base: &Path,
    components: usize,
    grid: &[f64],
    solver: &SolverArgs,
    common: &Common,
) -> Result<Status> {
    let (nets, _) = read_dir(dir)?;
    let ds = vectorize_at_base(&read_network(base)?, &nets, &gw_params(solver, common))?;
    let p = tangent_pca(&ds, components)?;
    let mut paths = Vec::new();
    for k in 0..p.components.len() {
        for &s in grid {
            let net = analysis::project_along_component(&p, &ds.base, k, s)?;
            paths.push(json!({ "component": k, "s": s, "network": net }));
        }
    }
    match common.format_or(OutFormat::Json) {
        OutFormat::Json => emit(common, &json_bytes(&json!({ "pca": p, "paths": paths }))?)?,
        OutFormat::Csv => {
            let dim = p.components.first().map_or(0, |c| c.len());
            let mut text = String::from("component,variance,ratio");
            for i in 0..dim {
                text.push_str(&format!(",v{i}"));
            }
            text.push('\n');
            for (k, c) in p.components.iter().enumerate() {
                text.push_str(&format!("{k},{},{}", p.explained_variance[k], p.explained_variance_ratio[k]));
                for v in c {
                    text.push_str(&format!(",{v}"));
                }
                text.push('\n');
            }
            let buf = text.into_bytes();
            emit(common, &buf)?;
        }
    }
    Ok(Status::Done)
}

pub fn featurize(dir: &Path, base: &Path, solver: &SolverArgs, common: &Common) -> Result<Status> {
    let (nets, names) = read_dir(dir)?;
    let ds = vectorize_at_base(&read_network(base)?, &nets, &gw_params(solver, common))?;
    let f = ds.features();
    match common.format_or(OutFormat::Csv) {
        OutFormat::Csv => {
            let mut buf = Vec::new();
            write_features_csv(&mut buf, &f, Some(&names))?;
            emit(common, &buf)?;
        }
        OutFormat::Json => {
            let rows: Vec<Vec<f64>> = f.rows().into_iter().map(|r| r.to_vec()).collect();
            emit(common, &json_bytes(&json!({ "labels": names, "features": rows }))?)?;
        }
    }
    Ok(Status::Done)
}

fn sbm_spec(sbm: &SbmArgs, seed: u64) -> Result<SbmSpec> {
    let b = sbm.blocks.len();
    let means = match &sbm.means {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            ensure!(rows.len() == b && rows.iter().all(|r| r.len() == b), "means must be {b}x{b}");
            Array2::from_shape_fn((b, b), |(i, j)| rows[i][j])
        }
        None => Array2::from_shape_fn((b, b), |(i, j)| 25.0 * ((i + 2 * j) % b.max(1)) as f64),
    };
    Ok(SbmSpec {
        block_sizes: sbm.blocks.clone(),
        means,
        variance: sbm.variance,
        rng_seed: seed,
    })
}

pub fn sbm_gen(sbm: &SbmArgs, common: &Common) -> Result<Status> {
    let net = experiments::generate_sbm(&sbm_spec(sbm, common.seed)?)?;
    emit(common, &network_bytes(&net, common.format_or(OutFormat::Json))?)?;
    Ok(Status::Done)
}

#[derive(serde::Serialize)]
struct SbmRow {
    seed: u64,
    max_deviation: f64,
    one_shot_deviation: f64,
    iterations: usize,
    converged: bool,
    pass: bool,
}

pub fn sbm_experiment(sbm: &SbmArgs, runs: u64, tolerance: f64, common: &Common) -> Result<Status> {
    let mut reports = Vec::new();
    for k in 0..runs {
        let seed = common.seed + k;
        reports.push((seed, experiments::sbm_compression_experiment(&sbm_spec(sbm, seed)?, seed)?));
    }
    let converged = reports.iter().all(|(_, r)| r.converged);
    match common.format_or(OutFormat::Json) {
        OutFormat::Json => {
            let runs: Vec<_> = reports
                .iter()
                .map(|(seed, r)| json!({ "seed": seed, "pass": r.max_deviation <= tolerance, "report": r }))
                .collect();
            let passed = reports.iter().filter(|(_, r)| r.max_deviation <= tolerance).count();
            emit(common, &json_bytes(&json!({ "tolerance": tolerance, "passed": passed, "runs": runs }))?)?;
        }
        OutFormat::Csv => {
            let rows: Vec<SbmRow> = reports
                .iter()
                .map(|(seed, r)| SbmRow {
                    seed: *seed,
                    max_deviation: r.max_deviation,
                    one_shot_deviation: r.one_shot_deviation,
                    iterations: r.iterations,
                    converged: r.converged,
                    pass: r.max_deviation <= tolerance,
                })
                .collect();
            emit(common, &csv_bytes(&rows)?)?;
        }
    }
    Ok(status(converged))
}

pub fn support_sweep(sizes: &[usize], trials: usize, solver: &SolverArgs, common: &Common) -> Result<Status> {
    let rows = experiments::support_size_sweep(sizes, trials, common.seed, &gw_params(solver, common))?;
    match common.format_or(OutFormat::Csv) {
        OutFormat::Csv => emit(common, &csv_bytes(&rows)?)?,
        OutFormat::Json => {
            let medians = experiments::median_support(&rows);
            let pts: Vec<(f64, f64)> = medians.iter().map(|(n, s)| (*n as f64, *s)).collect();
            let slope = experiments::fitted_slope(&pts);
            emit(common, &json_bytes(&json!({ "rows": rows, "median_support": medians, "slope": slope }))?)?;
        }
    }
    Ok(Status::Done)
}

pub struct AsymOpts {
    pub mode: Mode,
    pub sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub seeds: usize,
    pub symmetrize: bool,
    pub max_iters: usize,
}

pub fn asym_sweep(opts: &AsymOpts, common: &Common) -> Result<Status> {
    let mode = match opts.mode {
        Mode::Diagonal => AsymMode::Diagonal,
        Mode::Antisymmetric => AsymMode::Antisymmetric,
    };
    ensure!(opts.sizes.len() == 2, "--sizes takes exactly two values");
    let mut spec = AsymSweepSpec::new(mode, (opts.sizes[0], opts.sizes[1]));
    if !opts.alphas.is_empty() {
        spec.alphas = opts.alphas.clone();
    }
    spec.seeds = opts.seeds;
    spec.symmetrize = opts.symmetrize;
    spec.data_seed = common.seed;
    spec.frechet.max_iters = opts.max_iters;
    spec.frechet.gw.rng_seed = common.seed;
    let rows = experiments::asymmetry_sweep(&spec)?;
    match common.format_or(OutFormat::Csv) {
        OutFormat::Csv => emit(common, &csv_bytes(&rows)?)?,
        OutFormat::Json => {
            let medians = experiments::median_loss_by_alpha(&rows);
            emit(common, &json_bytes(&json!({ "rows": rows, "median_loss_by_alpha": medians }))?)?;
        }
    }
    Ok(status(rows.iter().all(|r| r.converged)))
}
