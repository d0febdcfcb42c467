//! One line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use gwnet::align::blow_up;
use gwnet::analysis::{tangent_pca, vectorize_at_base, TangentDataset};
use gwnet::experiments::{
    fitted_slope, median_support, sbm_compression_experiment, support_size_sweep, SbmSpec,
};
use gwnet::frechet::{frechet_gradient, frechet_loss, frechet_mean, FrechetParams, Seed};
use gwnet::geodesic::GeodesicRep;
use gwnet::gw::{self, GwParams};
use gwnet::tangent::{exp_map, inner_product, log_map};
use gwnet::{Coupling, MeasureNetwork, TangentVector};
use ndarray::{array, Array1, Array2};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn formula_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let n = r.random_range(2..=8);
        let m = r.random_range(2..=8);
        let x = random_network(&mut r, n);
        let y = random_network(&mut r, m);
        let c = random_coupling(&mut r, x.mu(), y.mu());
        let t = gw::distortion_tensor(&x, &y, &c).unwrap();
        let mm = gw::distortion_matrix(&x, &y, &c).unwrap();
        worst = worst.max((t - mm).abs() / t.max(f64::MIN_POSITIVE));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 10.0, format!("max rel diff {worst:.2e}, {secs:.2}s"))
}

fn asymmetric_gradient() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n = r.random_range(2..=5);
        let m = r.random_range(2..=5);
        let x = random_network(&mut r, n);
        let y = random_network(&mut r, m);
        let c = random_coupling(&mut r, x.mu(), y.mu());
        let g = gw::gw_gradient(&x, &y, &c).unwrap();
        let fd = finite_difference_gradient(x.omega(), y.omega(), c.matrix(), 1e-6);
        worst = worst.max((&g - &fd).iter().fold(0.0, |a, v| a.max(v.abs())));
    }
    outcome(worst <= 1e-5, format!("max abs diff {worst:.2e}"))
}

fn point_and_pair() -> Outcome {
    let x = MeasureNetwork::new(array![[1.0]], array![1.0]).unwrap();
    let y = MeasureNetwork::new(array![[0.0, 1.0], [1.0, 0.0]], array![0.5, 0.5]).unwrap();
    let (c, rep) = gw::solve_gw(&x, &y, &GwParams::default()).unwrap();
    let d_ok = (rep.gw_distance - 0.353553).abs() <= 1e-6;
    let pair = blow_up(&x, &y, &c).unwrap();
    let blow_ok = pair.x_hat.omega() == array![[1.0, 1.0], [1.0, 1.0]] && pair.mu_hat() == array![0.5, 0.5];
    let z = MeasureNetwork::uniform(array![[0.5, 1.0], [1.0, 0.5]]).unwrap();
    let mean = frechet_mean(&[pair.x_hat.clone(), y], &FrechetParams::default()).unwrap();
    let dz = best_distance(&mean.mean, &z, &[diagonal_coupling(mean.mean.mu())]);
    outcome(
        d_ok && blow_ok && dz <= 1e-6,
        format!("d_N {:.7}, blow-up {}, mean-to-Z {dz:.2e}", rep.gw_distance, if blow_ok { "ok" } else { "wrong" }),
    )
}

const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn geodesic_property() -> Outcome {
    let mut r = rng(4);
    let shapes = [(2, 2), (2, 3), (3, 2), (2, 4), (4, 2), (3, 3), (2, 5), (5, 2), (2, 6), (6, 2), (3, 4), (4, 3)];
    let mut worst_exact = 0.0_f64;
    for k in 0..20 {
        let (n, m) = shapes[k % shapes.len()];
        let x = random_network(&mut r, n);
        let y = random_network(&mut r, m);
        let (opt, c) = gw_global_minimum(&x, &y);
        let d = opt.max(0.0).sqrt() / 2.0;
        let c = Coupling::new(c, x.mu().clone(), y.mu().clone()).unwrap();
        let g = GeodesicRep::from_coupling(&x, &y, &c).unwrap();
        for s in GRID {
            for t in GRID {
                let a = g.evaluate(s).unwrap();
                let b = g.evaluate(t).unwrap();
                let measured = best_distance(&a, &b, &[diagonal_coupling(a.mu())]);
                worst_exact = worst_exact.max((measured - (t - s).abs() * d).abs());
            }
        }
    }
    let mut worst_upper = f64::NEG_INFINITY;
    for (n, m) in [(4, 5), (5, 5), (6, 4)] {
        let x = random_network(&mut r, n);
        let y = random_network(&mut r, m);
        let (c, _) = gw::solve_gw(&x, &y, &GwParams::default().with_restarts(4)).unwrap();
        let g = GeodesicRep::from_coupling(&x, &y, &c).unwrap();
        for s in GRID {
            for t in GRID {
                let a = g.evaluate(s).unwrap();
                let b = g.evaluate(t).unwrap();
                let measured = best_distance(&a, &b, &[diagonal_coupling(a.mu())]);
                worst_upper = worst_upper.max(measured - (t - s).abs() * g.half_length);
            }
        }
    }
    outcome(
        worst_exact <= 1e-6 && worst_upper <= 1e-6,
        format!("small pairs max |err| {worst_exact:.2e}; larger pairs max excess {worst_upper:.2e}"),
    )
}

fn log_exp_round_trip() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n = r.random_range(2..=6);
        let m = r.random_range(2..=6);
        let x = random_network(&mut r, n);
        let y = random_network(&mut r, m);
        let (v, pair) = log_map(&x, &y, &GwParams::default()).unwrap();
        let z = exp_map(&v).unwrap();
        let d = gw::distortion_tensor(&z, &y, &pair.target_coupling(&y)).unwrap() / 2.0;
        worst = worst.max(d);
    }
    outcome(worst <= 1e-7, format!("max d_N(exp(log), Y) {worst:.2e}"))
}

fn frechet_stationarity() -> Outcome {
    const N: usize = 5;
    let mut r = rng(6);
    let base = Array2::from_shape_fn((N, N), |(i, j)| ((7 * (N * i + j) + 3) % (N * N)) as f64);
    let mut grad_zero = true;
    let mut worst = 0.0_f64;
    for _ in 0..5 {
        let members: Vec<MeasureNetwork> = (0..4)
            .map(|_| {
                let noise = Array2::from_shape_fn((N, N), |_| r.random_range(-4i32..=4) as f64 / 64.0);
                MeasureNetwork::uniform(&base + &noise).unwrap()
            })
            .collect();
        let mut sum = Array2::<f64>::zeros((N, N));
        for m in &members {
            sum += m.omega();
        }
        let mean = MeasureNetwork::uniform(sum / 4.0).unwrap();
        let (g, _) = frechet_gradient(&members, &mean, &GwParams::default()).unwrap();
        grad_zero &= g.f.iter().all(|v| *v == 0.0);
        let start = mean.with_omega(mean.omega() + &(gaussian_matrix(&mut r, N, N) * 0.05)).unwrap();
        let res = frechet_mean(&members, &FrechetParams::default().with_seed(Seed::Network(start))).unwrap();
        let target = frechet_loss(&members, &mean, &GwParams::default()).unwrap();
        worst = worst.max((res.loss - target).abs());
    }
    outcome(
        grad_zero && worst <= 1e-6,
        format!("gradient at mean exactly zero: {grad_zero}; max loss gap {worst:.2e}"),
    )
}

fn sbm_compression() -> Outcome {
    let start = Instant::now();
    let mut devs = Vec::new();
    for seed in 0..20 {
        let spec = SbmSpec::reference(seed);
        devs.push(sbm_compression_experiment(&spec, seed).unwrap().max_deviation);
    }
    let secs = start.elapsed().as_secs_f64();
    let hits = devs.iter().filter(|d| **d <= 0.1).count();
    let lo = devs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = devs.iter().copied().fold(0.0, f64::max);
    outcome(
        hits >= 19 && secs < 120.0,
        format!("{hits}/20 seeds within 0.1 (deviations {lo:.3}..{hi:.3}), {secs:.1}s"),
    )
}

fn support_sparsity() -> Outcome {
    let sizes = [5, 10, 20, 40];
    let rows = support_size_sweep(&sizes, 20, 8, &GwParams::default()).unwrap();
    let med = median_support(&rows);
    let within = med.iter().all(|(n, s)| *s <= (2 * n - 1) as f64);
    let pts: Vec<(f64, f64)> = med.iter().map(|(n, s)| (*n as f64, *s)).collect();
    let slope = fitted_slope(&pts).unwrap();
    let shown: Vec<String> = med.iter().map(|(n, s)| format!("{n}:{s}")).collect();
    outcome(
        within && (1.0..=3.0).contains(&slope),
        format!("medians {}, slope {slope:.3}", shown.join(" ")),
    )
}

fn dataset_of(base: &MeasureNetwork, rows: &Array2<f64>) -> TangentDataset {
    let n = base.size();
    let tangents: Vec<TangentVector> = rows
        .rows()
        .into_iter()
        .map(|row| TangentVector::new(base.clone(), row.to_owned().into_shape_with_order((n, n)).unwrap()).unwrap())
        .collect();
    TangentDataset::from_tangents(&tangents).unwrap()
}

fn sign_free_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let plus = (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let minus = (a + b).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    plus.min(minus)
}

fn weighted_pca() -> Outcome {
    let mut r = rng(9);
    let mut ratio_err = 0.0_f64;
    let mut comp_err = 0.0_f64;
    for n in 2..=4 {
        let base = random_network(&mut r, n);
        let dir = gaussian_matrix(&mut r, 1, n * n).row(0).to_owned();
        let off = gaussian_matrix(&mut r, 1, n * n).row(0).to_owned();
        let coef = gaussian_matrix(&mut r, 8, 1);
        let rank_one = Array2::from_shape_fn((8, n * n), |(k, j)| off[j] + coef[[k, 0]] * dir[j]);
        let p = tangent_pca(&dataset_of(&base, &rank_one), 1).unwrap();
        ratio_err = ratio_err.max((p.explained_variance_ratio[0] - 1.0).abs());

        let rows = gaussian_matrix(&mut r, 2 * n + 2, n * n);
        let ds = dataset_of(&base, &rows);
        let p = tangent_pca(&ds, n * n).unwrap();
        let (_, comps) = dense_pca_oracle(&ds);
        for (c, e) in p.components.iter().zip(&comps) {
            comp_err = comp_err.max(sign_free_diff(c, e));
        }
    }
    outcome(
        ratio_err <= 1e-9 && comp_err <= 1e-8,
        format!("rank-1 ratio error {ratio_err:.2e}, component error {comp_err:.2e}"),
    )
}

fn featurize_contract() -> Outcome {
    let mut r = rng(10);
    let base = random_network(&mut r, 4);
    let nets: Vec<MeasureNetwork> = (0..12).map(|k| random_network(&mut r, 2 + k % 5)).collect();
    let ds = vectorize_at_base(&base, &nets, &GwParams::default()).unwrap();
    let f = ds.features();
    let mut worst = 0.0_f64;
    for a in 0..ds.len() {
        for b in 0..ds.len() {
            let euclid = f.row(a).dot(&f.row(b));
            let tangent = inner_product(&ds.tangent(a).unwrap(), &ds.tangent(b).unwrap()).unwrap();
            worst = worst.max((euclid - tangent).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max |<f_a,f_b> - <v_a,v_b>_w| {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("formula equivalence", formula_equivalence),
        ("asymmetric gradient", asymmetric_gradient),
        ("point and pair end-to-end", point_and_pair),
        ("geodesic property", geodesic_property),
        ("log/exp round trip", log_exp_round_trip),
        ("frechet stationarity", frechet_stationarity),
        ("sbm compression", sbm_compression),
        ("support sparsity", support_sparsity),
        ("weighted tangent pca", weighted_pca),
        ("featurize contract", featurize_contract),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} ({name}): {} - {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
