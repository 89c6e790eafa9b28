//! Acceptance criteria 1 to 11. Each test prints one `PASS`/`FAIL` line
//! (run with `--nocapture` to see them) and fails when its criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use smoothopt::continuation::{successive_smoothing, SmoothingPlan};
use smoothopt::harness::bench::{bench_polygon, BenchOptions};
use smoothopt::harness::run::{execute, prepare, SUMMARY_FILE};
use smoothopt::harness::validate::{penalty_problems, rate_params, RATE_BATCH, RATE_DIM, RATE_WIDTH};
use smoothopt::optimizer::{sgd_run, theorem_bound, BoundKind, RateParams, Schedule, SgdConfig, StepRule, WidthRule};
use smoothopt::penalty::{FeasibleSet, PenaltyKind, PenaltySpec, Penalized};
use smoothopt::problems::calibration;
use smoothopt::rng::Stream;
use smoothopt::smoothing::{grad_estimate, second_moment, smoothed_value, Estimate, Exec, Kernel, KernelKind};
use smoothopt::Objective;

fn report(id: &str, passed: bool, detail: String, elapsed: Duration, limit: Duration) -> bool {
    let in_time = elapsed <= limit;
    let ok = passed && in_time;
    println!(
        "criterion {id}: {}  {detail} [{:.1} s, limit {} s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn phi(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

// ---------------------------------------------------------------- polygon

/// Area and largest pairwise distance of the polygon with polar radii `r`
/// and angle increments `a`, by the shoelace formula on Cartesian vertices.
fn polygon_geometry(r: &[f64], a: &[f64]) -> (f64, f64) {
    let mut angle = 0.0;
    let pts: Vec<(f64, f64)> = r
        .iter()
        .zip(a)
        .map(|(ri, ai)| {
            angle += ai;
            (ri * angle.cos(), ri * angle.sin())
        })
        .collect();
    let n = pts.len();
    let twice: f64 = (0..n).map(|i| pts[i].0 * pts[(i + 1) % n].1 - pts[(i + 1) % n].0 * pts[i].1).sum();
    let mut diam: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            diam = diam.max(((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt());
        }
    }
    (0.5 * twice.abs(), diam)
}

/// Runs the polygon preset and returns, per seed, the reported best value and
/// the area of the best decision recomputed from its vertices.
fn polygon_runs(n: usize, runs: usize) -> Vec<(u64, f64, f64, f64)> {
    let dir = tempfile::tempdir().unwrap();
    let opts = BenchOptions { n, full_budget: false, runs, master_seed: 0 };
    let summary = bench_polygon(&opts, dir.path(), None).unwrap();
    summary
        .rows
        .iter()
        .zip(&summary.records)
        .map(|(row, rec)| {
            let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(rec).unwrap()).unwrap();
            let z: Vec<f64> = doc["best_decision"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
            assert_eq!(z.len(), 2 * n);
            let (area, diam) = polygon_geometry(&z[..n], &z[n..]);
            let angle_sum: f64 = z[n..].iter().sum();
            assert!(row.evaluations <= smoothopt::harness::bench::desk_budget(n), "budget exceeded");
            assert!(angle_sum <= std::f64::consts::PI + 1e-9, "angles wrap past π");
            (row.seed, row.best, area, diam)
        })
        .collect()
}

fn polygon_criterion(id: &str, n: usize, runs: usize, threshold: f64, needed: usize, limit: u64) {
    let start = Instant::now();
    let results = polygon_runs(n, runs);
    let elapsed = start.elapsed();
    for (seed, best, area, diam) in &results {
        println!("  n={n} seed {seed}: reported {best:.6}, recomputed area {area:.6}, diameter {diam:.9}");
        // penalties only subtract, so the reported value never exceeds the true area
        assert!(*best <= area + 1e-9, "seed {seed}: reported {best} above area {area}");
    }
    let hits = results.iter().filter(|r| r.1 >= threshold).count();
    let ok = report(
        id,
        hits >= needed,
        format!("polygon n={n}: area >= {threshold} in {hits}/{runs} seeds (need {needed})"),
        elapsed,
        Duration::from_secs(limit),
    );
    assert!(ok);
}

#[test]
fn criterion_01_polygon_triangle() {
    polygon_criterion("1", 3, 10, 0.42, 8, 30);
}

#[test]
fn criterion_02_polygon_quadrilateral() {
    polygon_criterion("2", 4, 10, 0.48, 8, 60);
}

#[test]
fn criterion_03_polygon_twenty_gon() {
    polygon_criterion("3", 20, 3, 0.74, 1, 600);
}

// ------------------------------------------------------- unbiased gradient

/// `∂/∂x_i E|x_i + h z_i|` for `z` uniform in the unit ball of `R^n`, by
/// Simpson quadrature of the marginal density `∝ (1 − t²)^((n−1)/2)`.
fn ball_l1_partial(xi: f64, h: f64, n: usize) -> f64 {
    let density = |t: f64| (1.0 - t * t).max(0.0).powf((n as f64 - 1.0) / 2.0);
    let simpson = |a: f64, b: f64| {
        let m = 20_000;
        let w = (b - a) / m as f64;
        let mut s = density(a) + density(b);
        for k in 1..m {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * density(a + k as f64 * w);
        }
        s * w / 3.0
    };
    let c = (-xi / h).clamp(-1.0, 1.0);
    1.0 - 2.0 * simpson(-1.0, c) / simpson(-1.0, 1.0)
}

#[test]
fn criterion_04_estimator_unbiasedness() {
    let start = Instant::now();
    let samples = 100_000u64;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=3usize {
        let f = calibration("l1-norm", n).unwrap();
        for kind in [KernelKind::Ball, KernelKind::Gaussian] {
            for (hi, h) in [0.5, 0.1].into_iter().enumerate() {
                let kernel = Kernel::new(kind, h).unwrap();
                let root = Stream::new(4, 0).child((n * 100 + kind as usize * 10 + hi) as u64);
                let mut rng = root.lane(u64::MAX);
                for p in 0..10u64 {
                    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let s = root.child(p);
                    let draws: Vec<Vec<f64>> = (0..samples)
                        .into_par_iter()
                        .map(|i| grad_estimate(&f, &x, kernel, 1, s.with_batch(i), Exec::Serial).unwrap().unbiased_gradient)
                        .collect();
                    for (i, &xi) in x.iter().enumerate() {
                        let est = Estimate::from_values(draws.iter().map(|d| d[i]));
                        let oracle = match kind {
                            KernelKind::Gaussian => 2.0 * phi(xi / h) - 1.0,
                            KernelKind::Ball => ball_l1_partial(xi, h, n),
                        };
                        let z = (est.mean - oracle).abs() / est.std_err.max(1e-12);
                        worst = worst.max(z);
                        cases += 1;
                    }
                }
            }
        }
    }
    let ok = report(
        "4",
        worst <= 4.0,
        format!("largest |mean − quadrature| / s.e. over {cases} coordinates: {worst:.3} (bound 4)"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

// ---------------------------------------------------------- second moments

type MomentCase<'a> = (&'a str, &'a dyn Objective, &'a [f64], f64, f64);

/// Largest ratio of the measured single-sample second moment to `bound(L, n)`
/// over linear and `‖x‖₁` objectives in a few dimensions.
fn moment_ratios(kind: KernelKind, bound: impl Fn(f64, usize) -> f64) -> Vec<(String, f64)> {
    let probes = 100_000;
    let mut out = Vec::new();
    for n in [2usize, 4, 10] {
        let root = Stream::new(5, kind as u64).child(n as u64);
        let mut rng = root.lane(u64::MAX);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lc = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let linear = |x: &[f64]| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l1 = calibration("l1-norm", n).unwrap();
        let l1_lip = (n as f64).sqrt();
        let far: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        // name, objective, point, width, Lipschitz constant
        let cases: [MomentCase; 3] = [
            ("linear", &linear, &x, 0.3, lc),
            ("l1 away from kinks", &l1, &far, 0.01, l1_lip),
            ("l1 across kinks", &l1, &x, 0.5, l1_lip),
        ];
        for (j, (name, f, at, h, l)) in cases.into_iter().enumerate() {
            let kernel = Kernel::new(kind, h).unwrap();
            let m = second_moment(f, at, kernel, probes, root.child(j as u64), Exec::Parallel).unwrap();
            out.push((format!("{name} n={n}"), m.mean / bound(l, n)));
        }
    }
    out
}

fn moment_criterion(id: &str, label: &str, kind: KernelKind, bound: impl Fn(f64, usize) -> f64) {
    let start = Instant::now();
    let slack = 1.05;
    let ratios = moment_ratios(kind, bound);
    for (name, r) in &ratios {
        println!("  {label} {name}: measured / bound = {r:.4}");
    }
    let (name, worst) = ratios.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let ok = report(
        id,
        worst <= slack,
        format!("{label}: largest measured / bound = {worst:.4} at {name} (allowed {slack})"),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

#[test]
fn criterion_05a_sphere_second_moment() {
    moment_criterion("5 (sphere)", "E‖g‖² ≤ L²/n", KernelKind::Ball, |l, n| l * l / n as f64);
}

#[test]
fn criterion_05b_gaussian_second_moment() {
    moment_criterion("5 (Gaussian)", "E‖g‖² ≤ n L²", KernelKind::Gaussian, |l, n| n as f64 * l * l);
}

// ------------------------------------------------------------------ rate

#[test]
fn criterion_06_decaying_step_rate() {
    let start = Instant::now();
    let times = [100usize, 1000, 10_000];
    let params: RateParams = rate_params();
    let f = calibration("l1-norm", RATE_DIM).unwrap();
    let ball = FeasibleSet::ball(vec![0.0; RATE_DIM], 1.0).unwrap();
    let x0 = vec![1.0 / (RATE_DIM as f64).sqrt(); RATE_DIM];
    let schedule = Schedule { step: StepRule::T2Decaying { params }, width: WidthRule::Fixed { h: RATE_WIDTH } };
    let mut cfg = SgdConfig::new(KernelKind::Ball, RATE_BATCH, times[2], schedule);
    cfg.checkpoints = times.to_vec();
    let kernel = Kernel::ball(RATE_WIDTH).unwrap();
    let samples = 100_000;
    let gaps: Vec<Vec<f64>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let rec = sgd_run(&f, &ball, &x0, &cfg, Stream::new(100 + seed, 0)).unwrap();
            let oracle = Stream::new(100 + seed, 1);
            let base = smoothed_value(&f, &[0.0; RATE_DIM], kernel, samples, oracle, Exec::Serial).unwrap().mean;
            rec.checkpoints
                .iter()
                .map(|c| smoothed_value(&f, &c.weighted_average, kernel, samples, oracle, Exec::Serial).unwrap().mean - base)
                .collect()
        })
        .collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let mut v: Vec<f64> = gaps.iter().map(|g| g[j]).collect();
        v.sort_by(f64::total_cmp);
        let median = 0.5 * (v[9] + v[10]);
        let bound = theorem_bound(BoundKind::T2Decaying, &params, t).unwrap();
        ok &= median <= bound;
        detail.push(format!("t={t}: median {median:.4} vs bound {bound:.4}"));
    }
    let ok = report("6", ok, detail.join("; "), start.elapsed(), Duration::from_secs(300));
    assert!(ok);
}

// --------------------------------------------------------------- penalty

const GRID: usize = 400;
const HALF: f64 = 1.5;

fn grid_point(k: usize) -> [f64; 2] {
    let step = 2.0 * HALF / (GRID - 1) as f64;
    [-HALF + (k / GRID) as f64 * step, -HALF + (k % GRID) as f64 * step]
}

/// Grid argmin index; ties go to the lowest index.
fn grid_argmin(value: impl Fn(&[f64]) -> Option<f64> + Sync) -> usize {
    (0..GRID * GRID)
        .into_par_iter()
        .filter_map(|k| value(&grid_point(k)).map(|v| (v, k)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .unwrap()
        .1
}

#[test]
fn criterion_07_penalty_exactness_on_grids() {
    let start = Instant::now();
    let mut worst = 0usize;
    for (name, f, set, _) in penalty_problems() {
        let target = grid_argmin(|x| set.contains(x).unwrap().then(|| f.eval(x)));
        for m in [0.1, 1.0, 10.0] {
            let inner = |x: &[f64]| f.eval(x);
            let penalized = Penalized::new(inner, set.clone(), PenaltySpec::new(PenaltyKind::Distance, m)).unwrap();
            let found = grid_argmin(|x| Some(penalized.eval(x)));
            let cells = (target / GRID).abs_diff(found / GRID).max((target % GRID).abs_diff(found % GRID));
            println!("  {name}, M={m}: argmin offset {cells} cell(s)");
            worst = worst.max(cells);
        }
    }
    let ok = report(
        "7",
        worst <= 1,
        format!("largest grid argmin offset {worst} cell(s) (allowed 1)"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

#[test]
fn criterion_08_penalty_lipschitz() {
    let start = Instant::now();
    let mut excess = f64::NEG_INFINITY;
    for (i, (name, f, set, l)) in penalty_problems().into_iter().enumerate() {
        for m in [0.1, 1.0, 10.0] {
            let inner = |x: &[f64]| f.eval(x);
            let penalized = Penalized::new(inner, set.clone(), PenaltySpec::new(PenaltyKind::Distance, m)).unwrap();
            let mut rng = Stream::new(8, i as u64).lane((m * 10.0) as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..10_000 {
                let x: [f64; 2] = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let y: [f64; 2] = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                worst = worst.max((penalized.eval(&x) - penalized.eval(&y)).abs() / d);
            }
            println!("  {name}, M={m}: largest quotient {worst:.6} vs L + 2M = {:.6}", l + 2.0 * m);
            excess = excess.max(worst - (l + 2.0 * m));
        }
    }
    let ok = report(
        "8",
        excess <= 1e-9,
        format!("largest quotient minus (L + 2M): {excess:.3e} (allowed 1e-9)"),
        start.elapsed(),
        Duration::from_secs(5),
    );
    assert!(ok);
}

// --------------------------------------------------- discontinuous step

#[test]
fn criterion_09_step_smoothing() {
    let start = Instant::now();
    let f = calibration("lsc-step-1d", 1).unwrap();
    let mut worst: f64 = 0.0;
    for (i, h) in [0.5, 0.1].into_iter().enumerate() {
        let kernel = Kernel::gaussian(h).unwrap();
        for (j, x) in [-2.0 * h, -h, 0.0, h, 2.0 * h].into_iter().enumerate() {
            let est = smoothed_value(&f, &[x], kernel, 100_000, Stream::new(9, i as u64).child(j as u64), Exec::Parallel)
                .unwrap();
            let exact = phi(-x / h);
            let z = (est.mean - exact).abs() / est.std_err.max(1e-12);
            println!("  h={h} x={x}: estimate {:.5} ± {:.5}, Φ(−x/h) = {exact:.5}", est.mean, est.std_err);
            worst = worst.max(z);
        }
    }
    let ok = report("9", worst <= 4.0, format!("largest |estimate − Φ(−x/h)| / s.e. = {worst:.3} (bound 4)"), start.elapsed(), Duration::from_secs(5));
    assert!(ok);
}

// ------------------------------------------------------- global property

const TWO_WELL_BOX: f64 = 3.0;
const TWO_WELL_STAGES: usize = 10;
const TWO_WELL_ITERATIONS: usize = 1000;
const TWO_WELL_BATCH: usize = 4;

#[test]
fn criterion_10_continuation_finds_global_well() {
    let start = Instant::now();
    let f = calibration("two-well-1d", 1).unwrap();
    // independent check of the global minimizer by grid search
    let (gx, _) = (0..=600_000)
        .map(|k| -3.0 + k as f64 * 1e-5)
        .map(|x| (x, f.eval(&[x])))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    assert!((gx - 1.0).abs() < 1e-4);
    let region = FeasibleSet::boxed(vec![-TWO_WELL_BOX], vec![TWO_WELL_BOX]).unwrap();
    let continuation =
        SmoothingPlan::geometric(TWO_WELL_BOX, 0.5, TWO_WELL_STAGES, TWO_WELL_ITERATIONS, TWO_WELL_BATCH).unwrap();
    let h_last = *continuation.widths.last().unwrap();
    // the same budget spent at the final width only
    let single =
        SmoothingPlan::geometric(h_last, 0.5, 1, TWO_WELL_ITERATIONS * TWO_WELL_STAGES, TWO_WELL_BATCH).unwrap();
    // basin of the global well: right of the point where the two branches meet
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if 0.05 + (mid + 1.0f64).abs() < (mid - 1.0f64).abs() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let in_global = |x: &[f64]| x[0] > hi;
    let mut wins = (0, 0);
    for seed in 0..20u64 {
        let x0 = [Stream::new(seed, 10).lane(0).random_range(-TWO_WELL_BOX..TWO_WELL_BOX)];
        let a = successive_smoothing(&f, &region, &x0, &continuation, seed).unwrap();
        let b = successive_smoothing(&f, &region, &x0, &single, seed).unwrap();
        println!("  seed {seed}: start {:+.3}, continuation {:+.4}, single stage {:+.4}", x0[0], a.final_point[0], b.final_point[0]);
        wins.0 += in_global(&a.final_point) as usize;
        wins.1 += in_global(&b.final_point) as usize;
    }
    let ok = report(
        "10",
        wins.0 >= 18 && wins.1 <= 10,
        format!("global well reached: continuation {}/20 (need >= 18), single stage at h = {h_last} {}/20 (need <= 10)", wins.0, wins.1),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

// ------------------------------------------------------------ determinism

fn run_summary(dir: &Path, threads: usize) -> Vec<u8> {
    let src = "[problem]\nname = \"polygon\"\nn = 5\n\n[optimizer]\nbatch = 4\niterations = 300\n\n\
               [plan]\nstages = 6\n\n[run]\nseeds = [3, 1, 4, 1, 5, 9, 2, 6]\noutput = \"out\"\n"
        .to_string();
    let p = prepare(src, &dir.join("det.toml"), dir).unwrap();
    execute(&p, Some(threads)).unwrap();
    std::fs::read(dir.join("out").join(SUMMARY_FILE)).unwrap()
}

#[test]
fn criterion_11_determinism() {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let one = run_summary(a.path(), 1);
    let four = run_summary(b.path(), 4);
    let again = run_summary(c.path(), 3);
    let ok = report(
        "11",
        one == four && one == again && !one.is_empty(),
        format!("summary CSV identical across 1, 4 and 3 workers ({} bytes)", one.len()),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}
