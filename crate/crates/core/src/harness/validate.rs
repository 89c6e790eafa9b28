//! Statistical validation suites behind `smoothopt validate`.
//!
//! * `gradient`: the unbiased gradient estimate of `‖x‖₁` against common
//!   random number central differences of the smoothed value.
//! * `moments`: single-sample second moments against `C L²/n` (ball kernel)
//!   and `n L²` (Gaussian kernel).
//! * `rate`: the decaying-step convergence bound on `‖x‖₁` over the unit ball.
//! * `penalty`: exactness of the distance penalty on grids and its Lipschitz
//!   constant `L + 2M`.

use std::fmt;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::optimizer::{sgd_run, theorem_bound, BoundKind, RateParams, Schedule, SgdConfig, StepRule, WidthRule};
use crate::penalty::{FeasibleSet, PenaltyKind, PenaltySpec, Penalized};
use crate::problems::{calibration, CalibrationKind};
use crate::rng::Stream;
use crate::smoothing::{grad_estimate, second_moment, smoothed_value, Estimate, Exec, Kernel, KernelKind};
use crate::vector::norm;
use crate::Objective;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradient,
    Moments,
    Rate,
    Penalty,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Gradient, Suite::Moments, Suite::Rate, Suite::Penalty];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Gradient => "gradient",
            Suite::Moments => "moments",
            Suite::Rate => "rate",
            Suite::Penalty => "penalty",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| HarnessError::InvalidParameters(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Smaller sample counts, for smoke tests.
    pub quick: bool,
    /// Iteration counts at which the rate suite checks the bound.
    pub rate_times: Vec<usize>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { seed: 1, quick: false, rate_times: vec![100, 1000, 10_000] }
    }
}

/// One measured quantity against its bound; passes when `measured ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured <= self.bound
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict}  {}: measured {:.6e}, bound {:.6e}", self.name, self.measured, self.bound)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed()).count()
    }

    /// `Ok` when every check passed.
    pub fn status(&self) -> Result<(), HarnessError> {
        match self.failed() {
            0 => Ok(()),
            failed => Err(HarnessError::ChecksFailed { failed, total: self.checks.len() }),
        }
    }
}

fn lib(e: crate::Error) -> HarnessError {
    HarnessError::InvalidParameters(e.to_string())
}

pub fn run_suite(suite: Suite, opts: &ValidateOptions) -> Result<Report, HarnessError> {
    let checks = match suite {
        Suite::Gradient => gradient_suite(opts)?,
        Suite::Moments => moments_suite(opts)?,
        Suite::Rate => rate_suite(opts)?,
        Suite::Penalty => penalty_suite(opts)?,
    };
    Ok(Report { suite, checks })
}

/// Rounding floor for standard errors: finite differences of piecewise-linear
/// functions are exact only up to a few ulps divided by the step.
const SE_FLOOR: f64 = 1e-10;

/// Largest `|a − b| / √(se_a² + se_b²)` over coordinates.
fn max_z(a: &[Estimate], b: &[Estimate]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let se = (x.std_err * x.std_err + y.std_err * y.std_err).sqrt().max(SE_FLOOR);
            (x.mean - y.mean).abs() / se
        })
        .fold(0.0, f64::max)
}

/// Per-coordinate mean and standard error of single-sample unbiased gradients.
pub fn gradient_samples<F: Objective + ?Sized>(
    f: &F,
    x: &[f64],
    kernel: Kernel,
    samples: usize,
    stream: Stream,
) -> crate::Result<Vec<Estimate>> {
    let draws: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| grad_estimate(f, x, kernel, 1, stream.with_batch(i), Exec::Serial).map(|g| g.unbiased_gradient))
        .collect::<crate::Result<_>>()?;
    Ok((0..x.len()).map(|j| Estimate::from_values(draws.iter().map(|d| d[j]))).collect())
}

/// `∂F_h/∂x_j` by central differences of the smoothed value with common
/// random numbers: the mean of `(F(x + δe_j + hz) − F(x − δe_j + hz)) / 2δ`.
pub fn smoothed_gradient<F: Objective + ?Sized>(
    f: &F,
    x: &[f64],
    kernel: Kernel,
    samples: usize,
    stream: Stream,
) -> crate::Result<Vec<Estimate>> {
    let delta = 1e-3 * kernel.h;
    (0..x.len())
        .map(|j| {
            let diff = |z: &[f64]| {
                let mut p: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
                let mut m = p.clone();
                p[j] += delta;
                m[j] -= delta;
                (f.eval(&p) - f.eval(&m)) / (2.0 * delta)
            };
            smoothed_value(&diff, &vec![0.0; x.len()], kernel, samples, stream.child(j as u64), Exec::Parallel)
        })
        .collect()
}

fn gradient_suite(opts: &ValidateOptions) -> Result<Vec<Check>, HarnessError> {
    let (points, est, oracle) = if opts.quick { (3, 20_000, 200_000) } else { (10, 100_000, 1_000_000) };
    let mut checks = Vec::new();
    let root = Stream::new(opts.seed, 0);
    for n in 1..=3usize {
        let f = calibration("l1-norm", n).map_err(lib)?;
        for kind in [KernelKind::Ball, KernelKind::Gaussian] {
            for h in [0.5, 0.1] {
                let kernel = Kernel::new(kind, h).map_err(lib)?;
                let mut worst: f64 = 0.0;
                for p in 0..points as u64 {
                    let tag = (n as u64) << 32 | (kind as u64) << 16 | ((h * 10.0) as u64) << 8 | p;
                    let s = root.child(tag);
                    let mut rng = s.lane(u64::MAX);
                    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let g = gradient_samples(&f, &x, kernel, est, s.child(1)).map_err(lib)?;
                    let o = smoothed_gradient(&f, &x, kernel, oracle, s.child(2)).map_err(lib)?;
                    worst = worst.max(max_z(&g, &o));
                }
                checks.push(Check {
                    name: format!("l1-norm n={n} {kind:?} h={h}: max |estimate − oracle| / combined s.e."),
                    measured: worst,
                    bound: 4.0,
                });
            }
        }
    }
    Ok(checks)
}

fn moments_suite(opts: &ValidateOptions) -> Result<Vec<Check>, HarnessError> {
    let probes = if opts.quick { 20_000 } else { 100_000 };
    let slack = 1.05;
    let root = Stream::new(opts.seed, 1);
    let mut checks = Vec::new();
    for kind in [KernelKind::Ball, KernelKind::Gaussian] {
        for n in [2usize, 4, 10] {
            let bound = |l: f64| match kind {
                KernelKind::Ball => slack * l * l / n as f64,
                KernelKind::Gaussian => slack * n as f64 * l * l,
            };
            let tag = (kind as u64) << 8 | n as u64;
            let mut rng = root.child(tag).lane(u64::MAX);
            let c: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let l = norm(&c);
            let linear = |x: &[f64]| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let kernel = Kernel::new(kind, 0.3).map_err(lib)?;
            let m = second_moment(&linear, &x, kernel, probes, root.child(tag).child(1), Exec::Parallel).map_err(lib)?;
            checks.push(Check { name: format!("linear n={n} {kind:?}: mean squared norm"), measured: m.mean, bound: bound(l) });

            // ‖x‖₁ where every probe stays in one orthant
            let f = calibration("l1-norm", n).map_err(lib)?;
            let far: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let kernel = Kernel::new(kind, 0.01).map_err(lib)?;
            let m = second_moment(&f, &far, kernel, probes, root.child(tag).child(2), Exec::Parallel).map_err(lib)?;
            let l = (n as f64).sqrt();
            checks.push(Check {
                name: format!("l1-norm away from kinks n={n} {kind:?}: mean squared norm"),
                measured: m.mean,
                bound: bound(l),
            });

            // ‖x‖₁ with kinks inside the smoothing support
            let kernel = Kernel::new(kind, 0.5).map_err(lib)?;
            let m = second_moment(&f, &x, kernel, probes, root.child(tag).child(3), Exec::Parallel).map_err(lib)?;
            checks.push(Check {
                name: format!("l1-norm near kinks n={n} {kind:?}: mean squared norm"),
                measured: m.mean,
                bound: bound(l),
            });
        }
    }
    Ok(checks)
}

/// Parameters of the rate experiment: `‖x‖₁` on the unit ball of `R¹⁰`,
/// `K = 8`, `D = 2`, `L = √10`, `C = 1`, smoothing width `h`.
pub const RATE_DIM: usize = 10;
pub const RATE_BATCH: usize = 8;
pub const RATE_WIDTH: f64 = 0.05;
pub const RATE_SEEDS: u64 = 20;

pub fn rate_params() -> RateParams {
    RateParams::new(2.0, (RATE_DIM as f64).sqrt(), RATE_DIM, RATE_BATCH)
}

fn rate_suite(opts: &ValidateOptions) -> Result<Vec<Check>, HarnessError> {
    let params = rate_params();
    let bounds: Vec<f64> = opts
        .rate_times
        .iter()
        .map(|&t| theorem_bound(BoundKind::T2Decaying, &params, t))
        .collect::<crate::Result<_>>()
        .map_err(lib)?;
    let horizon = *opts.rate_times.iter().max().ok_or_else(|| HarnessError::InvalidParameters("no checkpoints".into()))?;
    let (seeds, samples) = if opts.quick { (5, 20_000) } else { (RATE_SEEDS, 100_000) };
    let f = calibration(CalibrationKind::L1Norm.name(), RATE_DIM).map_err(lib)?;
    let ball = FeasibleSet::ball(vec![0.0; RATE_DIM], 1.0).map_err(lib)?;
    let start = vec![1.0 / (RATE_DIM as f64).sqrt(); RATE_DIM];
    let schedule = Schedule { step: StepRule::T2Decaying { params }, width: WidthRule::Fixed { h: RATE_WIDTH } };
    let mut cfg = SgdConfig::new(KernelKind::Ball, RATE_BATCH, horizon, schedule);
    cfg.checkpoints = opts.rate_times.clone();
    let kernel = Kernel::ball(RATE_WIDTH).map_err(lib)?;
    let gaps: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(i);
            let rec = sgd_run(&f, &ball, &start, &cfg, Stream::new(seed, 0))?;
            let oracle = Stream::new(seed, 1);
            let base = smoothed_value(&f, &[0.0; RATE_DIM], kernel, samples, oracle, Exec::Serial)?.mean;
            rec.checkpoints
                .iter()
                .map(|c| Ok(smoothed_value(&f, &c.weighted_average, kernel, samples, oracle, Exec::Serial)?.mean - base))
                .collect()
        })
        .collect::<crate::Result<_>>()
        .map_err(lib)?;
    Ok(opts
        .rate_times
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let mut v: Vec<f64> = gaps.iter().map(|g| g[j]).collect();
            v.sort_by(f64::total_cmp);
            let median = if v.len() % 2 == 1 { v[v.len() / 2] } else { 0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) };
            Check { name: format!("median F_h(x̄_t) − F_h(0) at t={t}"), measured: median, bound: bounds[j] }
        })
        .collect())
}

/// The three two-dimensional constrained test problems of the penalty suite:
/// name, objective, feasible set and Lipschitz constant of the objective.
pub fn penalty_problems() -> Vec<(&'static str, Box<dyn Objective + Send>, FeasibleSet, f64)> {
    let linear = |x: &[f64]| x[0] + 2.0 * x[1];
    let l1 = |x: &[f64]| (x[0] - 1.3).abs() + (x[1] - 0.4).abs();
    let pmax = |x: &[f64]| (-x[0] - 2.0 * x[1]).max(-2.0 * x[0] - x[1]);
    vec![
        ("linear on a disk", Box::new(linear), FeasibleSet::ball(vec![0.2, -0.1], 0.8).unwrap(), 5f64.sqrt()),
        (
            "shifted l1 on a box",
            Box::new(l1),
            FeasibleSet::boxed(vec![-1.0, -0.5], vec![1.0, 0.8]).unwrap(),
            2f64.sqrt(),
        ),
        (
            "max of affine on box and half-plane",
            Box::new(pmax),
            FeasibleSet::box_halfspace(vec![-1.0, -1.0], vec![1.0, 1.0], vec![1.0, 1.0], 0.5).unwrap(),
            5f64.sqrt(),
        ),
    ]
}

pub const PENALTY_MULTIPLIERS: [f64; 3] = [0.1, 1.0, 10.0];
/// Half-width of the square grid region.
pub const GRID_HALF_WIDTH: f64 = 1.5;
pub const GRID_POINTS: usize = 400;

fn grid_argmin(points: usize, half: f64, value: impl Fn(&[f64]) -> Option<f64> + Sync) -> Option<[f64; 2]> {
    let step = 2.0 * half / (points - 1) as f64;
    (0..points * points)
        .into_par_iter()
        .filter_map(|k| {
            let x = [-half + (k / points) as f64 * step, -half + (k % points) as f64 * step];
            value(&x).map(|v| (v, k, x))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, _, x)| x)
}

fn penalty_suite(opts: &ValidateOptions) -> Result<Vec<Check>, HarnessError> {
    let pairs = if opts.quick { 2_000 } else { 10_000 };
    let cell = 2.0 * GRID_HALF_WIDTH / (GRID_POINTS - 1) as f64;
    let mut checks = Vec::new();
    for (i, (name, f, set, l)) in penalty_problems().into_iter().enumerate() {
        let target = grid_argmin(GRID_POINTS, GRID_HALF_WIDTH, |x| set.contains(x).unwrap().then(|| f.eval(x)))
            .expect("feasible grid points exist");
        for m in PENALTY_MULTIPLIERS {
            let inner = |x: &[f64]| f.eval(x);
            let penalized = Penalized::new(inner, set.clone(), PenaltySpec::new(PenaltyKind::Distance, m)).map_err(lib)?;
            let found = grid_argmin(GRID_POINTS, GRID_HALF_WIDTH, |x| Some(penalized.eval(x))).expect("grid is non-empty");
            let offset = (found[0] - target[0]).abs().max((found[1] - target[1]).abs());
            checks.push(Check {
                name: format!("{name}, M={m}: grid argmin offset in cells"),
                measured: offset / cell,
                bound: 1.0 + 1e-9,
            });

            let mut rng = Stream::new(opts.seed, 2).child(i as u64).lane((m * 10.0) as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..pairs {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
                let r = 10f64.powf(rng.random_range(-3.0..0.5));
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let y = [x[0] + r * a.cos(), x[1] + r * a.sin()];
                let q = (penalized.eval(&x) - penalized.eval(&y)).abs() / norm(&[x[0] - y[0], x[1] - y[1]]);
                worst = worst.max(q);
            }
            checks.push(Check { name: format!("{name}, M={m}: largest difference quotient"), measured: worst, bound: l + 2.0 * m + 1e-9 });
        }
    }
    Ok(checks)
}
