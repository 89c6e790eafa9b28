//! Projected stochastic finite-difference gradient descent with trajectory
//! averaging.
//!
//! The iteration is `x_{t+1} = π_X(x_t − ρ_t η_t)` where `η_t` is the raw
//! batch direction of [`grad_estimate`]. The step rules below come with
//! convergence bounds for convex Lipschitz objectives (see [`theorem_bound`]);
//! they are calibrated to the raw direction, so for the ball kernel the
//! `1/n` bias of `η_t` is absorbed into `ρ_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::FeasibleSet;
use crate::rng::Stream;
use crate::smoothing::{grad_estimate, sample_direction, sample_offset, Exec, Kernel, KernelKind};
use crate::vector::axpy;
use crate::Objective;

/// Constants of the rate analysis: `‖X‖ ≤ D`, Lipschitz constant `L`,
/// dimension `n`, batch size `K` and the second-moment constant `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub d: f64,
    pub l: f64,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_c")]
    pub c: f64,
}

/// Default for the absolute constant in the sphere-direction second-moment bound.
pub const DEFAULT_MOMENT_CONSTANT: f64 = 1.0;

fn default_c() -> f64 {
    DEFAULT_MOMENT_CONSTANT
}

impl RateParams {
    pub fn new(d: f64, l: f64, n: usize, k: usize) -> Self {
        Self { d, l, n, k, c: DEFAULT_MOMENT_CONSTANT }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.d) || !pos(self.l) || !pos(self.c) || self.n == 0 || self.k == 0 {
            return Err(Error::invalid(format!("rate parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    /// `(C + K/n)` of the ball-kernel analysis.
    fn ball_moment(&self) -> f64 {
        self.c + self.kf() / self.nf()
    }

    /// `(1 + (n−1)/K)` of the Gaussian analysis.
    fn gauss_moment(&self) -> f64 {
        1.0 + (self.nf() - 1.0) / self.kf()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StepRule {
    Constant { rho: f64 },
    /// Ball kernel, constant step tuned for a horizon of `horizon` iterations.
    T2Fixed { params: RateParams, horizon: usize },
    /// Ball kernel, `ρ_t ∝ 1/√t`.
    T2Decaying { params: RateParams },
    /// Gaussian kernel, constant step tuned for a horizon.
    T3Fixed { params: RateParams, horizon: usize },
    /// Gaussian kernel, `ρ_t ∝ 1/√t`.
    T3Decaying { params: RateParams },
    /// Gaussian kernel, `ρ_t ∝ 1/√t`, meant to be paired with a coupled width.
    T3Vanishing { params: RateParams },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum WidthRule {
    Fixed { h: f64 },
    /// `h_t = L ρ_t / K`
    Coupled { l: f64, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub step: StepRule,
    pub width: WidthRule,
}

impl Schedule {
    pub fn constant(rho: f64, h: f64) -> Self {
        Schedule { step: StepRule::Constant { rho }, width: WidthRule::Fixed { h } }
    }

    pub fn validate(&self) -> Result<()> {
        match self.step {
            StepRule::Constant { rho } if !(rho > 0.0 && rho.is_finite()) => {
                return Err(Error::invalid(format!("constant step must be positive, got {rho}")))
            }
            StepRule::Constant { .. } => {}
            StepRule::T2Fixed { params, horizon } | StepRule::T3Fixed { params, horizon } => {
                params.validate()?;
                if horizon == 0 {
                    return Err(Error::invalid("fixed-step horizon must be at least 1"));
                }
            }
            StepRule::T2Decaying { params } | StepRule::T3Decaying { params } | StepRule::T3Vanishing { params } => {
                params.validate()?
            }
        }
        match self.width {
            WidthRule::Fixed { h } if !(h > 0.0 && h.is_finite()) => {
                Err(Error::invalid(format!("smoothing width must be positive, got {h}")))
            }
            WidthRule::Coupled { l, k } if !(l > 0.0 && l.is_finite()) || k == 0 => {
                Err(Error::invalid("coupled width needs positive L and K"))
            }
            _ => Ok(()),
        }
    }

    /// Step `ρ_t` and width `h_t` at iteration `t ≥ 1`.
    pub fn values(&self, t: usize) -> Result<(f64, f64)> {
        schedule_values(self, t)
    }

    pub fn is_constant_step(&self) -> bool {
        matches!(self.step, StepRule::Constant { .. } | StepRule::T2Fixed { .. } | StepRule::T3Fixed { .. })
    }
}

/// Closed-form `(ρ_t, h_t)` of a schedule at iteration `t ≥ 1`.
pub fn schedule_values(schedule: &Schedule, t: usize) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(Error::invalid("iterations are numbered from 1"));
    }
    if let StepRule::T2Fixed { horizon, .. } | StepRule::T3Fixed { horizon, .. } = schedule.step {
        if t > horizon {
            return Err(Error::invalid(format!("iteration {t} is past the fixed-step horizon {horizon}")));
        }
    }
    let tf = t as f64;
    let rho = match schedule.step {
        StepRule::Constant { rho } => rho,
        StepRule::T2Fixed { params: p, horizon } => {
            p.d * (p.nf() * p.kf()).sqrt() / (p.l * (2.0 * horizon as f64 * p.ball_moment()).sqrt())
        }
        StepRule::T2Decaying { params: p } => p.d * (p.nf() * p.kf()).sqrt() / (p.l * (2.0 * tf * p.ball_moment()).sqrt()),
        StepRule::T3Fixed { params: p, horizon } => p.d / (p.l * (2.0 * horizon as f64 * p.gauss_moment()).sqrt()),
        StepRule::T3Decaying { params: p } => p.d / (p.l * (2.0 * tf * p.gauss_moment()).sqrt()),
        StepRule::T3Vanishing { params: p } => p.d / (p.l * (tf * (1.0 + (p.nf() + 3.0) / p.kf())).sqrt()),
    };
    let h = match schedule.width {
        WidthRule::Fixed { h } => h,
        WidthRule::Coupled { l, k } => l * rho / k as f64,
    };
    Ok((rho, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    T2Fixed,
    T2Decaying,
    T2Vanishing,
    T3Fixed,
    T3Decaying,
    T3Vanishing,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "t2-fixed" => BoundKind::T2Fixed,
            "t2-decaying" => BoundKind::T2Decaying,
            "t2-vanishing" => BoundKind::T2Vanishing,
            "t3-fixed" => BoundKind::T3Fixed,
            "t3-decaying" => BoundKind::T3Decaying,
            "t3-vanishing" => BoundKind::T3Vanishing,
            other => return Err(Error::invalid(format!("unknown bound '{other}'"))),
        })
    }
}

/// Upper bound on the expected optimality gap of the averaged point after
/// `t` iterations (for fixed-step kinds `t` is the horizon `T`).
///
/// The decaying kinds contain `(2 + ln t)/(√t − 1)` and are undefined at `t = 1`.
pub fn theorem_bound(kind: BoundKind, p: &RateParams, t: usize) -> Result<f64> {
    p.validate()?;
    let fixed = matches!(kind, BoundKind::T2Fixed | BoundKind::T3Fixed);
    if t == 0 || (!fixed && t < 2) {
        return Err(Error::invalid(format!("bound {kind:?} is undefined at t = {t}")));
    }
    let tf = t as f64;
    let (n, k) = (p.nf(), p.kf());
    let decay = (2.0 + tf.ln()) / (tf.sqrt() - 1.0);
    let ld = p.l * p.d;
    Ok(match kind {
        BoundKind::T2Fixed => ld / tf.sqrt() * (2.0 * n / k).sqrt() * p.ball_moment().sqrt(),
        BoundKind::T2Decaying => ld / 2f64.sqrt() * (n / k).sqrt() * p.ball_moment().sqrt() * decay,
        BoundKind::T2Vanishing => ld / 2.0 * (n / k).sqrt() * (2.0 + p.ball_moment()).sqrt() * decay,
        BoundKind::T3Fixed => ld / tf.sqrt() * (2.0 * p.gauss_moment()).sqrt(),
        BoundKind::T3Decaying => ld * 2f64.sqrt() * p.gauss_moment().sqrt() * decay,
        BoundKind::T3Vanishing => ld / 2.0 * (1.0 + (n + 3.0) / k).sqrt() * decay,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub kernel: KernelKind,
    pub batch: usize,
    pub iterations: usize,
    pub schedule: Schedule,
    /// Keep every iterate in the record.
    pub record_trajectory: bool,
    /// Iterations at which the running averages are snapshotted.
    pub checkpoints: Vec<usize>,
    /// Evaluate `F` at the final weighted average (one extra evaluation),
    /// letting it compete for the best point.
    pub evaluate_average: bool,
    pub exec: Exec,
}

impl SgdConfig {
    pub fn new(kernel: KernelKind, batch: usize, iterations: usize, schedule: Schedule) -> Self {
        Self {
            kernel,
            batch,
            iterations,
            schedule,
            record_trajectory: false,
            checkpoints: Vec::new(),
            evaluate_average: false,
            exec: Exec::Serial,
        }
    }

    /// Objective evaluations a run with this configuration performs.
    pub fn evaluations(&self) -> u64 {
        2 * self.batch as u64 * self.iterations as u64 + self.evaluate_average as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub plain_average: Vec<f64>,
    pub weighted_average: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub iterations: usize,
    pub first_point: Vec<f64>,
    /// `x_{T+1}`, the point produced by the last step.
    pub final_point: Vec<f64>,
    pub trajectory: Option<Vec<Vec<f64>>>,
    /// `(1/T) Σ_{t≤T} x_t`
    pub plain_average: Vec<f64>,
    /// `Σ ρ_t x_t / Σ ρ_t`
    pub weighted_average: Vec<f64>,
    /// `F` at the weighted average, when requested.
    pub weighted_average_value: Option<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Lowest `F` value among all evaluated points.
    pub best_value: f64,
    pub best_point: Vec<f64>,
    pub evaluations: u64,
    /// `h_t` of the last iteration.
    pub final_width: f64,
}

/// Running mean with relative weights `w_t = ρ_t / ρ_1`, so constant steps
/// reproduce the plain average bit for bit.
struct RunningMean {
    mean: Vec<f64>,
    total: f64,
}

impl RunningMean {
    fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], total: 0.0 }
    }

    fn push(&mut self, x: &[f64], weight: f64) {
        self.total += weight;
        let s = weight / self.total;
        for (m, v) in self.mean.iter_mut().zip(x) {
            *m += s * (v - *m);
        }
    }
}

/// Runs `T` projected steps from `x1 ∈ X`.
///
/// Iteration `t` draws its directions from `stream.with_batch(t)`. The best
/// point is tracked over the probe evaluations only, so the evaluation count
/// is exactly `2 K T` (plus one if the average is evaluated).
pub fn sgd_run<F: Objective + ?Sized>(
    f: &F,
    x_set: &FeasibleSet,
    x1: &[f64],
    cfg: &SgdConfig,
    stream: Stream,
) -> Result<RunRecord> {
    cfg.schedule.validate()?;
    if cfg.batch == 0 || cfg.iterations == 0 {
        return Err(Error::invalid("batch size and iteration count must be at least 1"));
    }
    if x1.len() != x_set.dim() {
        return Err(Error::invalid(format!("start point has dimension {}, set has {}", x1.len(), x_set.dim())));
    }
    if !x_set.contains(x1)? {
        return Err(Error::invalid("start point is outside the iterate set"));
    }
    if let StepRule::T2Fixed { horizon, .. } | StepRule::T3Fixed { horizon, .. } = cfg.schedule.step {
        if cfg.iterations > horizon {
            return Err(Error::invalid(format!("{} iterations exceed the fixed-step horizon {horizon}", cfg.iterations)));
        }
    }

    let dim = x1.len();
    let mut x = x1.to_vec();
    let mut plain = RunningMean::new(dim);
    let mut weighted = RunningMean::new(dim);
    let mut trajectory = cfg.record_trajectory.then(|| Vec::with_capacity(cfg.iterations + 1));
    let mut checkpoints = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut first_rho = None;
    let mut width = 0.0;

    for t in 1..=cfg.iterations {
        let (rho, h) = cfg.schedule.values(t)?;
        width = h;
        let rho1 = *first_rho.get_or_insert(rho);
        if let Some(tr) = trajectory.as_mut() {
            tr.push(x.clone());
        }
        plain.push(&x, 1.0);
        weighted.push(&x, rho / rho1);
        if cfg.checkpoints.contains(&t) {
            checkpoints.push(Checkpoint { t, plain_average: plain.mean.clone(), weighted_average: weighted.mean.clone() });
        }

        let kernel = Kernel::new(cfg.kernel, h).map_err(|e| e.at_iteration(t))?;
        let g = grad_estimate(f, &x, kernel, cfg.batch, stream.with_batch(t as u64), cfg.exec)
            .map_err(|e| e.at_iteration(t))?;
        if best.as_ref().is_none_or(|b| g.best_probe.0 < b.0) {
            best = Some(g.best_probe);
        }
        x = x_set.project(&axpy(&x, -rho, &g.direction)).map_err(|e| e.at_iteration(t))?;
    }
    if let Some(tr) = trajectory.as_mut() {
        tr.push(x.clone());
    }

    let mut evaluations = 2 * cfg.batch as u64 * cfg.iterations as u64;
    let mut weighted_average_value = None;
    if cfg.evaluate_average {
        let v = f.eval(&weighted.mean);
        if !v.is_finite() {
            return Err(Error::NonFinite { point: weighted.mean.clone(), value: v }.at_iteration(cfg.iterations));
        }
        evaluations += 1;
        weighted_average_value = Some(v);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, weighted.mean.clone()));
        }
    }
    let (best_value, best_point) = best.expect("at least one iteration");
    Ok(RunRecord {
        seed: stream.seed,
        iterations: cfg.iterations,
        first_point: x1.to_vec(),
        final_point: x,
        trajectory,
        plain_average: plain.mean,
        weighted_average: weighted.mean,
        weighted_average_value,
        checkpoints,
        best_value,
        best_point,
        evaluations,
        final_width: width,
    })
}

/// Number of difference quotients used by [`estimate_lipschitz`] by default.
pub const LIPSCHITZ_SAMPLES: usize = 1000;
/// Safety factor applied to the largest observed quotient.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;

/// Estimates a Lipschitz constant of `f` over `region` (a box or a ball) as
/// `1.5 ×` the largest of `samples` symmetric difference quotients
/// `|f(x + s y) − f(x − s y)| / (2s)` at random points `x` and unit directions `y`.
pub fn estimate_lipschitz<F: Objective + ?Sized>(
    f: &F,
    region: &FeasibleSet,
    scale: f64,
    samples: usize,
    stream: Stream,
) -> Result<f64> {
    use rand::Rng as _;
    if scale.is_nan() || scale <= 0.0 || samples == 0 {
        return Err(Error::invalid("Lipschitz estimation needs a positive scale and at least one sample"));
    }
    let dim = region.dim();
    let mut largest = 0.0f64;
    for i in 0..samples as u64 {
        let mut rng = stream.lane(i);
        let x: Vec<f64> = match region {
            FeasibleSet::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect()
            }
            FeasibleSet::Ball { center, radius } => {
                axpy(center, *radius, &sample_offset(KernelKind::Ball, dim, &mut rng))
            }
            FeasibleSet::Custom(_) => {
                return Err(Error::invalid("Lipschitz estimation needs a box or ball region"));
            }
        };
        let y = sample_direction(KernelKind::Ball, dim, &mut rng);
        let (a, b) = (axpy(&x, scale, &y), axpy(&x, -scale, &y));
        let (fa, fb) = (f.eval(&a), f.eval(&b));
        for (v, p) in [(fa, a), (fb, b)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { point: p, value: v });
            }
        }
        largest = largest.max((fa - fb).abs() / (2.0 * scale));
    }
    Ok(LIPSCHITZ_SAFETY * largest)
}
