//! Successive smoothing: minimize `F_{h_0}, F_{h_1}, …` for a decreasing
//! sequence of widths, each stage warm-started from the previous ones.
//!
//! Stage 0 starts at the user point and stage 1 at the point returned by
//! stage 0. From stage 2 on, the start is the ravine extrapolation
//! `π_X(x_s + β (x_s − x_{s−1}))` through the two latest stage results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{sgd_run, RateParams, RunRecord, Schedule, SgdConfig, StepRule, WidthRule};
use crate::penalty::FeasibleSet;
use crate::rng::Stream;
use crate::smoothing::{Exec, KernelKind};
use crate::Objective;

/// `π_X(x_curr + β (x_curr − x_prev))`
pub fn ravine_start(x_prev: &[f64], x_curr: &[f64], beta: f64, x_set: &FeasibleSet) -> Result<Vec<f64>> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("ravine coefficient must be nonnegative, got {beta}")));
    }
    if x_prev.len() != x_curr.len() {
        return Err(Error::invalid("ravine points differ in dimension"));
    }
    let y: Vec<f64> = x_curr.iter().zip(x_prev).map(|(c, p)| c + beta * (c - p)).collect();
    x_set.project(&y)
}

/// Which point of a finished stage is handed to the next one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StagePoint {
    #[default]
    WeightedAverage,
    PlainAverage,
    Best,
}

/// Width rule inside a stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthMode {
    /// `h_t = h_s` for the whole stage.
    #[default]
    Fixed,
    /// `h_t = L ρ_t / K` with the stage's rate parameters.
    Coupled,
}

/// How a stage's step rule is derived from the template.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepScaling {
    /// The template as is, for every stage.
    None,
    /// The template scaled by `h_s / h_0`, so that later stages move less.
    #[default]
    Width,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub kernel: KernelKind,
    pub batch: usize,
    pub iterations: usize,
    pub step: StepRule,
    #[serde(default)]
    pub step_scaling: StepScaling,
    #[serde(default)]
    pub width_mode: WidthMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPlan {
    /// Strictly decreasing positive widths `h_0 > h_1 > … > h_S`.
    pub widths: Vec<f64>,
    pub stage: StageConfig,
    /// Ravine extrapolation coefficient.
    pub beta: f64,
    #[serde(default)]
    pub stage_point: StagePoint,
    /// Keep every iterate in the stage records.
    #[serde(default)]
    pub record_trajectory: bool,
    #[serde(skip)]
    pub exec: Exec,
}

/// Default decay factor of geometric width sequences.
pub const DEFAULT_DECAY: f64 = 0.5;
/// Default ravine coefficient.
pub const DEFAULT_BETA: f64 = 1.0;

/// `h_0, h_0 q, …, h_0 q^{stages−1}`
pub fn geometric_widths(h0: f64, factor: f64, stages: usize) -> Vec<f64> {
    (0..stages).map(|s| h0 * factor.powi(s as i32)).collect()
}

impl SmoothingPlan {
    /// Geometric widths, a ball kernel and decaying steps calibrated to the
    /// first width: `D = 2 h_0`, `L = 1`.
    pub fn geometric(h0: f64, factor: f64, stages: usize, iterations: usize, batch: usize) -> Result<Self> {
        let plan = SmoothingPlan {
            widths: geometric_widths(h0, factor, stages),
            stage: StageConfig {
                kernel: KernelKind::Ball,
                batch,
                iterations,
                step: StepRule::T2Decaying { params: RateParams::new(2.0 * h0, 1.0, 1, batch) },
                step_scaling: StepScaling::Width,
                width_mode: WidthMode::Fixed,
            },
            beta: DEFAULT_BETA,
            stage_point: StagePoint::WeightedAverage,
            record_trajectory: false,
            exec: Exec::Serial,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `h_0` half the diameter of `x_set`, halving for 11 stages (`h_S ≈ 10⁻³ h_0`).
    pub fn default_for(x_set: &FeasibleSet, iterations: usize, batch: usize) -> Result<Self> {
        let diameter =
            x_set.diameter().ok_or_else(|| Error::invalid("default plan needs a box or ball iterate set"))?;
        Self::geometric(0.5 * diameter, DEFAULT_DECAY, 11, iterations, batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::config("smoothing plan needs at least one width"));
        }
        if self.widths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::config("smoothing widths must be positive"));
        }
        if self.widths.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("smoothing widths must be strictly decreasing"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("ravine coefficient must be nonnegative, got {}", self.beta)));
        }
        if self.stage.batch == 0 || self.stage.iterations == 0 {
            return Err(Error::config("stage batch size and iteration count must be at least 1"));
        }
        // probe the template with the first width
        self.stage_schedule(0, 1)?.validate()
    }

    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    /// Objective evaluations of a full run: `(2 K T + 1)` per stage.
    pub fn evaluations(&self) -> u64 {
        self.stages() as u64 * (2 * self.stage.batch as u64 * self.stage.iterations as u64 + 1)
    }

    /// Schedule of stage `s` for a problem of dimension `dim`.
    pub fn stage_schedule(&self, s: usize, dim: usize) -> Result<Schedule> {
        let h = *self.widths.get(s).ok_or_else(|| Error::invalid(format!("stage {s} is not in the plan")))?;
        let factor = match self.stage.step_scaling {
            StepScaling::None => 1.0,
            StepScaling::Width => h / self.widths[0],
        };
        let step = scale_step(fill_dims(self.stage.step, dim, self.stage.batch), factor);
        let width = match self.stage.width_mode {
            WidthMode::Fixed => WidthRule::Fixed { h },
            WidthMode::Coupled => {
                let l = step_params(&step)
                    .map(|p| p.l)
                    .ok_or_else(|| Error::config("coupled widths need a rate-based step rule"))?;
                WidthRule::Coupled { l, k: self.stage.batch }
            }
        };
        Ok(Schedule { step, width })
    }
}

fn step_params(step: &StepRule) -> Option<RateParams> {
    match *step {
        StepRule::Constant { .. } => None,
        StepRule::T2Fixed { params, .. }
        | StepRule::T2Decaying { params }
        | StepRule::T3Fixed { params, .. }
        | StepRule::T3Decaying { params }
        | StepRule::T3Vanishing { params } => Some(params),
    }
}

fn map_params(step: StepRule, f: impl Fn(RateParams) -> RateParams) -> StepRule {
    match step {
        StepRule::Constant { rho } => StepRule::Constant { rho },
        StepRule::T2Fixed { params, horizon } => StepRule::T2Fixed { params: f(params), horizon },
        StepRule::T2Decaying { params } => StepRule::T2Decaying { params: f(params) },
        StepRule::T3Fixed { params, horizon } => StepRule::T3Fixed { params: f(params), horizon },
        StepRule::T3Decaying { params } => StepRule::T3Decaying { params: f(params) },
        StepRule::T3Vanishing { params } => StepRule::T3Vanishing { params: f(params) },
    }
}

/// The template's `n` and `K` are replaced by the actual dimension and batch.
fn fill_dims(step: StepRule, dim: usize, batch: usize) -> StepRule {
    map_params(step, |p| RateParams { n: dim, k: batch, ..p })
}

/// Every step rule is proportional to `D` (or `ρ`), so scaling `D` scales the steps.
fn scale_step(step: StepRule, factor: f64) -> StepRule {
    match step {
        StepRule::Constant { rho } => StepRule::Constant { rho: rho * factor },
        other => map_params(other, |p| RateParams { d: p.d * factor, ..p }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub index: usize,
    pub h: f64,
    pub start: Vec<f64>,
    /// The point handed to the next stage.
    pub returned: Vec<f64>,
    pub record: RunRecord,
    /// Running minimum of `F` over this and all earlier stages.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub final_point: Vec<f64>,
    pub stages: Vec<StageResult>,
    pub evaluations: u64,
}

/// Random stream of stage `s` for a run with master seed `seed`.
pub fn stage_stream(seed: u64, s: usize) -> Stream {
    Stream::new(seed, 0).child(s as u64)
}

/// Runs every stage of `plan` from `start`, returning the best point seen.
pub fn successive_smoothing<F: Objective + ?Sized>(
    f: &F,
    x_set: &FeasibleSet,
    start: &[f64],
    plan: &SmoothingPlan,
    seed: u64,
) -> Result<ContinuationResult> {
    plan.validate()?;
    let dim = start.len();
    let mut stages: Vec<StageResult> = Vec::with_capacity(plan.stages());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluations = 0;

    for (s, &h) in plan.widths.iter().enumerate() {
        let x_start = match s {
            0 => start.to_vec(),
            1 => stages[0].returned.clone(),
            _ => ravine_start(&stages[s - 2].returned, &stages[s - 1].returned, plan.beta, x_set)
                .map_err(|e| e.at_stage(s))?,
        };
        let schedule = plan.stage_schedule(s, dim)?;
        let cfg = SgdConfig {
            kernel: plan.stage.kernel,
            batch: plan.stage.batch,
            iterations: plan.stage.iterations,
            schedule,
            record_trajectory: plan.record_trajectory,
            checkpoints: Vec::new(),
            evaluate_average: true,
            exec: plan.exec,
        };
        let record = sgd_run(f, x_set, &x_start, &cfg, stage_stream(seed, s)).map_err(|e| e.at_stage(s))?;
        evaluations += record.evaluations;
        if best.as_ref().is_none_or(|b| record.best_value < b.0) {
            best = Some((record.best_value, record.best_point.clone()));
        }
        let returned = match plan.stage_point {
            StagePoint::WeightedAverage => record.weighted_average.clone(),
            StagePoint::PlainAverage => record.plain_average.clone(),
            StagePoint::Best => x_set.project(&record.best_point)?,
        };
        let best_so_far = best.as_ref().map(|b| b.0).expect("set above");
        stages.push(StageResult { index: s, h, start: x_start, returned, record, best_so_far });
    }

    let (best_value, best_point) = best.expect("plan has at least one stage");
    let final_point = stages.last().expect("non-empty").returned.clone();
    Ok(ContinuationResult { best_point, best_value, final_point, stages, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(r: f64) -> FeasibleSet {
        FeasibleSet::boxed(vec![-r, -r], vec![r, r]).unwrap()
    }

    #[test]
    fn ravine_examples() {
        let x = square(5.0);
        assert_eq!(ravine_start(&[3.0, 1.0], &[1.0, 0.0], 0.0, &x).unwrap(), vec![1.0, 0.0]);
        assert_eq!(ravine_start(&[1.0, 2.0], &[1.0, 2.0], 4.0, &x).unwrap(), vec![1.0, 2.0]);
        assert_eq!(ravine_start(&[0.0, 0.0], &[1.0, 0.0], 1.0, &x).unwrap(), vec![2.0, 0.0]);
        // projected back
        assert_eq!(ravine_start(&[0.0, 0.0], &[4.0, 0.0], 1.0, &x).unwrap(), vec![5.0, 0.0]);
        assert!(ravine_start(&[0.0, 0.0], &[4.0, 0.0], -1.0, &x).is_err());
    }

    #[test]
    fn plan_validation() {
        let mut plan = SmoothingPlan::geometric(1.0, 0.5, 4, 10, 2).unwrap();
        assert_eq!(plan.widths, vec![1.0, 0.5, 0.25, 0.125]);
        plan.widths = vec![1.0, 1.0];
        assert!(plan.validate().is_err());
        plan.widths = vec![];
        assert!(plan.validate().is_err());
        plan.widths = vec![1.0, 0.5];
        plan.beta = -0.1;
        assert!(plan.validate().is_err());
        plan.beta = 0.0;
        plan.stage.step = StepRule::Constant { rho: 0.1 };
        plan.stage.width_mode = WidthMode::Coupled;
        assert!(plan.validate().is_err());
    }

    #[test]
    fn stage_schedules_scale_with_width() {
        let plan = SmoothingPlan::geometric(2.0, 0.5, 3, 10, 4).unwrap();
        let s0 = plan.stage_schedule(0, 6).unwrap();
        let s2 = plan.stage_schedule(2, 6).unwrap();
        let (r0, h0) = s0.values(5).unwrap();
        let (r2, h2) = s2.values(5).unwrap();
        assert_eq!((h0, h2), (2.0, 0.5));
        assert!((r2 / r0 - 0.25).abs() < 1e-15);
        match s0.step {
            StepRule::T2Decaying { params } => assert_eq!((params.n, params.k), (6, 4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_stage_equals_one_run() {
        let f = |x: &[f64]| (x[0] - 0.3).abs() + 2.0 * (x[1] + 0.1).abs();
        let x = square(1.0);
        let plan = SmoothingPlan::geometric(0.4, 0.5, 1, 200, 3).unwrap();
        let out = successive_smoothing(&f, &x, &[0.9, 0.9], &plan, 17).unwrap();
        let mut cfg = SgdConfig::new(KernelKind::Ball, 3, 200, plan.stage_schedule(0, 2).unwrap());
        cfg.evaluate_average = true;
        let rec = sgd_run(&f, &x, &[0.9, 0.9], &cfg, stage_stream(17, 0)).unwrap();
        assert_eq!(out.stages.len(), 1);
        assert_eq!(out.stages[0].record, rec);
        assert_eq!(out.best_value, rec.best_value);
        assert_eq!(out.evaluations, rec.evaluations);
    }

    #[test]
    fn zero_beta_chains_stage_results() {
        let f = |x: &[f64]| x[0].abs() + x[1].abs();
        let mut plan = SmoothingPlan::geometric(0.5, 0.5, 5, 30, 2).unwrap();
        plan.beta = 0.0;
        let out = successive_smoothing(&f, &square(1.0), &[0.7, -0.6], &plan, 3).unwrap();
        for s in 1..out.stages.len() {
            assert_eq!(out.stages[s].start, out.stages[s - 1].returned);
            assert_eq!(out.stages[s].h, plan.widths[s]);
        }
        assert_eq!(out.evaluations, plan.evaluations());
    }

    #[test]
    fn best_value_is_a_running_minimum() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() + x[1].abs();
        let plan = SmoothingPlan::geometric(1.0, 0.5, 6, 40, 2).unwrap();
        let out = successive_smoothing(&f, &square(2.0), &[0.0, 1.0], &plan, 8).unwrap();
        let mut prev = f64::INFINITY;
        for st in &out.stages {
            assert!(st.best_so_far <= prev);
            assert!(st.best_so_far <= st.record.best_value);
            prev = st.best_so_far;
        }
        assert_eq!(out.best_value, prev);
        assert_eq!(f(&out.best_point), out.best_value);
    }

    #[test]
    fn stage_errors_carry_the_stage() {
        let f = |x: &[f64]| if x[0].abs() < 0.05 { f64::NAN } else { x[0].abs() };
        let plan = SmoothingPlan::geometric(0.5, 0.5, 4, 50, 2).unwrap();
        let err = successive_smoothing(&f, &square(1.0), &[0.8, 0.0], &plan, 1).unwrap_err();
        assert!(matches!(err, Error::AtStage { .. }), "{err}");
        assert!(err.is_evaluation());
    }
}
