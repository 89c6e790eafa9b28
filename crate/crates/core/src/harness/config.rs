//! Run configuration files.
//!
//! A run is described by one TOML document:
//!
//! ```toml
//! [problem]
//! name = "polygon"          # or l1-norm, max-coordinate, two-well-1d, lsc-step-1d
//! n = 3                     # vertices for the polygon, dimension otherwise
//!
//! [optimizer]
//! kernel = "ball"
//! batch = 4
//! iterations = 1000         # per stage
//! step = { rule = "t2-decaying" }
//!
//! [plan]
//! stages = 11
//!
//! [run]
//! master_seed = 1
//! runs = 3
//! budget = 100000
//! output = "out"
//! ```
//!
//! Missing values fall back to the library defaults; `D` defaults to the
//! diameter of the iterate region and `L` to the problem's known constant or
//! an estimate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuation::{StagePoint, StepScaling, WidthMode, DEFAULT_BETA, DEFAULT_DECAY};
use crate::optimizer::DEFAULT_MOMENT_CONSTANT;
use crate::penalty::{PenaltyKind, DEFAULT_MULTIPLIER};
use crate::problems::DiameterPenalty;
use crate::smoothing::KernelKind;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintConfig>,
    /// Iterate region `X`; defaults to the problem's own region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<SetConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub diameter: DiameterPenalty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetConfig {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    BoxHalfspace { lower: Vec<f64>, upper: Vec<f64>, normal: Vec<f64>, offset: f64 },
}

/// A feasible set `D` and the exact penalty that folds it into the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub set: SetConfig,
    #[serde(default = "default_penalty")]
    pub penalty: PenaltyKind,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
}

fn default_penalty() -> PenaltyKind {
    PenaltyKind::Distance
}

fn default_multiplier() -> f64 {
    DEFAULT_MULTIPLIER
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    Constant,
    T2Fixed,
    T2Decaying,
    T3Fixed,
    T3Decaying,
    T3Vanishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub rule: RuleName,
    /// Step size of the constant rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    DEFAULT_MOMENT_CONSTANT
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { rule: RuleName::T2Decaying, rho: None, d: None, l: None, c: DEFAULT_MOMENT_CONSTANT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kernel: KernelKind,
    pub batch: usize,
    /// Iterations per stage.
    pub iterations: usize,
    pub step: StepConfig,
    pub beta: f64,
    pub stage_point: StagePoint,
    pub step_scaling: StepScaling,
    pub width_mode: WidthMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Ball,
            batch: 4,
            iterations: 1000,
            step: StepConfig::default(),
            beta: DEFAULT_BETA,
            stage_point: StagePoint::WeightedAverage,
            step_scaling: StepScaling::None,
            width_mode: WidthMode::Fixed,
        }
    }
}

/// Width sequence: explicit `widths`, or `stages` geometric widths from `h0`
/// (default half the diameter of `X`) with ratio `decay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    pub decay: f64,
    pub stages: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { widths: None, h0: None, decay: DEFAULT_DECAY, stages: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Explicit seeds; otherwise `master_seed + i` for `i < runs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    /// Cap on objective evaluations per run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Output directory, relative to the config file.
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Add a wall-time column to the summary (breaks byte-level reproducibility).
    #[serde(default)]
    pub wall_time: bool,
    /// Store every iterate in the run records.
    #[serde(default)]
    pub trajectory: bool,
}

impl RunSection {
    pub fn seed_list(&self) -> Vec<u64> {
        match (&self.seeds, self.master_seed) {
            (Some(s), _) => s.clone(),
            (None, Some(m)) => (0..self.runs.unwrap_or(1) as u64).map(|i| m.wrapping_add(i)).collect(),
            (None, None) => Vec::new(),
        }
    }
}

/// A semantic problem with one config key, reported at that key's line.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyError {
    pub key: &'static str,
    pub message: String,
}

impl KeyError {
    pub fn new(key: &'static str, message: impl Into<String>) -> Self {
        Self { key, message: message.into() }
    }
}

impl RunConfig {
    pub fn from_toml(source: &str, origin: &Path) -> Result<Self, HarnessError> {
        toml::from_str(source).map_err(|e| HarnessError::Config {
            origin: origin.to_path_buf(),
            line: e.span().map(|s| line_of_offset(source, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), HarnessError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let config = Self::from_toml(&source, path)?;
        Ok((config, source))
    }

    /// Checks that do not need the problem instance.
    pub fn check(&self) -> Result<(), KeyError> {
        let o = &self.optimizer;
        if o.batch == 0 {
            return Err(KeyError::new("optimizer.batch", "batch size must be at least 1"));
        }
        if o.iterations == 0 {
            return Err(KeyError::new("optimizer.iterations", "iteration count must be at least 1"));
        }
        if !(o.beta >= 0.0 && o.beta.is_finite()) {
            return Err(KeyError::new("optimizer.beta", format!("ravine coefficient must be nonnegative, got {}", o.beta)));
        }
        let s = &o.step;
        if s.rule == RuleName::Constant && s.rho.is_none() {
            return Err(KeyError::new("optimizer.step", "the constant rule needs `rho`"));
        }
        for (key, v) in [("optimizer.step", s.rho), ("optimizer.step", s.d), ("optimizer.step", s.l)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(KeyError::new(key, format!("step parameters must be positive, got {v}")));
                }
            }
        }
        if !(s.c > 0.0 && s.c.is_finite()) {
            return Err(KeyError::new("optimizer.step", format!("moment constant must be positive, got {}", s.c)));
        }
        let p = &self.plan;
        if let Some(w) = &p.widths {
            if w.is_empty() {
                return Err(KeyError::new("plan.widths", "width list is empty"));
            }
            if w.iter().any(|h| !(*h > 0.0 && h.is_finite())) || w.windows(2).any(|w| w[1] >= w[0]) {
                return Err(KeyError::new("plan.widths", "widths must be positive and strictly decreasing"));
            }
        } else {
            if p.stages == 0 {
                return Err(KeyError::new("plan.stages", "at least one stage is needed"));
            }
            if !(p.decay > 0.0 && p.decay < 1.0) {
                return Err(KeyError::new("plan.decay", format!("decay must lie in (0, 1), got {}", p.decay)));
            }
            if let Some(h0) = p.h0 {
                if !(h0 > 0.0 && h0.is_finite()) {
                    return Err(KeyError::new("plan.h0", format!("initial width must be positive, got {h0}")));
                }
            }
        }
        let r = &self.run;
        if r.seeds.is_some() && (r.master_seed.is_some() || r.runs.is_some()) {
            return Err(KeyError::new("run.seeds", "give either `seeds` or `master_seed`/`runs`, not both"));
        }
        if r.seed_list().is_empty() {
            let key = if r.seeds.is_some() { "run.seeds" } else { "run" };
            return Err(KeyError::new(key, "seed list is empty"));
        }
        if r.threads == Some(0) {
            return Err(KeyError::new("run.threads", "thread count must be at least 1"));
        }
        Ok(())
    }

    /// Number of stages the plan will have.
    pub fn stage_count(&self) -> usize {
        self.plan.widths.as_ref().map_or(self.plan.stages, Vec::len)
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Line of a dotted key such as `run.seeds` (1-based), falling back to the
/// line of its table header.
pub fn key_line(source: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, Some(l)),
        None => (key, None),
    };
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                header = Some(i + 1);
            }
            if leaf.is_none() && current == key {
                return Some(i + 1);
            }
            continue;
        }
        let Some(leaf) = leaf else { continue };
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        if (current == table && k == leaf) || (current.is_empty() && k == key) {
            return Some(i + 1);
        }
        // `[optimizer]` with `step.rule = …` or `[run]` with dotted keys
        if !current.is_empty() && format!("{current}.{k}") == key {
            return Some(i + 1);
        }
    }
    header
}
