//! Executing run configurations and writing their artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::continuation::{successive_smoothing, ContinuationResult, SmoothingPlan, StageConfig};
use crate::continuation::geometric_widths;
use crate::optimizer::{estimate_lipschitz, RateParams, StepRule, LIPSCHITZ_SAMPLES};
use crate::rng::Stream;
use crate::smoothing::Exec;

use super::config::{key_line, KeyError, RuleName, RunConfig};
use super::registry::{instance, Instance};
use super::{worker_threads, HarnessError};

/// Name of the summary table inside the output directory.
pub const SUMMARY_FILE: &str = "summary.csv";
/// Subdirectory holding one record per run.
pub const RUNS_DIR: &str = "runs";
/// Format tag of the per-run documents.
pub const RECORD_FORMAT: &str = "smoothopt-run/1";

/// One summary row. Values are in the problem's own sense: areas for the
/// polygon, objective values for minimization problems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub problem: String,
    pub n: usize,
    pub seed: u64,
    pub stages: usize,
    /// Iterations of one stage.
    pub smoothing_iterations: usize,
    /// Iterations over all stages.
    pub total_iterations: usize,
    /// Every objective evaluation, diagnostics included.
    #[serde(rename = "Func. calc.")]
    pub evaluations: u64,
    #[serde(rename = "Max. achived")]
    pub best: f64,
    #[serde(rename = "Ideal value")]
    pub ideal: Option<f64>,
    /// Objective at the last stage's weighted average.
    pub weighted_average_value: f64,
    /// Lipschitz-estimation evaluations included in `Func. calc.`.
    pub diagnostic_evaluations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Where the step rule's Lipschitz constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LipschitzSource {
    Config,
    Problem,
    Estimated,
    /// The step rule does not use `L`.
    Unused,
}

/// Parameters derived from the config and the problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub plan: SmoothingPlan,
    pub d: f64,
    pub l: f64,
    pub lipschitz_source: LipschitzSource,
    pub diagnostic_evaluations: u64,
}

#[derive(Serialize)]
struct RunDocument<'a> {
    format: &'static str,
    config: &'a RunConfig,
    config_source: &'a str,
    seed: u64,
    resolved: &'a Resolved,
    row: &'a Row,
    /// Best point in the problem's full coordinates.
    best_decision: Vec<f64>,
    result: &'a ContinuationResult,
    wall_time_s: f64,
}

/// A parsed and checked configuration.
pub struct Prepared {
    pub config: RunConfig,
    pub source: String,
    pub origin: PathBuf,
    pub instance: Instance,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl Prepared {
    fn key_error(&self, e: KeyError) -> HarnessError {
        HarnessError::Config { origin: self.origin.clone(), line: key_line(&self.source, e.key), message: e.message }
    }
}

/// Parses and checks `source`; relative output paths resolve against `base`.
pub fn prepare(source: String, origin: &Path, base: &Path) -> Result<Prepared, HarnessError> {
    let config = RunConfig::from_toml(&source, origin)?;
    let anchor = |e: KeyError| HarnessError::Config {
        origin: origin.to_path_buf(),
        line: key_line(&source, e.key),
        message: e.message,
    };
    config.check().map_err(anchor)?;
    let p = &config.problem;
    let instance = instance(&p.name, p.n, p.diameter, config.constraint.as_ref(), config.region.as_ref(), p.start.as_deref())
        .map_err(anchor)?;
    let seeds = config.run.seed_list();
    let output = base.join(&config.run.output);
    let prepared = Prepared { config, source, origin: origin.to_path_buf(), instance, seeds, output };
    // resolve once with a placeholder L to surface plan and budget problems early
    resolve(&prepared, None).map_err(|e| prepared.key_error(e))?;
    Ok(prepared)
}

/// Reads and prepares the config file at `path`.
pub fn load(path: &Path) -> Result<Prepared, HarnessError> {
    let (_, source) = RunConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    prepare(source, path, base)
}

fn needs_lipschitz(rule: RuleName) -> bool {
    rule != RuleName::Constant
}

/// Builds the plan. `estimated` supplies `L` when neither the config nor the
/// problem knows it; `None` plans with a placeholder to check everything else.
pub fn resolve(p: &Prepared, estimated: Option<f64>) -> Result<Resolved, KeyError> {
    let c = &p.config;
    let o = &c.optimizer;
    let inst = &p.instance;
    let diameter = inst.region.diameter().expect("regions are boxes or balls");
    let widths = match &c.plan.widths {
        Some(w) => w.clone(),
        None => geometric_widths(c.plan.h0.unwrap_or(0.5 * diameter), c.plan.decay, c.plan.stages),
    };
    let d = o.step.d.unwrap_or(diameter);
    let (l, lipschitz_source, diagnostic_evaluations) = match (o.step.l, inst.lipschitz) {
        _ if !needs_lipschitz(o.step.rule) => (1.0, LipschitzSource::Unused, 0),
        (Some(l), _) => (l, LipschitzSource::Config, 0),
        (None, Some(l)) => (l, LipschitzSource::Problem, 0),
        (None, None) => (estimated.unwrap_or(1.0), LipschitzSource::Estimated, 2 * LIPSCHITZ_SAMPLES as u64),
    };
    let params = RateParams { d, l, n: inst.dim(), k: o.batch, c: o.step.c };
    let horizon = o.iterations;
    let step = match o.step.rule {
        RuleName::Constant => StepRule::Constant { rho: o.step.rho.expect("checked") },
        RuleName::T2Fixed => StepRule::T2Fixed { params, horizon },
        RuleName::T2Decaying => StepRule::T2Decaying { params },
        RuleName::T3Fixed => StepRule::T3Fixed { params, horizon },
        RuleName::T3Decaying => StepRule::T3Decaying { params },
        RuleName::T3Vanishing => StepRule::T3Vanishing { params },
    };
    let plan = SmoothingPlan {
        widths,
        stage: StageConfig {
            kernel: o.kernel,
            batch: o.batch,
            iterations: o.iterations,
            step,
            step_scaling: o.step_scaling,
            width_mode: o.width_mode,
        },
        beta: o.beta,
        stage_point: o.stage_point,
        record_trajectory: c.run.trajectory,
        exec: Exec::Serial,
    };
    plan.validate().map_err(|e| KeyError::new("optimizer", e.to_string()))?;
    let needed = plan.evaluations() + diagnostic_evaluations;
    if let Some(budget) = c.run.budget {
        if budget < needed {
            return Err(KeyError::new(
                "run.budget",
                format!(
                    "budget {budget} is below the {needed} evaluations the plan needs \
                     ({} stages of 2·K·T + 1 = {}, plus {diagnostic_evaluations} diagnostic)",
                    plan.stages(),
                    2 * o.batch as u64 * o.iterations as u64 + 1
                ),
            ));
        }
    }
    Ok(Resolved { plan, d, l, lipschitz_source, diagnostic_evaluations })
}

/// Stream of the Lipschitz estimate of run `seed`, disjoint from the stage streams.
pub fn diagnostic_stream(seed: u64) -> Stream {
    Stream::new(seed, 0).child(u64::MAX)
}

/// Result of one run.
pub struct RunOutcome {
    pub row: Row,
    pub resolved: Resolved,
    pub result: ContinuationResult,
    pub wall_time_s: f64,
}

/// Runs seed `seed` of a prepared config without writing anything.
pub fn run_seed(p: &Prepared, seed: u64) -> Result<RunOutcome, HarnessError> {
    let start = Instant::now();
    let inst = &p.instance;
    let mut resolved = resolve(p, None).map_err(|e| p.key_error(e))?;
    if resolved.lipschitz_source == LipschitzSource::Estimated {
        let l = estimate_lipschitz(&*inst.objective, &inst.region, resolved.plan.widths[0], LIPSCHITZ_SAMPLES, diagnostic_stream(seed))
            .map_err(|source| HarnessError::from_run(seed, source))?;
        resolved = resolve(p, Some(l)).map_err(|e| p.key_error(e))?;
    }
    let result = successive_smoothing(&*inst.objective, &inst.region, &inst.start, &resolved.plan, seed)
        .map_err(|source| HarnessError::from_run(seed, source))?;
    let last = result.stages.last().expect("plans have a stage");
    let weighted = last.record.weighted_average_value.expect("stages evaluate their average");
    let wall_time_s = start.elapsed().as_secs_f64();
    let o = &p.config.optimizer;
    let row = Row {
        problem: inst.name.clone(),
        n: inst.n,
        seed,
        stages: resolved.plan.stages(),
        smoothing_iterations: o.iterations,
        total_iterations: o.iterations * resolved.plan.stages(),
        evaluations: result.evaluations + resolved.diagnostic_evaluations,
        best: inst.natural(result.best_value),
        ideal: inst.ideal,
        weighted_average_value: inst.natural(weighted),
        diagnostic_evaluations: resolved.diagnostic_evaluations,
        wall_time_s: p.config.run.wall_time.then_some(wall_time_s),
    };
    Ok(RunOutcome { row, resolved, result, wall_time_s })
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| io_error(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

/// File name of the record of run `seed`.
pub fn record_name(inst: &Instance, seed: u64) -> String {
    format!("{}-n{}-seed{seed}.json", inst.name, inst.n)
}

fn best_decision(inst: &Instance, point: &[f64]) -> Vec<f64> {
    if inst.name == "polygon" {
        let m = inst.n - 1;
        let mut z = vec![0.0];
        z.extend_from_slice(&point[..m]);
        z.push(0.0);
        z.extend_from_slice(&point[m..]);
        z
    } else {
        point.to_vec()
    }
}

fn write_record(p: &Prepared, out: &RunOutcome) -> Result<(), HarnessError> {
    let doc = RunDocument {
        format: RECORD_FORMAT,
        config: &p.config,
        config_source: &p.source,
        seed: out.row.seed,
        resolved: &out.resolved,
        row: &out.row,
        best_decision: best_decision(&p.instance, &out.result.best_point),
        result: &out.result,
        wall_time_s: out.wall_time_s,
    };
    let path = p.output.join(RUNS_DIR).join(record_name(&p.instance, out.row.seed));
    let text = serde_json::to_string_pretty(&doc).map_err(|e| io_error(&path, e))?;
    write_atomic(&path, text.as_bytes())
}

/// Summary table as RFC-4180 CSV.
pub fn summary_csv(rows: &[Row]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Everything a finished `run` produced.
pub struct RunSummary {
    pub rows: Vec<Row>,
    pub summary: PathBuf,
    pub records: Vec<PathBuf>,
}

/// Runs every seed on a worker pool and writes the summary and the records.
pub fn execute(p: &Prepared, threads: Option<usize>) -> Result<RunSummary, HarnessError> {
    let runs_dir = p.output.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir).map_err(|e| io_error(&runs_dir, e))?;
    let threads = worker_threads(threads.or(p.config.run.threads));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Io { path: p.output.clone(), message: e.to_string() })?;
    let outcomes: Vec<Result<Row, HarnessError>> = pool.install(|| {
        p.seeds
            .par_iter()
            .map(|&seed| {
                let out = run_seed(p, seed)?;
                write_record(p, &out)?;
                Ok(out.row)
            })
            .collect()
    });
    // single writer, in seed-list order
    let rows = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = p.output.join(SUMMARY_FILE);
    let bytes = summary_csv(&rows).map_err(|e| io_error(&summary, e))?;
    write_atomic(&summary, &bytes)?;
    let records = p.seeds.iter().map(|&s| runs_dir.join(record_name(&p.instance, s))).collect();
    Ok(RunSummary { rows, summary, records })
}
