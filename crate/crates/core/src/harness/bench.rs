//! Polygon benchmark presets.

use std::path::Path;

use super::run::{execute, prepare, RunSummary};
use super::HarnessError;

/// Reference evaluation counts for the polygon, by vertex count.
pub const REFERENCE_BUDGETS: [(usize, u64); 7] =
    [(3, 4040), (4, 11256), (20, 132_264), (50, 620_620), (100, 2_465_232), (200, 3_521_760), (500, 15_627_906)];

/// Budgets small enough for a desk run.
pub fn desk_budget(n: usize) -> u64 {
    match n {
        3 => 100_000,
        4 => 200_000,
        _ => 150_000,
    }
}

pub const BENCH_STAGES: usize = 8;
pub const BENCH_BATCH: usize = 2;
/// First smoothing width of the presets.
pub const BENCH_H0: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub n: usize,
    pub full_budget: bool,
    pub runs: usize,
    pub master_seed: u64,
}

/// The run configuration a benchmark executes.
pub fn polygon_config(opts: &BenchOptions, output: &Path) -> Result<String, HarnessError> {
    let budget = if opts.full_budget {
        REFERENCE_BUDGETS.iter().find(|(n, _)| *n == opts.n).map(|(_, b)| *b).ok_or_else(|| {
            HarnessError::InvalidParameters(format!("no reference budget for n = {}", opts.n))
        })?
    } else {
        desk_budget(opts.n)
    };
    if opts.runs == 0 {
        return Err(HarnessError::InvalidParameters("at least one run is needed".into()));
    }
    let per_stage = budget / BENCH_STAGES as u64;
    let iterations = per_stage.saturating_sub(1) / (2 * BENCH_BATCH as u64);
    if iterations == 0 {
        return Err(HarnessError::InvalidParameters(format!("budget {budget} is too small for {BENCH_STAGES} stages")));
    }
    Ok(format!(
        "[problem]\nname = \"polygon\"\nn = {n}\n\n\
         [optimizer]\nkernel = \"ball\"\nbatch = {BENCH_BATCH}\niterations = {iterations}\nstep = {{ rule = \"t2-decaying\" }}\n\n\
         [plan]\nh0 = {BENCH_H0}\nstages = {BENCH_STAGES}\n\n\
         [run]\nmaster_seed = {seed}\nruns = {runs}\nbudget = {budget}\noutput = {output:?}\n",
        n = opts.n,
        seed = opts.master_seed,
        runs = opts.runs,
        output = output.display().to_string(),
    ))
}

pub fn bench_polygon(opts: &BenchOptions, output: &Path, threads: Option<usize>) -> Result<RunSummary, HarnessError> {
    let source = polygon_config(opts, output)?;
    let p = prepare(source, Path::new("<bench>"), Path::new("."))?;
    execute(&p, threads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_fit_their_budgets() {
        for (n, budget) in REFERENCE_BUDGETS {
            for full in [false, true] {
                let opts = BenchOptions { n, full_budget: full, runs: 2, master_seed: 0 };
                let src = polygon_config(&opts, Path::new("out")).unwrap();
                let p = prepare(src, Path::new("<bench>"), Path::new(".")).unwrap();
                let cap = if full { budget } else { desk_budget(n) };
                assert_eq!(p.config.run.budget, Some(cap));
            }
        }
        let opts = BenchOptions { n: 7, full_budget: true, runs: 1, master_seed: 0 };
        assert_eq!(polygon_config(&opts, Path::new("o")).unwrap_err().exit_code(), 2);
    }
}
