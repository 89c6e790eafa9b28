//! Command-line harness: run configurations, benchmark presets, validation
//! suites and result files.
//!
//! Runs across seeds execute on a worker pool whose size is capped by the
//! `SMOOTHOPT_THREADS` environment variable. Every run draws from its own
//! random substreams, so the summary table is identical for any worker count.

use std::path::PathBuf;

use thiserror::Error;

pub mod bench;
pub mod config;
pub mod registry;
pub mod run;
pub mod validate;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SMOOTHOPT_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}{}: {message}", origin.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Config { origin: PathBuf, line: Option<usize>, message: String },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("run with seed {seed}: {source}")]
    Evaluation {
        seed: u64,
        #[source]
        source: crate::Error,
    },

    #[error("run with seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: crate::Error,
    },

    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl HarnessError {
    pub(crate) fn from_run(seed: u64, source: crate::Error) -> Self {
        if source.is_evaluation() {
            HarnessError::Evaluation { seed, source }
        } else {
            HarnessError::Run { seed, source }
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for evaluation
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::InvalidParameters(_) => 2,
            HarnessError::Evaluation { .. } => 3,
            _ => 1,
        }
    }
}

/// Worker count: `requested` (or all cores), capped by `SMOOTHOPT_THREADS`.
pub fn worker_threads(requested: Option<usize>) -> usize {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|v| *v > 0);
    let want = requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.map_or(want, |c| want.min(c)).max(1)
}
