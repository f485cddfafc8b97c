//! Parallel replications on a rayon pool.
//!
//! Each replication owns its seed-derived streams, and results are collected
//! in replication order, so the output matches the serial harness exactly.

use std::time::Instant;

use pricelab_core::harness::{run_replication, summarize, Market, RegretTrace, RunSummary};
use pricelab_core::policies::PolicySpec;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::CliError;

pub const THREADS_ENV: &str = "PRICELAB_THREADS";

/// Worker count: an explicit request wins, then `PRICELAB_THREADS`, then
/// all available cores.
pub fn thread_count(requested: usize) -> Result<usize, CliError> {
    if requested > 0 {
        return Ok(requested);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        _ => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn pool(threads: usize) -> Result<ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))
}

/// Result of `reps` replications of one policy at one horizon.
pub struct PolicyRun {
    pub summary: RunSummary,
    pub traces: Vec<RegretTrace>,
    pub seconds: f64,
}

pub fn run_policy(
    pool: &ThreadPool,
    market: &Market,
    policy: &PolicySpec,
    reps: u64,
    base_seed: u64,
    record: bool,
) -> Result<PolicyRun, CliError> {
    if reps == 0 {
        return Err(CliError::Config("reps must be at least 1".into()));
    }
    // Build once up front so configuration errors surface before any work.
    market.build_policy(policy)?;
    let start = Instant::now();
    let traces = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| run_replication(market, policy, base_seed, r, record))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let seconds = start.elapsed().as_secs_f64();
    let summary = summarize(policy, market.spec.horizon, &traces)?;
    Ok(PolicyRun {
        summary,
        traces,
        seconds,
    })
}
