//! The `run`, `sweep` and `bound` commands.

use std::path::{Path, PathBuf};

use pricelab_core::harness::{theorem_bound, Market, RegretTrace, RunSummary};
use pricelab_core::policies::compute_gamma;

use crate::config::{ExperimentConfig, SweepParam};
use crate::output::{self, BoundRow, SweepRow, TimingRow};
use crate::runner::{pool, run_policy, thread_count};
use crate::CliError;

/// Command-line overrides of the `[run]` block.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub traces: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            cfg.run.output_dir = out.clone();
        }
        if let Some(r) = self.reps {
            cfg.run.reps = r;
        }
        if let Some(s) = self.seed {
            cfg.run.base_seed = s;
        }
        if let Some(p) = self.parallel {
            cfg.run.parallelism = p;
        }
        cfg.run.traces |= self.traces;
    }
}

/// Results of one policy at one horizon.
pub struct Outcome {
    pub summary: RunSummary,
    pub traces: Vec<RegretTrace>,
    pub seconds: f64,
}

/// Run every policy at every horizon, without writing files. Outcomes are
/// ordered by horizon, then by policy block.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<Outcome>, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let threads = thread_count(cfg.run.parallelism)?;
    let pool = pool(threads)?;
    let mut out = Vec::new();
    for &n in &cfg.run.horizons {
        let spec = cfg.environment_spec(n).map_err(CliError::Config)?;
        let policies = cfg.policy_specs(&spec).map_err(CliError::Config)?;
        let market = Market::new(spec)?;
        for policy in &policies {
            let run = run_policy(
                &pool,
                &market,
                policy,
                cfg.run.reps,
                cfg.run.base_seed,
                cfg.run.traces,
            )?;
            let mut summary = run.summary;
            if cfg.run.record_wall_clock {
                summary.wall_clock_s = run.seconds;
            }
            out.push(Outcome {
                summary,
                traces: run.traces,
                seconds: run.seconds,
            });
        }
    }
    Ok(out)
}

fn write_outcomes(cfg: &ExperimentConfig, dir: &Path, outcomes: &[Outcome]) -> Result<(), CliError> {
    let summaries: Vec<RunSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    output::write_summary(&dir.join("summary.csv"), &summaries)?;
    let threads = thread_count(cfg.run.parallelism)?;
    let timing: Vec<TimingRow> = outcomes
        .iter()
        .map(|o| TimingRow {
            policy: o.summary.policy,
            n: o.summary.n,
            reps: o.summary.reps,
            threads,
            seconds: o.seconds,
        })
        .collect();
    output::write_timing(&dir.join("timing.csv"), &timing)?;
    if cfg.run.traces {
        let multi = cfg.run.horizons.len() > 1;
        for o in outcomes {
            let sub = if multi {
                dir.join(format!("n{}", o.summary.n))
            } else {
                dir.to_path_buf()
            };
            for t in &o.traces {
                let name = format!("trace_{}_{}.csv", o.summary.policy, t.replication);
                output::write_trace(&sub.join(name), t)?;
            }
        }
    }
    Ok(())
}

fn print_summaries(outcomes: &[Outcome]) {
    println!(
        "{:<18} {:>7} {:>10} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "policy", "n", "gamma", "reps", "mean_regret", "std_regret", "p95", "oracle"
    );
    for o in outcomes {
        let s = &o.summary;
        let gamma = s.gamma.map(|g| format!("{g:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<18} {:>7} {:>10} {:>6} {:>12.3} {:>12.3} {:>12.3} {:>12.3}",
            s.policy, s.n, gamma, s.reps, s.mean_regret, s.std_regret, s.p95, s.mean_oracle_reward
        );
    }
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<Outcome>, CliError> {
    let outcomes = execute(cfg)?;
    write_outcomes(cfg, &cfg.run.output_dir, &outcomes)?;
    print_summaries(&outcomes);
    Ok(outcomes)
}

fn format_value(param: SweepParam, v: f64) -> String {
    if param.is_integer() {
        format!("{}", v as u64)
    } else {
        format!("{v}")
    }
}

/// One run per value of `param`; each run goes to `<out>/<param>=<value>/`
/// and all rows are collected into `<out>/sweep.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, param: &str, values: &[f64]) -> Result<(), CliError> {
    let param = SweepParam::parse(param).ok_or_else(|| {
        let known: Vec<&str> = SweepParam::ALL.iter().map(|(n, _)| *n).collect();
        CliError::Config(format!(
            "unknown sweep parameter `{param}` (expected one of {})",
            known.join(", ")
        ))
    })?;
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    for &v in values {
        let ok = v.is_finite()
            && v > 0.0
            && (!param.is_integer() || v.fract() == 0.0);
        if !ok {
            return Err(CliError::Config(format!(
                "invalid value {v} for `{}`",
                param.as_str()
            )));
        }
    }
    let base = &cfg.run.output_dir;
    let mut results: Vec<(String, Vec<Outcome>)> = Vec::new();
    for &v in values {
        let mut c = cfg.clone();
        let mut any = false;
        for p in &mut c.policies {
            any |= p.set_param(param, v);
        }
        if !any {
            return Err(CliError::Config(format!(
                "no configured policy takes `{}`",
                param.as_str()
            )));
        }
        let label = format_value(param, v);
        c.run.output_dir = base.join(format!("{}={label}", param.as_str()));
        let outcomes = execute(&c)?;
        write_outcomes(&c, &c.run.output_dir, &outcomes)?;
        println!("{} = {label}", param.as_str());
        print_summaries(&outcomes);
        results.push((label, outcomes));
    }
    let rows: Vec<SweepRow<'_>> = results
        .iter()
        .flat_map(|(label, outcomes)| {
            outcomes.iter().map(move |o| SweepRow {
                parameter: param.as_str(),
                value: label.clone(),
                summary: &o.summary,
            })
        })
        .collect();
    output::write_sweep(&base.join("sweep.csv"), &rows)
}

/// Regret bound with the prescribed confidence scale, per horizon.
pub fn cmd_bound(cfg: &ExperimentConfig) -> Result<Vec<BoundRow>, CliError> {
    let mut rows = Vec::new();
    for &n in &cfg.run.horizons {
        let spec = cfg.environment_spec(n).map_err(CliError::Config)?;
        let c = cfg
            .assumption_constants(&spec, n)
            .map_err(CliError::Config)?;
        let gamma = compute_gamma(&c, n)?;
        let bound = theorem_bound(&c, spec.d, n as f64)?;
        rows.push(BoundRow {
            n,
            d: spec.d,
            alpha1: c.alpha1,
            alpha2: c.alpha2,
            kappa1: c.kappa1,
            kappa2: c.kappa2,
            gamma,
            bound,
        });
    }
    output::write_bound(&cfg.run.output_dir.join("bound.csv"), &rows)?;
    println!("{:>8} {:>14} {:>16}", "n", "gamma", "bound");
    for r in &rows {
        println!("{:>8} {:>14.6} {:>16.6e}", r.n, r.gamma, r.bound);
    }
    Ok(rows)
}
