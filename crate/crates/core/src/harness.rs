//! Coupled regret episodes, replications and summaries.
//!
//! An episode draws one arrival stream and offers every customer both the
//! oracle price and the policy price; regret is the pathwise difference of the
//! two cumulative revenues. Replication `r` draws arrivals and policy
//! randomness from streams keyed by `(base_seed, r)`, so replications can run
//! in any order or in parallel with identical results.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{ln, powf, sqrt};
use crate::model::{oracle_price, oracle_z_star, sample_arrival_into, transact, AssumptionConstants, EnvironmentSpec};
use crate::policies::{gamma_for_log, BoxedPolicy, Feedback, PolicySpec, PricingPolicy};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// A validated environment together with its oracle residual price.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub spec: EnvironmentSpec,
    pub z_star: f64,
}

impl Market {
    pub fn new(spec: EnvironmentSpec) -> Result<Self> {
        spec.validate()?;
        let z_star = oracle_z_star(&spec.noise);
        if !(z_star > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "oracle residual price must be positive, got {z_star}"
            )));
        }
        Ok(Market { spec, z_star })
    }

    /// Same market with a different horizon.
    pub fn with_horizon(&self, n: usize) -> Self {
        let mut m = self.clone();
        m.spec.horizon = n;
        m
    }

    pub fn build_policy(&self, policy: &PolicySpec) -> Result<BoxedPolicy> {
        policy.build(&self.spec, self.z_star)
    }
}

/// State after step `t` of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub price: f64,
    pub sale: bool,
    pub oracle_price: f64,
    pub oracle_sale: bool,
    pub oracle_cumulative: f64,
    pub policy_cumulative: f64,
}

impl TraceStep {
    pub fn regret(&self) -> f64 {
        self.oracle_cumulative - self.policy_cumulative
    }
}

/// Outcome of one episode. `steps` is empty unless recording was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub replication: u64,
    pub oracle_reward: f64,
    pub policy_reward: f64,
    pub capped_rounds: u64,
    pub steps: Vec<TraceStep>,
}

impl RegretTrace {
    pub fn regret(&self) -> f64 {
        self.oracle_reward - self.policy_reward
    }
}

/// Run one episode of `market.spec.horizon` steps.
///
/// `arrivals` drives covariates and residuals, `policy_rng` is handed to the
/// policy. The policy must be fresh.
pub fn run_episode(
    market: &Market,
    policy: &mut dyn PricingPolicy,
    arrivals: &mut dyn rand::RngCore,
    policy_rng: &mut dyn rand::RngCore,
    record: bool,
) -> Result<RegretTrace> {
    if !policy.is_fresh() {
        return Err(Error::PolicyReused);
    }
    let spec = &market.spec;
    let n = spec.horizon;
    let mut x = vec![0.0; spec.d];
    let mut steps = Vec::with_capacity(if record { n } else { 0 });
    let (mut oracle_total, mut policy_total) = (0.0, 0.0);
    for _ in 0..n {
        let z = sample_arrival_into(spec, &mut x, arrivals);
        let p_star = oracle_price(market.z_star, &spec.theta0, &x);
        let price = policy.next_price(&x, policy_rng);
        let oracle = transact(&x, z, &spec.theta0, p_star)?;
        let outcome = transact(&x, z, &spec.theta0, price)?;
        oracle_total += oracle.revenue;
        policy_total += outcome.revenue;
        policy.update(Feedback {
            covariate: &x,
            price,
            sale: outcome.sale,
        });
        if record {
            steps.push(TraceStep {
                price,
                sale: outcome.sale,
                oracle_price: p_star,
                oracle_sale: oracle.sale,
                oracle_cumulative: oracle_total,
                policy_cumulative: policy_total,
            });
        }
    }
    Ok(RegretTrace {
        replication: 0,
        oracle_reward: oracle_total,
        policy_reward: policy_total,
        capped_rounds: policy.capped_rounds(),
        steps,
    })
}

/// Replication `replication` of `policy` on its seed-derived streams.
pub fn run_replication(
    market: &Market,
    policy: &PolicySpec,
    base_seed: u64,
    replication: u64,
    record: bool,
) -> Result<RegretTrace> {
    let mut p = market.build_policy(policy)?;
    let mut arrivals = stream(base_seed, replication, Purpose::Arrivals);
    let mut rng = stream(base_seed, replication, Purpose::Policy);
    let mut trace = run_episode(market, p.as_mut(), &mut arrivals, &mut rng, record)?;
    trace.replication = replication;
    Ok(trace)
}

/// Serial replications `0..reps`.
pub fn run_replications(
    market: &Market,
    policy: &PolicySpec,
    reps: u64,
    base_seed: u64,
    record: bool,
) -> Result<(RunSummary, Vec<RegretTrace>)> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let traces = (0..reps)
        .map(|r| run_replication(market, policy, base_seed, r, record))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(policy, market.spec.horizon, &traces)?;
    Ok((summary, traces))
}

/// Final-regret statistics of one policy at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policy: &'static str,
    pub n: usize,
    pub gamma: Option<f64>,
    pub reps: u64,
    pub mean_regret: f64,
    /// Sample standard deviation (zero for a single replication).
    pub std_regret: f64,
    pub p50: f64,
    pub p95: f64,
    pub p98: f64,
    pub mean_oracle_reward: f64,
    /// Total over replications.
    pub capped_rounds: u64,
    pub wall_clock_s: f64,
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank
/// `ceil(level / 100 * len)`.
pub fn nearest_rank(sorted: &[f64], level: u32) -> f64 {
    let len = sorted.len() as u64;
    let rank = (level as u64 * len).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

/// Aggregate traces in replication order; the result does not depend on the
/// order in which they were produced.
pub fn summarize(policy: &PolicySpec, n: usize, traces: &[RegretTrace]) -> Result<RunSummary> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces to summarize".into()));
    }
    let mut ordered: Vec<&RegretTrace> = traces.iter().collect();
    ordered.sort_by_key(|t| t.replication);
    let m = ordered.len() as f64;
    let regrets: Vec<f64> = ordered.iter().map(|t| t.regret()).collect();
    let mean = regrets.iter().sum::<f64>() / m;
    let var = if ordered.len() > 1 {
        regrets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let mut sorted = regrets.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(RunSummary {
        policy: policy.name(),
        n,
        gamma: policy.gamma(),
        reps: ordered.len() as u64,
        mean_regret: mean,
        std_regret: sqrt(var),
        p50: nearest_rank(&sorted, 50),
        p95: nearest_rank(&sorted, 95),
        p98: nearest_rank(&sorted, 98),
        mean_oracle_reward: ordered.iter().map(|t| t.oracle_reward).sum::<f64>() / m,
        capped_rounds: ordered.iter().map(|t| t.capped_rounds).sum(),
        wall_clock_s: 0.0,
    })
}

/// Worst-case regret guarantee of the round-based policy at horizon `n`
/// (real-valued so that `log n = 1` can be evaluated), with `gamma` at its
/// prescribed value.
pub fn theorem_bound(constants: &AssumptionConstants, d: usize, n: f64) -> Result<f64> {
    if !(n >= 2.0) || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "bound needs n >= 2 and d >= 1, got n = {n}, d = {d}"
        )));
    }
    let log_n = ln(n);
    let gamma = gamma_for_log(constants, log_n);
    let AssumptionConstants {
        alpha1,
        alpha2,
        kappa1,
        kappa2,
    } = *constants;
    let lead = 16000.0 * alpha2 * alpha2 / (alpha1 * alpha1 * kappa1 * kappa1)
        * powf(kappa2, 1.5)
        * powf(gamma, 0.75)
        * powf(d as f64, 2.75)
        * sqrt(n)
        * powf(log_n, 1.75);
    Ok(lead + 5.0 * alpha2)
}

/// Least-squares fit of `log(mean regret)` against `log n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Horizons left out because their mean regret was not positive.
    pub excluded: Vec<usize>,
}

/// One horizon of a scaling experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub n: usize,
    pub mean_regret: f64,
    pub reps: u64,
}

impl From<&RunSummary> for ScalingPoint {
    fn from(s: &RunSummary) -> Self {
        ScalingPoint {
            n: s.n,
            mean_regret: s.mean_regret,
            reps: s.reps,
        }
    }
}

pub const SCALING_MIN_HORIZONS: usize = 3;
pub const SCALING_MIN_REPS: u64 = 50;

pub fn scaling_fit(points: &[ScalingPoint]) -> Result<ScalingFit> {
    if points.len() < SCALING_MIN_HORIZONS {
        return Err(Error::InvalidArgument(format!(
            "scaling fit needs at least {SCALING_MIN_HORIZONS} horizons, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| p.reps < SCALING_MIN_REPS) {
        return Err(Error::InvalidArgument(format!(
            "horizon {} has {} replications, need {SCALING_MIN_REPS}",
            p.n, p.reps
        )));
    }
    let (kept, dropped): (Vec<&ScalingPoint>, Vec<&ScalingPoint>) =
        points.iter().partition(|p| p.mean_regret > 0.0);
    if kept.len() < 2 {
        return Err(Error::InvalidArgument(
            "fewer than two horizons with positive mean regret".into(),
        ));
    }
    let xs: Vec<f64> = kept.iter().map(|p| ln(p.n as f64)).collect();
    let ys: Vec<f64> = kept.iter().map(|p| ln(p.mean_regret)).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("horizons must differ".into()));
    }
    let exponent = sxy / sxx;
    Ok(ScalingFit {
        exponent,
        intercept: my - exponent * mx,
        excluded: dropped.iter().map(|p| p.n).collect(),
    })
}
