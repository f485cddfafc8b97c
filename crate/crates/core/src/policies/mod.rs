//! Pricing policies.
//!
//! Every policy sees the covariate before pricing and afterwards learns only
//! whether the customer bought; valuations and residuals never reach it. The
//! [`Feedback`] type carries exactly the observable fields.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::{Rng, RngCore};

use crate::estimator::BallConstraints;
use crate::grid::{build_partition, CellGrid, Interval};
use crate::math::{exp, ln, sqrt};
use crate::model::{oracle_price, product_range, AssumptionConstants, EnvironmentSpec};
use crate::{Error, Result};

mod decoupled;
mod deepc;
mod rounds;

pub use decoupled::{DecoupledDeepC, Phase, SparseDeepC, ZCellBandit};
pub use deepc::DeepC;
pub use rounds::{DeepCRounds, RoundSnapshot};

/// What a policy learns after posting a price.
#[derive(Debug, Clone, Copy)]
pub struct Feedback<'a> {
    pub covariate: &'a [f64],
    pub price: f64,
    pub sale: bool,
}

/// Common contract of all pricing policies.
pub trait PricingPolicy {
    fn name(&self) -> &'static str;

    /// Hyperparameters as `(name, value)` pairs, for output records.
    fn hyperparameters(&self) -> Vec<(&'static str, f64)>;

    /// Price for the arriving customer. `rng` is the policy's own stream.
    fn next_price(&mut self, covariate: &[f64], rng: &mut dyn RngCore) -> f64;

    /// Observe the outcome of the price returned by the last `next_price`.
    fn update(&mut self, feedback: Feedback<'_>);

    /// True until the first `update`.
    fn is_fresh(&self) -> bool;

    /// Rounds closed by the round-length cap rather than full coverage.
    fn capped_rounds(&self) -> u64 {
        0
    }
}

/// Check count and reward sum of one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellStats {
    pub checks: u64,
    pub reward: f64,
}

impl CellStats {
    pub fn record(&mut self, reward: f64) {
        self.checks += 1;
        self.reward += reward;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.checks > 0).then(|| self.reward / self.checks as f64)
    }

    /// `(upper, lower)` confidence bounds with radius `sqrt(gamma / T)`;
    /// unbounded before the first check.
    pub fn bounds(&self, gamma: f64) -> (f64, f64) {
        match self.mean() {
            Some(m) => {
                let r = sqrt(gamma / self.checks as f64);
                (m + r, m - r)
            }
            None => (f64::INFINITY, f64::NEG_INFINITY),
        }
    }
}

/// Confidence scale that makes the regret guarantee of the round-based
/// policy hold: `max(10 alpha2^2, 4 kappa2^2 / log n, kappa1^-2 / log n)`.
pub fn compute_gamma(constants: &AssumptionConstants, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("compute_gamma needs n >= 2".into()));
    }
    Ok(gamma_for_log(constants, ln(n as f64)))
}

pub(crate) fn gamma_for_log(constants: &AssumptionConstants, log_n: f64) -> f64 {
    let a = 10.0 * constants.alpha2 * constants.alpha2;
    let b = 4.0 * constants.kappa2 * constants.kappa2 / log_n;
    let c = 1.0 / (constants.kappa1 * constants.kappa1 * log_n);
    a.max(b).max(c)
}

/// Clairvoyant policy: prices at `z* exp(theta0 . x)`.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    z_star: f64,
    theta0: Vec<f64>,
    fresh: bool,
}

impl OraclePolicy {
    pub fn new(z_star: f64, theta0: Vec<f64>) -> Self {
        OraclePolicy {
            z_star,
            theta0,
            fresh: true,
        }
    }
}

impl PricingPolicy for OraclePolicy {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        alloc::vec![("z_star", self.z_star)]
    }

    fn next_price(&mut self, covariate: &[f64], _rng: &mut dyn RngCore) -> f64 {
        oracle_price(self.z_star, &self.theta0, covariate)
    }

    fn update(&mut self, _feedback: Feedback<'_>) {
        self.fresh = false;
    }

    fn is_fresh(&self) -> bool {
        self.fresh
    }
}

/// Baseline that never learns: a uniform price over every price attainable
/// by some `(z, theta)` in the known supports.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    z_support: Interval,
    theta_box: Vec<Interval>,
    fresh: bool,
}

impl UniformRandom {
    pub fn new(z_support: Interval, theta_box: Vec<Interval>) -> Self {
        UniformRandom {
            z_support,
            theta_box,
            fresh: true,
        }
    }

    pub fn price_range(&self, covariate: &[f64]) -> Interval {
        let (mut lo, mut hi) = (0.0, 0.0);
        for (t, &x) in self.theta_box.iter().zip(covariate) {
            let (a, b) = product_range(*t, Interval::new(x, x));
            lo += a;
            hi += b;
        }
        Interval::new(self.z_support.lo * exp(lo), self.z_support.hi * exp(hi))
    }
}

impl PricingPolicy for UniformRandom {
    fn name(&self) -> &'static str {
        "uniform-random"
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }

    fn next_price(&mut self, covariate: &[f64], rng: &mut dyn RngCore) -> f64 {
        let range = self.price_range(covariate);
        let u: f64 = rng.sample(Open01);
        range.lo + range.len() * u
    }

    fn update(&mut self, _feedback: Feedback<'_>) {
        self.fresh = false;
    }

    fn is_fresh(&self) -> bool {
        self.fresh
    }
}

/// Posts the same price to everyone.
#[derive(Debug, Clone)]
pub struct FixedPrice {
    price: f64,
    fresh: bool,
}

impl FixedPrice {
    pub fn new(price: f64) -> Result<Self> {
        if !(price > 0.0) {
            return Err(Error::NonPositivePrice(price));
        }
        Ok(FixedPrice { price, fresh: true })
    }
}

impl PricingPolicy for FixedPrice {
    fn name(&self) -> &'static str {
        "fixed-price"
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        alloc::vec![("price", self.price)]
    }

    fn next_price(&mut self, _covariate: &[f64], _rng: &mut dyn RngCore) -> f64 {
        self.price
    }

    fn update(&mut self, _feedback: Feedback<'_>) {
        self.fresh = false;
    }

    fn is_fresh(&self) -> bool {
        self.fresh
    }
}

/// Fully resolved policy description; [`PolicySpec::build`] creates a fresh
/// instance for one episode.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Oracle,
    UniformRandom,
    FixedPrice {
        price: f64,
    },
    DeepC {
        gamma: f64,
    },
    DeepCRounds {
        gamma: f64,
        /// Maximum steps per round; `None` means the horizon.
        round_cap: Option<usize>,
    },
    Decoupled {
        gamma: f64,
        balls: BallConstraints,
        explore: Interval,
    },
    Sparse {
        gamma: f64,
        balls: BallConstraints,
    },
}

/// Boxed policy that can move to a worker thread.
pub type BoxedPolicy = Box<dyn PricingPolicy + Send>;

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Oracle => "oracle",
            PolicySpec::UniformRandom => "uniform-random",
            PolicySpec::FixedPrice { .. } => "fixed-price",
            PolicySpec::DeepC { .. } => "deep-c",
            PolicySpec::DeepCRounds { .. } => "deep-c-rounds",
            PolicySpec::Decoupled { .. } => "decoupled-deep-c",
            PolicySpec::Sparse { .. } => "sparse-deep-c",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            PolicySpec::DeepC { gamma }
            | PolicySpec::DeepCRounds { gamma, .. }
            | PolicySpec::Decoupled { gamma, .. }
            | PolicySpec::Sparse { gamma, .. } => Some(*gamma),
            _ => None,
        }
    }

    /// A fresh policy for an episode of `spec.horizon` steps.
    pub fn build(&self, spec: &EnvironmentSpec, z_star: f64) -> Result<BoxedPolicy> {
        let n = spec.horizon;
        if let Some(g) = self.gamma() {
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(match self {
            PolicySpec::Oracle => Box::new(OraclePolicy::new(z_star, spec.theta0.clone())),
            PolicySpec::UniformRandom => {
                Box::new(UniformRandom::new(spec.z_support, spec.theta_box.clone()))
            }
            PolicySpec::FixedPrice { price } => Box::new(FixedPrice::new(*price)?),
            PolicySpec::DeepC { gamma } => Box::new(DeepC::new(
                CellGrid::new(spec.z_support, &spec.theta_box, n)?,
                *gamma,
            )),
            PolicySpec::DeepCRounds { gamma, round_cap } => Box::new(DeepCRounds::new(
                CellGrid::new(spec.z_support, &spec.theta_box, n)?,
                *gamma,
                n,
                round_cap.unwrap_or(n),
            )?),
            PolicySpec::Decoupled {
                gamma,
                balls,
                explore,
            } => Box::new(DecoupledDeepC::new(
                build_partition(spec.z_support, n)?,
                n,
                *gamma,
                *balls,
                *explore,
                spec.d,
            )?),
            PolicySpec::Sparse { gamma, balls } => Box::new(SparseDeepC::new(
                build_partition(spec.z_support, n)?,
                *gamma,
                *balls,
                spec.d,
            )),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::E;

    #[test]
    fn gamma_examples() {
        let c = AssumptionConstants::new(0.1, E, 1.0, 1.0).unwrap();
        let g = compute_gamma(&c, 10_000).unwrap();
        assert!((g - 10.0 * E * E).abs() < 1e-12);
        assert!((g - 73.891).abs() < 1e-3);

        let c = AssumptionConstants::new(0.1, E, 1.0, 1e3).unwrap();
        let g = compute_gamma(&c, 10_000).unwrap();
        assert!((g - 4e6 / ln(1e4)).abs() < 1e-6);

        // 10 a^2 = 4 k2^2 / log n = 1 / (k1^2 log n) = 40 at log n = 1
        let n = 3usize;
        let log_n = ln(n as f64);
        let target = 40.0;
        let alpha2 = sqrt(target / 10.0);
        let kappa2 = sqrt(target * log_n / 4.0);
        let kappa1 = sqrt(1.0 / (target * log_n));
        let c = AssumptionConstants::new(0.1, alpha2, kappa1, kappa2).unwrap();
        assert!((compute_gamma(&c, n).unwrap() - target).abs() < 1e-9);
        assert!(compute_gamma(&c, 1).is_err());
    }

    #[test]
    fn cell_stats_bounds() {
        let mut s = CellStats::default();
        assert_eq!(s.bounds(1.0), (f64::INFINITY, f64::NEG_INFINITY));
        s.record(0.0);
        s.record(1.0);
        let (u, l) = s.bounds(2.0);
        assert!((u - 1.5).abs() < 1e-15 && (l + 0.5).abs() < 1e-15);
        assert!((u - 0.5 - (0.5 - l)).abs() < 1e-15);
    }

    #[test]
    fn uniform_baseline_range() {
        let mut p = UniformRandom::new(Interval::new(0.0, 1.0), alloc::vec![Interval::new(0.0, 1.0); 2]);
        let r = p.price_range(&[0.5, -0.5]);
        assert!((r.lo - 0.0).abs() < 1e-15 && (r.hi - exp(0.5)).abs() < 1e-12);
        let mut rng = crate::rng::seeded(1);
        for _ in 0..100 {
            let price = p.next_price(&[0.5, -0.5], &mut rng);
            assert!(price > 0.0 && price <= r.hi);
        }
    }
}
