use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::{Rng, RngCore};

use super::{CellStats, Feedback, PricingPolicy};
use crate::estimator::{solve, BallConstraints, ScoreVector};
use crate::grid::{checks, normalize, sample_uniform, AxisPartition, Interval};
use crate::math::{dot, exp};
use crate::{Error, Result};

/// One-dimensional arm elimination over residual cells, with prices
/// `z * scale` for a caller-supplied covariate scale `exp(theta_hat . x)`.
#[derive(Debug, Clone)]
pub struct ZCellBandit {
    axis: AxisPartition,
    gamma: f64,
    active: Vec<usize>,
    stats: Vec<CellStats>,
    union: Vec<Interval>,
}

impl ZCellBandit {
    pub fn new(axis: AxisPartition, gamma: f64) -> Self {
        ZCellBandit {
            active: (0..axis.k).collect(),
            stats: vec![CellStats::default(); axis.k],
            union: Vec::new(),
            axis,
            gamma,
        }
    }

    pub fn axis(&self) -> &AxisPartition {
        &self.axis
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn stats(&self, i: usize) -> CellStats {
        self.stats[i]
    }

    /// Restrict the active cells; `cells` must keep at least one active cell.
    pub fn retain_cells(&mut self, cells: &[usize]) {
        self.active.retain(|c| cells.contains(c));
        assert!(!self.active.is_empty());
    }

    fn interval(&self, i: usize, scale: f64) -> Interval {
        let z = self.axis.cell(i);
        Interval::new(z.lo * scale, z.hi * scale)
    }

    pub fn next_price(&mut self, scale: f64, rng: &mut dyn RngCore) -> f64 {
        self.union.clear();
        for &i in &self.active {
            let z = self.axis.cell(i);
            self.union.push(Interval::new(z.lo * scale, z.hi * scale));
        }
        normalize(&mut self.union);
        match sample_uniform(&self.union, rng) {
            Ok(p) if p > 0.0 => p,
            _ => {
                let pick = self.active[rng.random_range(0..self.active.len())];
                self.axis.centroid(pick) * scale
            }
        }
    }

    pub fn update(&mut self, scale: f64, price: f64, sale: bool) {
        let reward = if sale { price } else { 0.0 };
        for idx in 0..self.active.len() {
            let i = self.active[idx];
            if checks(self.interval(i, scale), price) {
                self.stats[i].record(reward);
            }
        }
        let gamma = self.gamma;
        let best_lower = self
            .active
            .iter()
            .map(|&i| self.stats[i].bounds(gamma).1)
            .fold(f64::NEG_INFINITY, f64::max);
        let stats = &self.stats;
        self.active
            .retain(|&i| !(stats[i].bounds(gamma).0 < best_lower));
        debug_assert!(!self.active.is_empty());
    }
}

/// Smallest integer `m` with `m^3 >= n^2`, i.e. `ceil(n^(2/3))`.
pub(crate) fn exploration_length(n: usize) -> usize {
    let target = (n as u128) * (n as u128);
    let mut m = crate::math::ceil(crate::math::powf(n as f64, 2.0 / 3.0)) as u128;
    while m > 0 && (m - 1) * (m - 1) * (m - 1) >= target {
        m -= 1;
    }
    while m * m * m < target {
        m += 1;
    }
    m as usize
}

/// Current phase of [`DecoupledDeepC`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Exploit,
}

/// Explore-then-exploit: uniform prices for `ceil(n^(2/3))` steps, a single
/// one-bit estimate of the parameter, then residual-cell elimination with
/// prices `z exp(theta_hat . x)`.
#[derive(Debug, Clone)]
pub struct DecoupledDeepC {
    explore_steps: usize,
    explore: Interval,
    balls: BallConstraints,
    score: ScoreVector,
    theta_hat: Option<Vec<f64>>,
    bandit: ZCellBandit,
    t: usize,
}

impl DecoupledDeepC {
    pub fn new(
        z_axis: AxisPartition,
        n: usize,
        gamma: f64,
        balls: BallConstraints,
        explore: Interval,
        d: usize,
    ) -> Result<Self> {
        if !(explore.lo > 0.0 && explore.hi >= explore.lo) {
            return Err(Error::InvalidArgument(
                "exploration interval must be positive and ordered".into(),
            ));
        }
        Ok(DecoupledDeepC {
            explore_steps: exploration_length(n),
            explore,
            balls,
            score: ScoreVector::zeros(d),
            theta_hat: None,
            bandit: ZCellBandit::new(z_axis, gamma),
            t: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        if self.t < self.explore_steps {
            Phase::Explore
        } else {
            Phase::Exploit
        }
    }

    pub fn exploration_steps(&self) -> usize {
        self.explore_steps
    }

    pub fn estimate(&self) -> Option<&[f64]> {
        self.theta_hat.as_deref()
    }

    pub fn score(&self) -> &ScoreVector {
        &self.score
    }

    pub fn bandit(&self) -> &ZCellBandit {
        &self.bandit
    }

    pub fn bandit_mut(&mut self) -> &mut ZCellBandit {
        &mut self.bandit
    }

    /// Skip exploration with a given estimate (for controlled experiments).
    pub fn set_estimate(&mut self, theta_hat: Vec<f64>) {
        self.theta_hat = Some(theta_hat);
        self.t = self.t.max(self.explore_steps);
    }

    fn scale(&self, covariate: &[f64]) -> f64 {
        exp(dot(
            self.theta_hat.as_deref().expect("estimate available in exploit phase"),
            covariate,
        ))
    }
}

impl PricingPolicy for DecoupledDeepC {
    fn name(&self) -> &'static str {
        "decoupled-deep-c"
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gamma", self.bandit.gamma),
            ("rho1", self.balls.rho1),
            ("rho2", self.balls.rho2),
            ("explore_lo", self.explore.lo),
            ("explore_hi", self.explore.hi),
        ]
    }

    fn next_price(&mut self, covariate: &[f64], rng: &mut dyn RngCore) -> f64 {
        match self.phase() {
            Phase::Explore => {
                let u: f64 = rng.sample(Open01);
                self.explore.lo + self.explore.len() * u
            }
            Phase::Exploit => {
                let scale = self.scale(covariate);
                self.bandit.next_price(scale, rng)
            }
        }
    }

    fn update(&mut self, feedback: Feedback<'_>) {
        match self.phase() {
            Phase::Explore => {
                self.score.push(feedback.covariate, feedback.sale);
                self.t += 1;
                if self.t == self.explore_steps {
                    self.theta_hat = Some(solve(&self.score, self.balls));
                }
            }
            Phase::Exploit => {
                let scale = self.scale(feedback.covariate);
                self.bandit.update(scale, feedback.price, feedback.sale);
                self.t += 1;
            }
        }
    }

    fn is_fresh(&self) -> bool {
        self.t == 0 && self.theta_hat.is_none()
    }
}

/// Re-estimates the parameter before every step from all past outcomes and
/// runs residual-cell elimination on prices `z exp(theta_hat(t) . x)`.
#[derive(Debug, Clone)]
pub struct SparseDeepC {
    balls: BallConstraints,
    score: ScoreVector,
    theta_hat: Vec<f64>,
    stale: bool,
    bandit: ZCellBandit,
    steps: u64,
}

impl SparseDeepC {
    pub fn new(z_axis: AxisPartition, gamma: f64, balls: BallConstraints, d: usize) -> Self {
        SparseDeepC {
            balls,
            score: ScoreVector::zeros(d),
            theta_hat: vec![0.0; d],
            stale: true,
            bandit: ZCellBandit::new(z_axis, gamma),
            steps: 0,
        }
    }

    /// Estimate used for the current step.
    pub fn estimate(&mut self) -> &[f64] {
        self.refresh();
        &self.theta_hat
    }

    pub fn score(&self) -> &ScoreVector {
        &self.score
    }

    pub fn bandit(&self) -> &ZCellBandit {
        &self.bandit
    }

    fn refresh(&mut self) {
        if self.stale {
            self.theta_hat = solve(&self.score, self.balls);
            self.stale = false;
        }
    }
}

impl PricingPolicy for SparseDeepC {
    fn name(&self) -> &'static str {
        "sparse-deep-c"
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gamma", self.bandit.gamma),
            ("rho1", self.balls.rho1),
            ("rho2", self.balls.rho2),
        ]
    }

    fn next_price(&mut self, covariate: &[f64], rng: &mut dyn RngCore) -> f64 {
        self.refresh();
        let scale = exp(dot(&self.theta_hat, covariate));
        self.bandit.next_price(scale, rng)
    }

    fn update(&mut self, feedback: Feedback<'_>) {
        self.refresh();
        let scale = exp(dot(&self.theta_hat, feedback.covariate));
        self.bandit.update(scale, feedback.price, feedback.sale);
        self.score.push(feedback.covariate, feedback.sale);
        self.stale = true;
        self.steps += 1;
    }

    fn is_fresh(&self) -> bool {
        self.steps == 0
    }
}
