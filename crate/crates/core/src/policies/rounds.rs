use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{Feedback, PricingPolicy};
use crate::grid::{checks, normalize, sample_uniform, ActiveCellSet, CellGrid, Interval};
use crate::math::{exp, ln, sqrt};
use crate::{Error, Result};

/// Arm elimination in rounds over a factored active set `A x B_1 x ... x B_d`.
///
/// A round lasts until every active cell has been checked (or the round cap
/// is reached). Only the first check of each cell in a round is recorded. At
/// the end of round `tau` each cell's mean over its recorded rewards gets the
/// radius `sqrt(gamma d log n / tau)`, and whole residual indices or
/// parameter-coordinate indices are dropped when every cell they span is
/// dominated by every cell of some rival index.
#[derive(Debug, Clone)]
pub struct DeepCRounds {
    grid: CellGrid,
    gamma: f64,
    log_n: f64,
    round_cap: usize,
    z_active: Vec<usize>,
    theta_active: Vec<Vec<usize>>,
    cells: Vec<usize>,
    recorded_sum: Vec<f64>,
    recorded_count: Vec<u64>,
    flagged: Vec<bool>,
    unflagged: usize,
    round: u64,
    steps_in_round: usize,
    capped: u64,
    steps: u64,
    cached_covariate: Vec<f64>,
    cached: Vec<Interval>,
    union: Vec<Interval>,
}

/// Outcome of one closed round, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSnapshot {
    pub round: u64,
    pub z_active: Vec<usize>,
    pub theta_active: Vec<Vec<usize>>,
}

impl DeepCRounds {
    pub fn new(grid: CellGrid, gamma: f64, n: usize, round_cap: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("horizon must be at least 2".into()));
        }
        if round_cap == 0 {
            return Err(Error::InvalidArgument("round cap must be positive".into()));
        }
        let total = grid.cell_count();
        let z_active: Vec<usize> = (0..grid.z.k).collect();
        let theta_active: Vec<Vec<usize>> = grid.theta.iter().map(|a| (0..a.k).collect()).collect();
        let mut policy = DeepCRounds {
            gamma,
            log_n: ln(n as f64),
            round_cap,
            z_active,
            theta_active,
            cells: Vec::new(),
            recorded_sum: vec![0.0; total],
            recorded_count: vec![0; total],
            flagged: vec![false; total],
            unflagged: 0,
            round: 1,
            steps_in_round: 0,
            capped: 0,
            steps: 0,
            cached_covariate: Vec::new(),
            cached: Vec::new(),
            union: Vec::new(),
            grid,
        };
        policy.start_round();
        Ok(policy)
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn active_set(&self) -> ActiveCellSet {
        ActiveCellSet::Factored {
            z: self.z_active.clone(),
            theta: self.theta_active.clone(),
        }
    }

    /// Active cells as sorted flat indices.
    pub fn active_cells(&self) -> &[usize] {
        &self.cells
    }

    /// Index of the round currently open (starting at 1).
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Number of rewards recorded for a cell so far.
    pub fn recorded(&self, flat: usize) -> u64 {
        self.recorded_count[flat]
    }

    /// Restrict the factored active set before the first step.
    pub fn restrict(&mut self, z: Vec<usize>, theta: Vec<Vec<usize>>) {
        assert!(self.steps == 0);
        assert!(!z.is_empty() && theta.iter().all(|b| !b.is_empty()));
        self.z_active = z;
        self.theta_active = theta;
        self.start_round();
    }

    fn start_round(&mut self) {
        self.cells = self.active_set().cells(&self.grid);
        for f in self.flagged.iter_mut() {
            *f = false;
        }
        self.unflagged = self.cells.len();
        self.steps_in_round = 0;
        self.cached_covariate.clear();
    }

    fn refresh(&mut self, covariate: &[f64]) {
        if self.cached_covariate == covariate && self.cached.len() == self.cells.len() {
            return;
        }
        let map = self.grid.price_map(covariate);
        self.cached.clear();
        self.cached.extend(self.cells.iter().map(|&c| map.interval_flat(c)));
        self.cached_covariate.clear();
        self.cached_covariate.extend_from_slice(covariate);
    }

    fn bounds(&self, flat: usize, radius: f64) -> (f64, f64) {
        let count = self.recorded_count[flat];
        if count == 0 {
            return (f64::INFINITY, f64::NEG_INFINITY);
        }
        let mean = self.recorded_sum[flat] / count as f64;
        (mean + radius, mean - radius)
    }

    /// Close the current round: coordinate-wise elimination, then open the
    /// next round.
    fn close_round(&mut self) {
        let tau = self.round as f64;
        let d = self.grid.dim() as f64;
        let radius = sqrt(self.gamma * d * self.log_n / tau);

        // Per-index sup of upper bounds and inf of lower bounds, for the
        // residual axis and every parameter axis.
        let kz = self.grid.z.k;
        let mut z_sup = vec![f64::NEG_INFINITY; kz];
        let mut z_inf = vec![f64::INFINITY; kz];
        let mut t_sup: Vec<Vec<f64>> = self
            .grid
            .theta
            .iter()
            .map(|a| vec![f64::NEG_INFINITY; a.k])
            .collect();
        let mut t_inf: Vec<Vec<f64>> = self
            .grid
            .theta
            .iter()
            .map(|a| vec![f64::INFINITY; a.k])
            .collect();
        for &c in &self.cells {
            let (u, l) = self.bounds(c, radius);
            let cell = self.grid.decode(c);
            z_sup[cell.z] = z_sup[cell.z].max(u);
            z_inf[cell.z] = z_inf[cell.z].min(l);
            for (axis, &j) in cell.theta.iter().enumerate() {
                t_sup[axis][j] = t_sup[axis][j].max(u);
                t_inf[axis][j] = t_inf[axis][j].min(l);
            }
        }

        let survivors = |active: &[usize], sup: &[f64], inf: &[f64]| -> Vec<usize> {
            let best = active
                .iter()
                .map(|&i| inf[i])
                .fold(f64::NEG_INFINITY, f64::max);
            active
                .iter()
                .copied()
                .filter(|&i| !(sup[i] < best))
                .collect()
        };
        let z_next = survivors(&self.z_active, &z_sup, &z_inf);
        let theta_next: Vec<Vec<usize>> = self
            .theta_active
            .iter()
            .enumerate()
            .map(|(axis, b)| survivors(b, &t_sup[axis], &t_inf[axis]))
            .collect();
        debug_assert!(!z_next.is_empty() && theta_next.iter().all(|b| !b.is_empty()));
        self.z_active = z_next;
        self.theta_active = theta_next;
        self.round += 1;
        self.start_round();
    }

    fn centroid_price(&self, flat: usize, covariate: &[f64]) -> f64 {
        let cell = self.grid.decode(flat);
        let exponent: f64 = self
            .grid
            .theta
            .iter()
            .zip(&cell.theta)
            .zip(covariate)
            .map(|((a, &j), &x)| a.centroid(j) * x)
            .sum();
        self.grid.z.centroid(cell.z) * exp(exponent)
    }

    /// Record one outcome; returns the closed round's active set when this
    /// step closes a round.
    pub fn observe(&mut self, feedback: Feedback<'_>) -> Option<RoundSnapshot> {
        self.refresh(feedback.covariate);
        let reward = if feedback.sale { feedback.price } else { 0.0 };
        for (&c, &iv) in self.cells.iter().zip(&self.cached) {
            if !self.flagged[c] && checks(iv, feedback.price) {
                self.flagged[c] = true;
                self.recorded_sum[c] += reward;
                self.recorded_count[c] += 1;
                self.unflagged -= 1;
            }
        }
        self.steps += 1;
        self.steps_in_round += 1;
        let full = self.unflagged == 0;
        if full || self.steps_in_round >= self.round_cap {
            if !full {
                self.capped += 1;
            }
            let closed = self.round;
            self.close_round();
            Some(RoundSnapshot {
                round: closed,
                z_active: self.z_active.clone(),
                theta_active: self.theta_active.clone(),
            })
        } else {
            None
        }
    }
}

impl PricingPolicy for DeepCRounds {
    fn name(&self) -> &'static str {
        "deep-c-rounds"
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        vec![("gamma", self.gamma), ("round_cap", self.round_cap as f64)]
    }

    fn next_price(&mut self, covariate: &[f64], rng: &mut dyn RngCore) -> f64 {
        self.refresh(covariate);
        self.union.clear();
        self.union.extend_from_slice(&self.cached);
        normalize(&mut self.union);
        match sample_uniform(&self.union, rng) {
            Ok(p) if p > 0.0 => p,
            _ => {
                let pick = rng.random_range(0..self.cells.len());
                self.centroid_price(self.cells[pick], covariate)
            }
        }
    }

    fn update(&mut self, feedback: Feedback<'_>) {
        self.observe(feedback);
    }

    fn is_fresh(&self) -> bool {
        self.steps == 0
    }

    fn capped_rounds(&self) -> u64 {
        self.capped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;

    fn grid(n: usize, d: usize) -> CellGrid {
        CellGrid::new(Interval::new(0.0, 1.0), &vec![Interval::new(0.0, 1.0); d], n).unwrap()
    }

    #[test]
    fn round_of_length_one_when_everything_is_checked() {
        // x = 0 with a single z index: every active cell maps to the same
        // price interval, so one price checks them all.
        let mut p = DeepCRounds::new(grid(625, 1), 1.0, 625, 625).unwrap();
        p.restrict(vec![2], vec![vec![0, 1, 2, 3, 4]]);
        let x = [0.0];
        let price = p.next_price(&x, &mut crate::rng::seeded(1));
        let closed = p.observe(Feedback {
            covariate: &x,
            price,
            sale: true,
        });
        assert!(closed.is_some());
        assert_eq!(p.round(), 2);
        for &c in p.active_cells() {
            assert_eq!(p.recorded(c), 1);
        }
    }

    #[test]
    fn dominated_z_row_is_dropped() {
        // 2 x 2 grid (z indices {0, 1}, theta indices {0, 1}); gamma chosen so
        // the radius is 0.1 after one round.
        let n = 625;
        let log_n = ln(n as f64);
        let gamma = 0.01 / log_n;
        let mut p = DeepCRounds::new(grid(n, 1), gamma, n, n).unwrap();
        p.restrict(vec![0, 1], vec![vec![0, 1]]);
        let g = p.grid().clone();
        let flat = |z, t| g.encode(&crate::grid::CellIndex { z, theta: vec![t] });
        // rewards: row z=0 -> 0.1, 0.15; row z=1 -> 0.5, 0.55
        p.recorded_sum[flat(0, 0)] = 0.1;
        p.recorded_sum[flat(0, 1)] = 0.15;
        p.recorded_sum[flat(1, 0)] = 0.5;
        p.recorded_sum[flat(1, 1)] = 0.55;
        for z in 0..2 {
            for t in 0..2 {
                p.recorded_count[flat(z, t)] = 1;
            }
        }
        p.close_round();
        assert_eq!(p.z_active, vec![1]);
        assert_eq!(p.theta_active, vec![vec![0, 1]]);
    }

    #[test]
    fn scripted_transcript_matches_hand_simulation() {
        // d = 1, k = 2 on each axis (n = 16, cell length 1/2). Covariate 0
        // makes every price independent of theta, so z-cell 0 covers prices
        // [0, 0.5] and z-cell 1 covers [0.5, 1].
        let n = 16;
        let log_n = ln(n as f64);
        // radius at round tau is sqrt(0.04 / tau)
        let gamma = 0.04 / log_n;
        let mut p = DeepCRounds::new(grid(n, 1), gamma, n, n).unwrap();
        let x = [0.0];
        let script = [
            (0.25, true),  // round 1: checks z-cell 0 -> reward 0.25
            (0.75, false), // round 1: checks z-cell 1 -> reward 0; round closes
            (0.75, true),  // round 2: z-cell 1 reward 0.75
            (0.25, false), // round 2: z-cell 0 reward 0; round closes
        ];
        let mut closes = Vec::new();
        for (price, sale) in script {
            if let Some(s) = p.observe(Feedback {
                covariate: &x,
                price,
                sale,
            }) {
                closes.push(s);
            }
        }
        // Round 1: means 0.25 vs 0, radius 0.2: u(1) = 0.2 < l(0) = 0.05? no.
        // 0.2 >= 0.05, so nothing is eliminated.
        assert_eq!(closes[0].round, 1);
        assert_eq!(closes[0].z_active, vec![0, 1]);
        // Round 2: means 0.125 and 0.375, radius sqrt(0.02) ~ 0.1414:
        // u(0) = 0.2664 >= l(1) = 0.2336, so both survive.
        assert_eq!(closes[1].round, 2);
        assert_eq!(closes[1].z_active, vec![0, 1]);
        // Round 3: z-cell 1 earns 1.0, z-cell 0 earns 0.
        for (price, sale) in [(1.0, true), (0.5, false)] {
            if let Some(s) = p.observe(Feedback {
                covariate: &x,
                price,
                sale,
            }) {
                closes.push(s);
            }
        }
        // price 1.0 checks only z-cell 1; price 0.5 is a shared edge and checks
        // z-cell 0 (z-cell 1 already recorded). Means: 0.25/3 ~ 0.0833 and
        // 1.75/3 ~ 0.5833, radius sqrt(0.04/3) ~ 0.1155:
        // u(0) = 0.1988 < l(1) = 0.4679 -> z-cell 0 eliminated.
        assert_eq!(closes[2].round, 3);
        assert_eq!(closes[2].z_active, vec![1]);
        // theta indices see identical rewards and always survive
        assert_eq!(closes[2].theta_active, vec![vec![0, 1]]);
    }

    #[test]
    fn cap_closes_round() {
        let mut p = DeepCRounds::new(grid(625, 1), 1.0, 625, 1).unwrap();
        let x = [0.0];
        let closed = p.observe(Feedback {
            covariate: &x,
            price: 0.1,
            sale: true,
        });
        assert!(closed.is_some());
        assert_eq!(p.capped_rounds(), 1);
    }
}
