use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{CellStats, Feedback, PricingPolicy};
use crate::grid::{checks, normalize, sample_uniform, CellGrid, Interval};
use crate::math::exp;

/// Arm elimination over the full `(z, theta)` cell grid.
///
/// Each step posts a Lebesgue-uniform price from the union of the active
/// cells' price intervals. Every active cell whose interval contains the
/// price is credited with the realized reward, and a cell is dropped once its
/// upper confidence bound falls below another active cell's lower bound.
#[derive(Debug, Clone)]
pub struct DeepC {
    grid: CellGrid,
    gamma: f64,
    active: Vec<usize>,
    stats: Vec<CellStats>,
    // intervals of `active` for `cached_covariate`
    cached_covariate: Vec<f64>,
    cached: Vec<Interval>,
    union: Vec<Interval>,
    steps: u64,
}

impl DeepC {
    pub fn new(grid: CellGrid, gamma: f64) -> Self {
        let cells = grid.cell_count();
        DeepC {
            active: (0..cells).collect(),
            stats: vec![CellStats::default(); cells],
            cached_covariate: Vec::new(),
            cached: Vec::new(),
            union: Vec::new(),
            grid,
            gamma,
            steps: 0,
        }
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    /// Active cells as sorted flat indices.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn stats(&self, flat: usize) -> CellStats {
        self.stats[flat]
    }

    /// Restrict the active set (used to set up scenarios); `cells` must be a
    /// nonempty subset of the current active set.
    pub fn retain_cells(&mut self, cells: &[usize]) {
        self.active.retain(|c| cells.contains(c));
        assert!(!self.active.is_empty());
        self.cached_covariate.clear();
    }

    fn refresh(&mut self, covariate: &[f64]) {
        if self.cached_covariate == covariate && self.cached.len() == self.active.len() {
            return;
        }
        let map = self.grid.price_map(covariate);
        self.cached.clear();
        self.cached
            .extend(self.active.iter().map(|&c| map.interval_flat(c)));
        self.cached_covariate.clear();
        self.cached_covariate.extend_from_slice(covariate);
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

    fn eliminate(&mut self) {
        let gamma = self.gamma;
        let best_lower = self
            .active
            .iter()
            .map(|&c| self.stats[c].bounds(gamma).1)
            .fold(f64::NEG_INFINITY, f64::max);
        let stats = &self.stats;
        self.active
            .retain(|&c| !(stats[c].bounds(gamma).0 < best_lower));
        debug_assert!(!self.active.is_empty());
    }
}

impl PricingPolicy for DeepC {
    fn name(&self) -> &'static str {
        "deep-c"
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        vec![("gamma", self.gamma)]
    }

    fn next_price(&mut self, covariate: &[f64], rng: &mut dyn RngCore) -> f64 {
        self.refresh(covariate);
        self.union.clear();
        self.union.extend_from_slice(&self.cached);
        normalize(&mut self.union);
        match sample_uniform(&self.union, rng) {
            Ok(p) if p > 0.0 => p,
            _ => {
                let pick = rng.random_range(0..self.active.len());
                self.centroid_price(self.active[pick], covariate)
            }
        }
    }

    fn update(&mut self, feedback: Feedback<'_>) {
        self.refresh(feedback.covariate);
        let reward = if feedback.sale { feedback.price } else { 0.0 };
        for (&c, &iv) in self.active.iter().zip(&self.cached) {
            if checks(iv, feedback.price) {
                self.stats[c].record(reward);
            }
        }
        let before = self.active.len();
        self.eliminate();
        if self.active.len() != before {
            self.cached_covariate.clear();
        }
        self.steps += 1;
    }

    fn is_fresh(&self) -> bool {
        self.steps == 0
    }
}
