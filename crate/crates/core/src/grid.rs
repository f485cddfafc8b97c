//! Discretization of the arm space and price-interval unions.
//!
//! The residual support and every parameter coordinate are split into cells
//! of side `n^(-1/4)`. Given a covariate `x`, a cell maps to the closed price
//! interval of all `z exp(theta . x)` it can produce; the active price set is
//! the union of those intervals over active cells.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::Rng;

use crate::math::{ceil, exp, powf};
use crate::model::product_range;
use crate::{Error, Result};

/// Relative tolerance used to absorb floating-point seams between intervals.
pub const SEAM_TOLERANCE: f64 = 1e-12;

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_within(&self, outer: &Interval) -> bool {
        outer.lo <= self.lo && self.hi <= outer.hi
    }
}

/// Side length of a cell for horizon `n`.
pub fn cell_length(n: usize) -> f64 {
    powf(n as f64, -0.25)
}

/// Equal-length partition of one axis, enlarged at the upper end so that
/// `hi - lo = k * cell_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPartition {
    pub lo: f64,
    pub hi: f64,
    pub cell_len: f64,
    pub k: usize,
    /// Upper endpoint before enlargement.
    pub original_hi: f64,
}

/// Partition `support` into cells of length `n^(-1/4)`.
pub fn build_partition(support: Interval, n: usize) -> Result<AxisPartition> {
    if n < 16 {
        return Err(Error::InvalidArgument("partition needs n >= 16".into()));
    }
    if !(support.len() > 0.0) {
        return Err(Error::InvalidArgument(
            "partition support must have positive length".into(),
        ));
    }
    let cell_len = cell_length(n);
    // n^(-1/4) is rarely exact in floating point; a ratio within 1e-9 of an
    // integer counts as that integer.
    let ratio = support.len() / cell_len;
    let k = (ceil(ratio - 1e-9) as usize).max(1);
    Ok(AxisPartition {
        lo: support.lo,
        hi: support.lo + k as f64 * cell_len,
        cell_len,
        k,
        original_hi: support.hi,
    })
}

impl AxisPartition {
    pub fn cell(&self, i: usize) -> Interval {
        debug_assert!(i < self.k);
        let lo = self.lo + i as f64 * self.cell_len;
        let hi = if i + 1 == self.k {
            self.hi
        } else {
            self.lo + (i + 1) as f64 * self.cell_len
        };
        Interval::new(lo, hi)
    }

    pub fn centroid(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.cell_len
    }

    pub fn centroids(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.centroid(i)).collect()
    }

    /// Cell holding `v`; shared boundaries belong to the lower cell.
    pub fn locate(&self, v: f64) -> Option<usize> {
        if v < self.lo || v > self.hi {
            return None;
        }
        let pos = (v - self.lo) / self.cell_len;
        let i = (ceil(pos) as usize).saturating_sub(1);
        Some(i.min(self.k - 1))
    }
}

/// Cell coordinates: residual index and one index per parameter coordinate
/// (all zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub z: usize,
    pub theta: Vec<usize>,
}

/// The full product grid over the residual axis and the parameter axes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub z: AxisPartition,
    pub theta: Vec<AxisPartition>,
}

impl CellGrid {
    pub fn new(z_support: Interval, theta_box: &[Interval], n: usize) -> Result<Self> {
        Ok(CellGrid {
            z: build_partition(z_support, n)?,
            theta: theta_box
                .iter()
                .map(|b| build_partition(*b, n))
                .collect::<Result<_>>()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn cell_count(&self) -> usize {
        self.theta.iter().fold(self.z.k, |acc, a| acc * a.k)
    }

    /// Flat index with the residual axis varying fastest.
    pub fn encode(&self, cell: &CellIndex) -> usize {
        let mut flat = 0;
        for (a, &j) in self.theta.iter().zip(&cell.theta).rev() {
            flat = flat * a.k + j;
        }
        flat * self.z.k + cell.z
    }

    pub fn decode(&self, mut flat: usize) -> CellIndex {
        let z = flat % self.z.k;
        flat /= self.z.k;
        let theta = self
            .theta
            .iter()
            .map(|a| {
                let j = flat % a.k;
                flat /= a.k;
                j
            })
            .collect();
        CellIndex { z, theta }
    }

    /// Per-covariate lookup tables for fast cell price intervals.
    pub fn price_map(&self, covariate: &[f64]) -> PriceMap {
        let mut min_factor = Vec::with_capacity(self.dim());
        let mut max_factor = Vec::with_capacity(self.dim());
        for (a, &x) in self.theta.iter().zip(covariate) {
            let (mut lo, mut hi) = (Vec::with_capacity(a.k), Vec::with_capacity(a.k));
            for j in 0..a.k {
                let (emin, emax) = product_range(a.cell(j), Interval::new(x, x));
                lo.push(exp(emin));
                hi.push(exp(emax));
            }
            min_factor.push(lo);
            max_factor.push(hi);
        }
        PriceMap {
            z_cells: (0..self.z.k).map(|i| self.z.cell(i)).collect(),
            min_factor,
            max_factor,
        }
    }
}

/// Cell price intervals for one covariate vector.
#[derive(Debug, Clone)]
pub struct PriceMap {
    z_cells: Vec<Interval>,
    min_factor: Vec<Vec<f64>>,
    max_factor: Vec<Vec<f64>>,
}

impl PriceMap {
    pub fn interval(&self, cell: &CellIndex) -> Interval {
        let (mut lo, mut hi) = (1.0, 1.0);
        for (l, &j) in cell.theta.iter().enumerate() {
            lo *= self.min_factor[l][j];
            hi *= self.max_factor[l][j];
        }
        let z = self.z_cells[cell.z];
        Interval::new(z.lo * lo, z.hi * hi)
    }

    /// Interval of a flat cell index (layout of [`CellGrid::encode`]).
    pub fn interval_flat(&self, mut flat: usize) -> Interval {
        let kz = self.z_cells.len();
        let z = self.z_cells[flat % kz];
        flat /= kz;
        let (mut lo, mut hi) = (1.0, 1.0);
        for (mins, maxs) in self.min_factor.iter().zip(&self.max_factor) {
            let j = flat % mins.len();
            flat /= mins.len();
            lo *= mins[j];
            hi *= maxs[j];
        }
        Interval::new(z.lo * lo, z.hi * hi)
    }
}

/// Price interval of one cell: the range of `z exp(theta . x)` over the cell.
pub fn cell_price_interval(grid: &CellGrid, cell: &CellIndex, covariate: &[f64]) -> Interval {
    let (mut emin, mut emax) = (0.0, 0.0);
    for ((a, &j), &x) in grid.theta.iter().zip(&cell.theta).zip(covariate) {
        let (lo, hi) = product_range(a.cell(j), Interval::new(x, x));
        emin += lo;
        emax += hi;
    }
    let z = grid.z.cell(cell.z);
    Interval::new(z.lo * exp(emin), z.hi * exp(emax))
}

/// Set of cells that have not been eliminated.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveCellSet {
    /// Explicit sorted list of flat cell indices.
    Full(Vec<usize>),
    /// Product of an active residual-index list and one active list per
    /// parameter coordinate.
    Factored { z: Vec<usize>, theta: Vec<Vec<usize>> },
}

impl ActiveCellSet {
    pub fn all(grid: &CellGrid) -> Self {
        ActiveCellSet::Full((0..grid.cell_count()).collect())
    }

    pub fn all_factored(grid: &CellGrid) -> Self {
        ActiveCellSet::Factored {
            z: (0..grid.z.k).collect(),
            theta: grid.theta.iter().map(|a| (0..a.k).collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ActiveCellSet::Full(c) => c.len(),
            ActiveCellSet::Factored { z, theta } => {
                theta.iter().fold(z.len(), |acc, b| acc * b.len())
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Enumerate the active cells as flat indices, in increasing order.
    pub fn cells(&self, grid: &CellGrid) -> Vec<usize> {
        match self {
            ActiveCellSet::Full(c) => c.clone(),
            ActiveCellSet::Factored { z, theta } => {
                let mut out = Vec::with_capacity(self.len());
                let mut idx = vec![0usize; theta.len()];
                if self.is_empty() {
                    return out;
                }
                loop {
                    let mut base = 0;
                    for (l, b) in theta.iter().enumerate().rev() {
                        base = base * grid.theta[l].k + b[idx[l]];
                    }
                    for &i in z {
                        out.push(base * grid.z.k + i);
                    }
                    // odometer over the parameter lists, first axis fastest
                    let mut l = 0;
                    loop {
                        if l == theta.len() {
                            out.sort_unstable();
                            return out;
                        }
                        idx[l] += 1;
                        if idx[l] < theta[l].len() {
                            break;
                        }
                        idx[l] = 0;
                        l += 1;
                    }
                }
            }
        }
    }
}

/// Sorted union of disjoint closed intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl IntervalUnion {
    /// Sort and merge; intervals whose gap is below `1e-12` times the largest
    /// endpoint magnitude are joined.
    pub fn from_intervals(mut intervals: Vec<Interval>) -> Self {
        normalize(&mut intervals);
        IntervalUnion { intervals }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn measure(&self) -> f64 {
        measure(&self.intervals)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(v))
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_uniform(&self.intervals, rng)
    }
}

pub(crate) fn normalize(intervals: &mut Vec<Interval>) {
    if intervals.is_empty() {
        return;
    }
    intervals.sort_unstable_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
    let scale = intervals
        .iter()
        .fold(0.0f64, |m, iv| m.max(iv.lo.abs()).max(iv.hi.abs()));
    let tol = SEAM_TOLERANCE * scale;
    let mut w = 0;
    for r in 1..intervals.len() {
        let next = intervals[r];
        if next.lo <= intervals[w].hi + tol {
            if next.hi > intervals[w].hi {
                intervals[w].hi = next.hi;
            }
        } else {
            w += 1;
            intervals[w] = next;
        }
    }
    intervals.truncate(w + 1);
}

/// Lebesgue measure of a normalized union.
pub fn measure(intervals: &[Interval]) -> f64 {
    intervals.iter().map(Interval::len).sum()
}

/// Lebesgue-uniform draw from a normalized union: an interval is chosen with
/// probability proportional to its length, then a point uniformly inside it.
pub fn sample_uniform<R: Rng + ?Sized>(intervals: &[Interval], rng: &mut R) -> Result<f64> {
    let total = measure(intervals);
    if !(total > 0.0) {
        return Err(Error::ZeroMeasure);
    }
    let u: f64 = rng.sample(Open01);
    let mut target = u * total;
    let mut last = None;
    for iv in intervals {
        let len = iv.len();
        if len <= 0.0 {
            continue;
        }
        if target < len {
            return Ok((iv.lo + target).min(iv.hi));
        }
        target -= len;
        last = Some(iv);
    }
    // rounding pushed the target past the end
    Ok(last.map(|iv| iv.hi).unwrap_or(intervals[0].hi))
}

/// Union of the price intervals of every active cell.
pub fn active_price_set(
    active: &ActiveCellSet,
    grid: &CellGrid,
    covariate: &[f64],
) -> IntervalUnion {
    let map = grid.price_map(covariate);
    let intervals = active
        .cells(grid)
        .into_iter()
        .map(|c| map.interval_flat(c))
        .collect();
    IntervalUnion::from_intervals(intervals)
}

/// Whether `price` falls in `iv`, allowing the seam tolerance.
#[inline]
pub(crate) fn checks(iv: Interval, price: f64) -> bool {
    let tol = SEAM_TOLERANCE * price.abs().max(iv.hi.abs());
    iv.lo - tol <= price && price <= iv.hi + tol
}

/// Active cells whose price interval contains `price`.
pub fn checked_cells(
    active: &ActiveCellSet,
    grid: &CellGrid,
    covariate: &[f64],
    price: f64,
) -> Vec<CellIndex> {
    let map = grid.price_map(covariate);
    active
        .cells(grid)
        .into_iter()
        .filter(|&c| checks(map.interval_flat(c), price))
        .map(|c| grid.decode(c))
        .collect()
}
