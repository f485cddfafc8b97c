//! One-bit sparse estimation of the valuation parameter.
//!
//! Sale indicators are turned into a score vector `c = sum (2Y - 1) X` and the
//! estimate maximizes `c . theta` over `{ |theta|_1 <= rho1, |theta|_2 <= rho2 }`.
//! The maximizer is a rescaled soft-thresholding of `c`; the threshold is
//! located by a binary search over the breakpoints `|c_i|` followed by a
//! closed-form solve inside the bracketing segment.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, norm1, norm2, sqrt};
use crate::{Error, Result};

/// Feasibility slack accepted by [`kkt_residual`] and used to decide which
/// constraints are active.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Running sum of `(2Y - 1) X` over a window of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub c: Vec<f64>,
    pub count: u64,
}

impl ScoreVector {
    pub fn zeros(d: usize) -> Self {
        ScoreVector {
            c: vec![0.0; d],
            count: 0,
        }
    }

    pub fn from_vec(c: Vec<f64>) -> Self {
        ScoreVector { c, count: 0 }
    }

    /// Add one observation: `+x` after a sale, `-x` otherwise.
    pub fn push(&mut self, covariate: &[f64], sale: bool) {
        let sign = if sale { 1.0 } else { -1.0 };
        for (c, x) in self.c.iter_mut().zip(covariate) {
            *c += sign * x;
        }
        self.count += 1;
    }
}

/// Radii of the L1 and L2 balls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallConstraints {
    pub rho1: f64,
    pub rho2: f64,
}

impl BallConstraints {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        if !(rho1 > 0.0 && rho2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ball radii must be positive, got {rho1}, {rho2}"
            )));
        }
        Ok(BallConstraints { rho1, rho2 })
    }

    /// L1 radius `sqrt(s)` for sparsity `s`, unit L2 radius.
    pub fn for_sparsity(s: usize) -> Result<Self> {
        Self::new(sqrt(s as f64), 1.0)
    }
}

fn soft_threshold_ratio(sorted_abs: &[f64], lambda: f64) -> f64 {
    let (mut s1, mut s2) = (0.0, 0.0);
    for &a in sorted_abs {
        if a <= lambda {
            break;
        }
        s1 += a - lambda;
        s2 += (a - lambda) * (a - lambda);
    }
    if s2 > 0.0 {
        s1 / sqrt(s2)
    } else {
        0.0
    }
}

/// Global maximizer of `c . theta` over the ball intersection; the minimum-norm
/// one when the optimal set is a face. `c = 0` gives the zero vector.
pub fn solve(score: &ScoreVector, balls: BallConstraints) -> Vec<f64> {
    let c = &score.c;
    let d = c.len();
    let mut sorted: Vec<f64> = c.iter().map(|v| abs(*v)).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let top = sorted.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return vec![0.0; d];
    }
    let target = balls.rho1 / balls.rho2;

    let lambda = if soft_threshold_ratio(&sorted, 0.0) <= target {
        0.0
    } else {
        // Number of coordinates tied at the top value.
        let ties = sorted.iter().take_while(|&&a| a == top).count();
        if sqrt(ties as f64) >= target {
            // The L2 ball cannot bind: optimum is the L1 face spanned by the
            // tied coordinates, and its minimum-norm point splits rho1 evenly.
            let share = balls.rho1 / ties as f64;
            return c
                .iter()
                .map(|&v| {
                    if abs(v) == top {
                        share * v.signum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        // The ratio |s|_1 / |s|_2 is nonincreasing in the threshold. Find the
        // support size m whose segment [sorted[m], sorted[m-1]) holds the root:
        // the ratio at the breakpoint sorted[m] is still above the target.
        let (mut lo, mut hi) = (ties, d);
        // invariant: ratio(sorted[lo]) <= target (or lo == ties), and
        // ratio(sorted[hi]) > target, with sorted[d] read as 0.
        let at = |m: usize| soft_threshold_ratio(&sorted, if m < d { sorted[m] } else { 0.0 });
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if at(mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // sorted[hi] < sorted[lo], so the support inside the segment is the
        // first `hi` coordinates.
        let m = hi;
        let mf = m as f64;
        let r2 = target * target;
        let upper = sorted[m - 1];
        let lower = if m < d { sorted[m] } else { 0.0 };
        if mf > r2 {
            // Centre twice so the deviations carry no rounding from the mean;
            // the threshold is then `mean - shift` and the support values are
            // `dev + shift`, which keeps |theta|_1 / |theta|_2 exact even when
            // the top scores nearly tie.
            let mean = sorted[..m].iter().sum::<f64>() / mf;
            let mut dev: Vec<f64> = sorted[..m].iter().map(|&a| a - mean).collect();
            let drift = dev.iter().sum::<f64>() / mf;
            dev.iter_mut().for_each(|u| *u -= drift);
            let sq: f64 = dev.iter().map(|u| u * u).sum();
            let shift = target * sqrt(sq / (mf * (mf - r2)));
            let lambda = mean + drift - shift;
            if lambda > lower && lambda < upper {
                return on_support(c, &dev, shift, balls);
            }
            lambda.clamp(lower, upper)
        } else {
            (sorted[..m].iter().sum::<f64>() / mf).clamp(lower, upper)
        }
    };

    let theta: Vec<f64> = c
        .iter()
        .map(|&v| {
            let a = abs(v) - lambda;
            if a > 0.0 {
                a * v.signum()
            } else {
                0.0
            }
        })
        .collect();
    rescale(theta, balls)
}

/// Places `dev[k] + shift` on the coordinate of `c` with the `k`-th largest
/// magnitude, then rescales.
fn on_support(c: &[f64], dev: &[f64], shift: f64, balls: BallConstraints) -> Vec<f64> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| abs(c[j]).total_cmp(&abs(c[i])));
    let mut theta = vec![0.0; c.len()];
    for (k, &i) in order.iter().take(dev.len()).enumerate() {
        theta[i] = (dev[k] + shift).max(0.0) * c[i].signum();
    }
    rescale(theta, balls)
}

/// Scales a nonzero direction onto the boundary of the ball intersection.
fn rescale(mut theta: Vec<f64>, balls: BallConstraints) -> Vec<f64> {
    let n2 = norm2(&theta);
    let mut scale = balls.rho2 / n2;
    let n1 = norm1(&theta) * scale;
    if n1 > balls.rho1 {
        scale *= balls.rho1 / n1;
    }
    for t in theta.iter_mut() {
        *t *= scale;
    }
    theta
}

/// Projected-ascent reference solver, used as an independent check of
/// [`solve`]. Each step moves along `c` with step `1 / |c|_2` and projects
/// back onto the ball intersection with Dykstra's alternating projections.
pub fn reference_solve(score: &ScoreVector, balls: BallConstraints, iters: usize) -> Vec<f64> {
    let c = &score.c;
    let d = c.len();
    let cn = norm2(c);
    let mut theta = vec![0.0; d];
    if !(cn > 0.0) {
        return theta;
    }
    let step = 1.0 / cn;
    let mut y = vec![0.0; d];
    for _ in 0..iters {
        for i in 0..d {
            y[i] = theta[i] + step * c[i];
        }
        let next = dykstra(&y, balls);
        let moved: f64 = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        theta = next;
        if moved < 1e-30 {
            break;
        }
    }
    theta
}

fn dykstra(y: &[f64], balls: BallConstraints) -> Vec<f64> {
    let d = y.len();
    let mut x = y.to_vec();
    let mut p = vec![0.0; d];
    let mut q = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for _ in 0..10_000 {
        for i in 0..d {
            buf[i] = x[i] + p[i];
        }
        let a = project_l2(&buf, balls.rho2);
        for i in 0..d {
            p[i] = buf[i] - a[i];
            buf[i] = a[i] + q[i];
        }
        let b = project_l1(&buf, balls.rho1);
        let mut change = 0.0;
        for i in 0..d {
            q[i] = buf[i] - b[i];
            change += (b[i] - x[i]) * (b[i] - x[i]);
        }
        x = b;
        if change < 1e-32 {
            break;
        }
    }
    x
}

fn project_l2(v: &[f64], radius: f64) -> Vec<f64> {
    let n = norm2(v);
    if n <= radius {
        v.to_vec()
    } else {
        v.iter().map(|x| x * radius / n).collect()
    }
}

/// Euclidean projection onto the L1 ball by the sort-and-threshold rule.
fn project_l1(v: &[f64], radius: f64) -> Vec<f64> {
    if norm1(v) <= radius {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| abs(*x)).collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (j, &a) in u.iter().enumerate() {
        cum += a;
        let t = (cum - radius) / (j + 1) as f64;
        if a - t > 0.0 {
            shift = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| (abs(x) - shift).max(0.0) * x.signum())
        .collect()
}

/// Smallest stationarity residual `|c - lambda1 g - 2 lambda2 theta|_2` over
/// multipliers `lambda1, lambda2 >= 0` (each zero unless its constraint is
/// active) and subgradients `g` of `|theta|_1`. Zero at optima.
pub fn kkt_residual(theta: &[f64], score: &ScoreVector, balls: BallConstraints) -> Result<f64> {
    let c = &score.c;
    if theta.len() != c.len() {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    let n1 = norm1(theta);
    let n2 = norm2(theta);
    if n1 > balls.rho1 + FEASIBILITY_TOLERANCE || n2 > balls.rho2 + FEASIBILITY_TOLERANCE {
        return Err(Error::Infeasible(format!(
            "|theta|_1 = {n1}, |theta|_2 = {n2} exceed radii {}, {}",
            balls.rho1, balls.rho2
        )));
    }
    let l1_active = n1 >= balls.rho1 - FEASIBILITY_TOLERANCE;
    let l2_active = n2 >= balls.rho2 - FEASIBILITY_TOLERANCE && n2 > 0.0;
    let theta_sq: f64 = theta.iter().map(|t| t * t).sum();

    // For fixed lambda1 the best lambda2 is a clipped least-squares fit on the
    // support; the resulting squared residual is convex in lambda1.
    let residual_sq = |lambda1: f64| -> f64 {
        let lambda2 = if l2_active {
            let num: f64 = theta
                .iter()
                .zip(c)
                .filter(|(t, _)| **t != 0.0)
                .map(|(t, ci)| t * (ci - lambda1 * t.signum()))
                .sum();
            (num / (2.0 * theta_sq)).max(0.0)
        } else {
            0.0
        };
        theta
            .iter()
            .zip(c)
            .map(|(&t, &ci)| {
                if t != 0.0 {
                    let r = ci - lambda1 * t.signum() - 2.0 * lambda2 * t;
                    r * r
                } else {
                    let r = (abs(ci) - lambda1).max(0.0);
                    r * r
                }
            })
            .sum()
    };

    if !l1_active {
        return Ok(sqrt(residual_sq(0.0)));
    }
    let (mut a, mut b) = (0.0, c.iter().fold(0.0f64, |m, v| m.max(abs(*v))));
    for _ in 0..300 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if residual_sq(m1) <= residual_sq(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let best = residual_sq(0.5 * (a + b)).min(residual_sq(0.0));
    Ok(sqrt(best))
}
