//! The generative market, the clairvoyant oracle, revenue functions and the
//! bounds on attainable valuations.
//!
//! Valuations follow `V = Z * exp(theta0 . X)` with `X` drawn from a covariate
//! law and `Z` from a residual law supported in `[0, 1]`. A sale happens when
//! `V >= price`.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::Interval;
use crate::math::{dot, exp, sqrt};
use crate::{Error, Result};

/// Floor substituted for a zero lower residual bound when computing `alpha1`.
pub const DEFAULT_Z_FLOOR: f64 = 1e-3;

/// Grid resolution of the oracle's scan over the residual support.
const ORACLE_GRID_POINTS: usize = 10_000;
const ORACLE_TOLERANCE: f64 = 1e-6;

/// Law of the covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateLaw {
    /// Independent uniform coordinates on the given per-dimension intervals.
    UniformBox(Vec<Interval>),
    /// i.i.d. standard normal coordinates (unbounded support).
    StandardNormal,
    /// Spherically symmetric: `X = R * U` with `U` uniform on the unit sphere
    /// and generating radius `R` uniform on `radius`.
    Spherical { radius: Interval },
}

impl CovariateLaw {
    /// Fill `out` with one draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        match self {
            CovariateLaw::UniformBox(b) => {
                for (x, iv) in out.iter_mut().zip(b) {
                    let u: f64 = rng.random();
                    *x = iv.lo + (iv.hi - iv.lo) * u;
                }
            }
            CovariateLaw::StandardNormal => {
                for x in out.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
            }
            CovariateLaw::Spherical { radius } => {
                let norm = loop {
                    for x in out.iter_mut() {
                        *x = rng.sample(StandardNormal);
                    }
                    let n = crate::math::norm2(out);
                    if n > 0.0 {
                        break n;
                    }
                };
                let u: f64 = rng.random();
                let r = radius.lo + (radius.hi - radius.lo) * u;
                for x in out.iter_mut() {
                    *x *= r / norm;
                }
            }
        }
    }

    /// A box containing the support, or `None` when the support is unbounded.
    pub fn bounding_box(&self, d: usize) -> Option<Vec<Interval>> {
        match self {
            CovariateLaw::UniformBox(b) => Some(b.clone()),
            CovariateLaw::StandardNormal => None,
            CovariateLaw::Spherical { radius } => {
                Some(vec![Interval::new(-radius.hi, radius.hi); d])
            }
        }
    }
}

/// Law of the multiplicative residual `Z`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseLaw {
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-constant density: bin `i` is `[edges[i], edges[i + 1]]` and
    /// carries probability `masses[i]` (masses sum to one).
    PiecewiseConstant { edges: Vec<f64>, masses: Vec<f64> },
}

impl NoiseLaw {
    /// Piecewise-constant law from bin edges and (unnormalized) densities.
    pub fn piecewise(edges: Vec<f64>, densities: &[f64]) -> Result<Self> {
        if edges.len() < 2 || densities.len() + 1 != edges.len() {
            return Err(Error::InvalidSpec(
                "piecewise law needs one density per bin".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSpec("bin edges must increase".into()));
        }
        if densities.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidSpec("densities must be nonnegative".into()));
        }
        let raw: Vec<f64> = edges
            .windows(2)
            .zip(densities)
            .map(|(w, p)| (w[1] - w[0]) * p)
            .collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidSpec("density integrates to zero".into()));
        }
        let masses = raw.into_iter().map(|m| m / total).collect();
        Ok(NoiseLaw::PiecewiseConstant { edges, masses })
    }

    pub fn support(&self) -> Interval {
        match self {
            NoiseLaw::Uniform { lo, hi } => Interval::new(*lo, *hi),
            NoiseLaw::PiecewiseConstant { edges, .. } => {
                Interval::new(edges[0], edges[edges.len() - 1])
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseLaw::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
            NoiseLaw::PiecewiseConstant { edges, masses } => {
                let mut target: f64 = rng.random();
                let last = masses.len() - 1;
                for (i, &m) in masses.iter().enumerate() {
                    if target < m || i == last {
                        let frac = if m > 0.0 { (target / m).min(1.0) } else { 0.0 };
                        return edges[i] + (edges[i + 1] - edges[i]) * frac;
                    }
                    target -= m;
                }
                unreachable!()
            }
        }
    }

    /// `P(Z >= z)`.
    pub fn survival(&self, z: f64) -> f64 {
        match self {
            NoiseLaw::Uniform { lo, hi } => {
                if z <= *lo {
                    1.0
                } else if z >= *hi {
                    0.0
                } else {
                    (hi - z) / (hi - lo)
                }
            }
            NoiseLaw::PiecewiseConstant { edges, masses } => {
                let mut p = 0.0;
                for (i, &m) in masses.iter().enumerate() {
                    let (a, b) = (edges[i], edges[i + 1]);
                    if z <= a {
                        p += m;
                    } else if z < b {
                        p += m * (b - z) / (b - a);
                    }
                }
                p.min(1.0)
            }
        }
    }

    /// Single-transaction revenue curve `F(z) = z * P(Z >= z)`.
    pub fn revenue_curve(&self, z: f64) -> f64 {
        z * self.survival(z)
    }
}

/// The generative market.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub d: usize,
    pub theta0: Vec<f64>,
    pub covariates: CovariateLaw,
    pub noise: NoiseLaw,
    pub horizon: usize,
    /// Known parameter box, a subset of `[0, 1]^d`.
    pub theta_box: Vec<Interval>,
    /// Known residual support, a subset of `[0, 1]`.
    pub z_support: Interval,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidSpec(m));
        if self.d == 0 {
            return bad("dimension must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.theta0.len() != self.d || self.theta_box.len() != self.d {
            return bad(format!(
                "theta0 and theta_box must have {} entries",
                self.d
            ));
        }
        let unit = Interval::new(0.0, 1.0);
        for (l, (t, b)) in self.theta0.iter().zip(&self.theta_box).enumerate() {
            if !(b.lo <= b.hi) || !b.is_within(&unit) {
                return bad(format!("theta_box[{l}] must be an interval inside [0, 1]"));
            }
            if !b.contains(*t) {
                return bad(format!("theta0[{l}] = {t} lies outside theta_box"));
            }
        }
        if !(self.z_support.len() > 0.0) || !self.z_support.is_within(&unit) {
            return bad("z_support must be a nonempty interval inside [0, 1]".into());
        }
        match &self.noise {
            NoiseLaw::Uniform { lo, hi } if !(lo < hi) => {
                return bad("uniform noise needs lo < hi".into());
            }
            _ => {}
        }
        if !self.noise.support().is_within(&self.z_support) {
            return bad("noise support must lie inside z_support".into());
        }
        match &self.covariates {
            CovariateLaw::UniformBox(b) => {
                if b.len() != self.d {
                    return bad(format!("covariate box must have {} entries", self.d));
                }
                let half = Interval::new(-0.5, 0.5);
                if b.iter().any(|iv| !(iv.lo <= iv.hi) || !iv.is_within(&half)) {
                    return bad("covariate box must lie inside [-1/2, 1/2]^d".into());
                }
            }
            CovariateLaw::Spherical { radius } => {
                if !(radius.lo <= radius.hi) || !radius.is_within(&Interval::new(0.0, 0.5)) {
                    return bad("generating radius must lie inside [0, 1/2]".into());
                }
            }
            CovariateLaw::StandardNormal => {}
        }
        Ok(())
    }

    /// Bounding box of the covariate support, if bounded.
    pub fn covariate_box(&self) -> Option<Vec<Interval>> {
        self.covariates.bounding_box(self.d)
    }
}

/// One customer arrival: observed covariates and the latent residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub covariate: Vec<f64>,
    pub latent_z: f64,
}

/// Draw one arrival.
pub fn sample_arrival<R: Rng + ?Sized>(spec: &EnvironmentSpec, rng: &mut R) -> Arrival {
    let mut covariate = vec![0.0; spec.d];
    let latent_z = sample_arrival_into(spec, &mut covariate, rng);
    Arrival {
        covariate,
        latent_z,
    }
}

/// Allocation-free variant of [`sample_arrival`]; returns the residual.
pub fn sample_arrival_into<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    covariate: &mut [f64],
    rng: &mut R,
) -> f64 {
    spec.covariates.sample_into(covariate, rng);
    spec.noise.sample(rng)
}

/// Result of offering one price.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketOutcome {
    pub covariate: Vec<f64>,
    pub price: f64,
    pub sale: bool,
    pub revenue: f64,
    /// Diagnostic only; policies never see it.
    pub latent_valuation: f64,
}

#[inline]
pub fn valuation(latent_z: f64, theta0: &[f64], covariate: &[f64]) -> f64 {
    latent_z * exp(dot(theta0, covariate))
}

/// Offer `price` to a customer with the given covariates and residual.
pub fn transact(
    covariate: &[f64],
    latent_z: f64,
    theta0: &[f64],
    price: f64,
) -> Result<MarketOutcome> {
    if !(price > 0.0) {
        return Err(Error::NonPositivePrice(price));
    }
    let v = valuation(latent_z, theta0, covariate);
    let sale = v >= price;
    Ok(MarketOutcome {
        covariate: covariate.to_vec(),
        price,
        sale,
        revenue: if sale { price } else { 0.0 },
        latent_valuation: v,
    })
}

/// `F(z) = z * P(Z >= z)`.
pub fn revenue_curve_f(noise: &NoiseLaw, z: f64) -> f64 {
    noise.revenue_curve(z)
}

/// Maximizer of `F` over the residual support: dense scan, then golden-section
/// refinement around the best grid point. Ties go to the smallest maximizer.
pub fn oracle_z_star(noise: &NoiseLaw) -> f64 {
    let support = noise.support();
    let f = |z: f64| noise.revenue_curve(z);
    let step = support.len() / ORACLE_GRID_POINTS as f64;
    let point = |i: usize| {
        if i == ORACLE_GRID_POINTS {
            support.hi
        } else {
            support.lo + step * i as f64
        }
    };
    let mut best_i = 0;
    let mut best_f = f(point(0));
    for i in 1..=ORACLE_GRID_POINTS {
        let v = f(point(i));
        if v > best_f {
            best_i = i;
            best_f = v;
        }
    }
    let (mut a, mut b) = (
        point(best_i.saturating_sub(1)),
        point((best_i + 1).min(ORACLE_GRID_POINTS)),
    );
    let ratio = (sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut e = a + ratio * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    while b - a > ORACLE_TOLERANCE {
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + ratio * (b - a);
            fe = f(e);
        }
    }
    let refined = 0.5 * (a + b);
    if f(refined) > best_f {
        refined
    } else {
        point(best_i)
    }
}

/// Oracle price `z* * exp(theta0 . x)`.
pub fn oracle_price(z_star: f64, theta0: &[f64], covariate: &[f64]) -> f64 {
    debug_assert!(z_star > 0.0);
    valuation(z_star, theta0, covariate)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// A fixed batch of covariate draws. Evaluating several `(z, theta)` pairs on
/// the same batch gives common-random-number comparisons.
#[derive(Debug, Clone)]
pub struct CovariateSample {
    d: usize,
    draws: Vec<f64>,
}

impl CovariateSample {
    pub fn draw<R: Rng + ?Sized>(spec: &EnvironmentSpec, count: usize, rng: &mut R) -> Self {
        let mut draws = vec![0.0; spec.d * count];
        for x in draws.chunks_exact_mut(spec.d) {
            spec.covariates.sample_into(x, rng);
        }
        CovariateSample { d: spec.d, draws }
    }

    pub fn len(&self) -> usize {
        self.draws.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// `r(z, theta) = E[exp(theta0 . X) F(exp(-(theta0 - theta) . X) z)]`,
    /// with the residual integrated exactly through `F`.
    pub fn expected_revenue(
        &self,
        noise: &NoiseLaw,
        theta0: &[f64],
        z: f64,
        theta: &[f64],
    ) -> Estimate {
        let m = self.len() as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for x in self.draws.chunks_exact(self.d) {
            let a = dot(theta0, x);
            let b = dot(theta, x);
            let v = exp(a) * noise.revenue_curve(exp(b - a) * z);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / m;
        let var = if m > 1.0 {
            ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: sqrt(var / m),
        }
    }
}

/// Monte Carlo estimate of the expected single-transaction revenue `r(z, theta)`.
pub fn expected_revenue<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    z: f64,
    theta: &[f64],
    mc_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if mc_samples == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let sample = CovariateSample::draw(spec, mc_samples, rng);
    Ok(sample.expected_revenue(&spec.noise, &spec.theta0, z, theta))
}

/// Closed-form revenue for spherical covariates and uniform `[0, 1)` residuals:
/// `z psi(|theta|^2) - z^2 psi(|2 theta - theta0|^2)`, where `psi` maps
/// `|s|^2` to `E[exp(s . X)]`.
///
/// Exact while `z * exp((theta - theta0) . x) <= 1` on the covariate support,
/// i.e. while the price never exceeds every attainable valuation.
pub fn analytic_revenue_spherical<M: Fn(f64) -> f64>(
    z: f64,
    theta: &[f64],
    theta0: &[f64],
    mgf: M,
) -> f64 {
    let sq_theta: f64 = theta.iter().map(|t| t * t).sum();
    let sq_shift: f64 = theta
        .iter()
        .zip(theta0)
        .map(|(t, t0)| {
            let s = 2.0 * t - t0;
            s * s
        })
        .sum();
    z * mgf(sq_theta) - z * z * mgf(sq_shift)
}

/// MGF radial function of the standard normal vector: `exp(q / 2)`.
pub fn standard_normal_mgf(q: f64) -> f64 {
    exp(0.5 * q)
}

/// Tabulated radial MGF of a spherical law, `psi(q) = E[exp(sqrt(q) X_1)]`,
/// on knots spanning `[0, 4d]` with linear interpolation.
#[derive(Debug, Clone)]
pub struct SphericalMgf {
    q_max: f64,
    values: Vec<f64>,
}

impl SphericalMgf {
    pub const DEFAULT_KNOTS: usize = 401;
    pub const DEFAULT_SAMPLES: usize = 100_000;

    /// All knots share one batch of `samples` draws of `X_1`.
    pub fn tabulate<R: Rng + ?Sized>(
        d: usize,
        radius: Interval,
        knots: usize,
        samples: usize,
        rng: &mut R,
    ) -> Self {
        assert!(knots >= 2 && samples >= 1);
        let law = CovariateLaw::Spherical { radius };
        let mut x = vec![0.0; d];
        let first: Vec<f64> = (0..samples)
            .map(|_| {
                law.sample_into(&mut x, rng);
                x[0]
            })
            .collect();
        let q_max = 4.0 * d as f64;
        let values = (0..knots)
            .map(|k| {
                let s = sqrt(q_max * k as f64 / (knots - 1) as f64);
                first.iter().map(|&x1| exp(s * x1)).sum::<f64>() / samples as f64
            })
            .collect();
        SphericalMgf { q_max, values }
    }

    pub fn eval(&self, q: f64) -> f64 {
        let segments = (self.values.len() - 1) as f64;
        let pos = (q / self.q_max * segments).max(0.0);
        let i = (pos as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }
}

/// Bounds on attainable valuations together with the smoothness constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    pub alpha1: f64,
    pub alpha2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl AssumptionConstants {
    pub fn new(alpha1: f64, alpha2: f64, kappa1: f64, kappa2: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha1 <= alpha2 && alpha2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < alpha1 <= alpha2, got {alpha1}, {alpha2}"
            )));
        }
        if !(kappa1 > 0.0 && kappa1 <= kappa2 && kappa2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < kappa1 <= kappa2, got {kappa1}, {kappa2}"
            )));
        }
        Ok(AssumptionConstants {
            alpha1,
            alpha2,
            kappa1,
            kappa2,
        })
    }
}

/// Lower and upper bounds of `z exp(theta . x)` over the support boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuationBounds {
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Per-coordinate range of `theta_l * x_l` over a rectangle; bilinear, so the
/// extremes sit on corners.
pub(crate) fn product_range(theta: Interval, x: Interval) -> (f64, f64) {
    let c = [theta.lo * x.lo, theta.lo * x.hi, theta.hi * x.lo, theta.hi * x.hi];
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `alpha1 = min z exp(theta . x)` and `alpha2 = max z exp(theta . x)` over
/// `z_support x theta_box x x_box`. A zero lower residual bound is replaced by
/// `z_floor` when one is given and reported as degenerate otherwise.
pub fn alpha_bounds(
    z_support: Interval,
    theta_box: &[Interval],
    x_box: &[Interval],
    z_floor: Option<f64>,
) -> Result<ValuationBounds> {
    if theta_box.len() != x_box.len() {
        return Err(Error::InvalidArgument(
            "theta_box and x_box dimensions differ".into(),
        ));
    }
    let z_lo = if z_support.lo > 0.0 {
        z_support.lo
    } else {
        match z_floor {
            Some(f) if f > 0.0 => f,
            _ => {
                return Err(Error::DegenerateBounds(
                    "z support starts at 0 and no floor is configured".into(),
                ))
            }
        }
    };
    let (mut lo, mut hi) = (0.0, 0.0);
    for (t, x) in theta_box.iter().zip(x_box) {
        let (a, b) = product_range(*t, *x);
        lo += a;
        hi += b;
    }
    Ok(ValuationBounds {
        alpha1: z_lo * exp(lo),
        alpha2: z_support.hi * exp(hi),
    })
}

/// Reversed total order, so `BinaryHeap<MinF64>` peeks at the smallest value.
#[derive(PartialEq)]
struct MinF64(f64);

impl Eq for MinF64 {}

impl PartialOrd for MinF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MinF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// High-probability valuation ceiling for unbounded covariates: an upper
/// estimate of the `1 - 1/n^2` quantile of
/// `W = sup_{z, theta} z exp(theta . X)`.
///
/// Takes the `ceil(mc_samples / n^2)`-th largest of `mc_samples` draws of `W`
/// and inflates it by 5%.
pub fn alpha_prime_subgaussian<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    n: u64,
    mc_samples: u64,
    rng: &mut R,
) -> Result<f64> {
    let n_sq = n.saturating_mul(n);
    let needed = n_sq.saturating_mul(10);
    if mc_samples < needed {
        return Err(Error::TooFewSamples {
            needed,
            got: mc_samples,
        });
    }
    let keep = mc_samples.div_ceil(n_sq) as usize;
    let mut top: BinaryHeap<MinF64> = BinaryHeap::with_capacity(keep + 1);
    let mut x = vec![0.0; spec.d];
    for _ in 0..mc_samples {
        spec.covariates.sample_into(&mut x, rng);
        let exponent: f64 = spec
            .theta_box
            .iter()
            .zip(&x)
            .map(|(t, &xl)| (t.lo * xl).max(t.hi * xl))
            .sum();
        let w = spec.z_support.hi * exp(exponent);
        if top.len() < keep {
            top.push(MinF64(w));
        } else if top.peek().is_some_and(|m| w > m.0) {
            top.pop();
            top.push(MinF64(w));
        }
    }
    let kth = top.peek().map(|m| m.0).unwrap_or(0.0);
    Ok(1.05 * kth)
}

/// Empirical smoothness constants from random probes of the revenue gap
/// `r(z*, theta0) - r(z, theta)`, all evaluated on one covariate batch.
///
/// `kappa1` is the smallest ratio of the gap to
/// `max((z* - z)^2, max_l (theta0_l - theta_l)^2)` and `kappa2` the largest
/// ratio of the gap to `|(z* - z, theta0 - theta)|^2 / (d + 1)`. Gaps that the
/// Monte Carlo error drives nonpositive are floored at `1e-6`.
pub fn estimate_kappas<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    z_star: f64,
    probes: usize,
    mc_samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let sample = CovariateSample::draw(spec, mc_samples.max(1), rng);
    let best = sample
        .expected_revenue(&spec.noise, &spec.theta0, z_star, &spec.theta0)
        .mean;
    let mut theta = vec![0.0; spec.d];
    let (mut k1, mut k2) = (f64::INFINITY, 0.0f64);
    for _ in 0..probes {
        let u: f64 = rng.sample(Open01);
        let z = spec.z_support.lo + spec.z_support.len() * u;
        for (t, b) in theta.iter_mut().zip(&spec.theta_box) {
            let u: f64 = rng.random();
            *t = b.lo + (b.hi - b.lo) * u;
        }
        let gap = best - sample.expected_revenue(&spec.noise, &spec.theta0, z, &theta).mean;
        let dz = z_star - z;
        let max_sq = theta
            .iter()
            .zip(&spec.theta0)
            .map(|(t, t0)| (t0 - t) * (t0 - t))
            .fold(dz * dz, f64::max);
        let sum_sq: f64 = dz * dz
            + theta
                .iter()
                .zip(&spec.theta0)
                .map(|(t, t0)| (t0 - t) * (t0 - t))
                .sum::<f64>();
        if max_sq < 1e-12 {
            continue;
        }
        let gap = gap.max(1e-6 * max_sq);
        k1 = k1.min(gap / max_sq);
        k2 = k2.max(gap * (spec.d as f64 + 1.0) / sum_sq);
    }
    if !k1.is_finite() {
        k1 = 1e-6;
    }
    (k1, k2.max(k1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use core::f64::consts::{E, FRAC_1_SQRT_2, SQRT_2};

    fn normal_spec() -> EnvironmentSpec {
        EnvironmentSpec {
            d: 2,
            theta0: vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            covariates: CovariateLaw::StandardNormal,
            noise: NoiseLaw::Uniform { lo: 0.0, hi: 1.0 },
            horizon: 100,
            theta_box: vec![Interval::new(0.0, 1.0); 2],
            z_support: Interval::new(0.0, 1.0),
        }
    }

    #[test]
    fn arrivals_respect_support_and_seed() {
        let spec = normal_spec();
        let mut rng = seeded(42);
        for _ in 0..1000 {
            let a = sample_arrival(&spec, &mut rng);
            assert!((0.0..=1.0).contains(&a.latent_z));
            assert_eq!(a.covariate.len(), 2);
            assert!(a.covariate.iter().all(|x| x.is_finite()));
        }
        let a = sample_arrival(&spec, &mut seeded(42));
        let b = sample_arrival(&spec, &mut seeded(42));
        assert_eq!(a, b);
    }

    #[test]
    fn transact_boundaries() {
        let out = transact(&[0.0], 0.9, &[1.0], 0.5).unwrap();
        assert!(out.sale);
        assert_eq!(out.revenue, 0.5);
        let out = transact(&[0.0], 0.9, &[1.0], 0.9).unwrap();
        assert!(out.sale);
        assert_eq!(out.revenue, 0.9);

        let out = transact(&[1.0, 1.0], 0.5, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], 3.0).unwrap();
        assert!((out.latent_valuation - 0.5 * exp(SQRT_2)).abs() < 1e-12);
        assert!((out.latent_valuation - 2.0566).abs() < 1e-4);
        assert!(!out.sale);
        assert_eq!(out.revenue, 0.0);

        assert_eq!(
            transact(&[0.0], 0.5, &[1.0], 0.0),
            Err(Error::NonPositivePrice(0.0))
        );
        assert!(transact(&[0.0], 0.5, &[1.0], -1.0).is_err());
    }

    #[test]
    fn revenue_curve_uniform() {
        let u = NoiseLaw::Uniform { lo: 0.0, hi: 1.0 };
        assert_eq!(revenue_curve_f(&u, 0.5), 0.25);
        assert_eq!(revenue_curve_f(&u, 0.0), 0.0);
        assert_eq!(revenue_curve_f(&u, 1.0), 0.0);
        for i in 0..1000 {
            let z = i as f64 / 1000.0;
            assert!((revenue_curve_f(&u, z) - z * (1.0 - z)).abs() < 1e-12);
        }
        let p = NoiseLaw::piecewise(vec![0.0, 0.5, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!(revenue_curve_f(&p, 0.0), 0.0);
        // mass 1/4 on the lower half, 3/4 on the upper half
        assert!((p.survival(0.5) - 0.75).abs() < 1e-12);
        assert!((p.survival(0.25) - 0.875).abs() < 1e-12);
    }

    #[test]
    fn oracle_uniform_is_half() {
        let z = oracle_z_star(&NoiseLaw::Uniform { lo: 0.0, hi: 1.0 });
        assert!((z - 0.5).abs() < 1e-6);
    }

    #[test]
    fn oracle_near_point_mass() {
        // F(z) = z up to the atom, then collapses.
        let c = 0.7;
        let z = oracle_z_star(&NoiseLaw::Uniform { lo: c - 1e-7, hi: c });
        assert!((z - c).abs() < 2e-6, "{z}");
    }

    #[test]
    fn oracle_matches_brute_force_grid() {
        let law = NoiseLaw::Uniform { lo: 0.5, hi: 1.0 };
        let m = 1_000_000;
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=m {
            let z = i as f64 / m as f64;
            let v = law.revenue_curve(z);
            if v > best {
                best = v;
                arg = z;
            }
        }
        assert!((oracle_z_star(&law) - arg).abs() < 1e-4);
    }

    #[test]
    fn oracle_ties_go_low() {
        // Half the mass on [1/4, 3/8], half on [1/2, 5/8]: F(1/4) = F(1/2) = 1/4
        // are both global maxima.
        let law = NoiseLaw::piecewise(
            vec![0.0, 0.25, 0.375, 0.5, 0.625, 1.0],
            &[0.0, 4.0, 0.0, 4.0, 0.0],
        )
        .unwrap();
        assert_eq!(law.revenue_curve(0.25), 0.25);
        assert_eq!(law.revenue_curve(0.5), 0.25);
        assert!((oracle_z_star(&law) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn oracle_kink_maximizer() {
        // F(z) = z up to 0.4, decreasing afterwards.
        let law = NoiseLaw::piecewise(vec![0.0, 0.4, 0.6, 1.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((oracle_z_star(&law) - 0.4).abs() < 1e-6);
    }

    #[test]
    fn oracle_prices() {
        assert_eq!(oracle_price(0.5, &[1.0, 1.0], &[0.0, 0.0]), 0.5);
        let p = oracle_price(0.5, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], &[1.0, 1.0]);
        assert!((p - 2.0566).abs() < 1e-4);
        let p = oracle_price(0.5, &[1.0, 0.0], &[-0.5, 0.3]);
        assert!((p - 0.30327).abs() < 1e-5);
    }

    #[test]
    fn expected_revenue_lognormal_mean() {
        let spec = normal_spec();
        let est = expected_revenue(&spec, 0.5, &spec.theta0, 200_000, &mut seeded(1)).unwrap();
        let truth = 0.25 * exp(0.5);
        assert!((truth - 0.41218).abs() < 1e-5);
        assert!(
            (est.mean - truth).abs() < 3.0 * est.std_error,
            "{est:?} vs {truth}"
        );
        let zero = expected_revenue(&spec, 0.0, &[0.3, 0.9], 100, &mut seeded(1)).unwrap();
        assert_eq!(zero.mean, 0.0);
        assert!(expected_revenue(&spec, 0.5, &spec.theta0, 0, &mut seeded(1)).is_err());
    }

    #[test]
    fn analytic_spherical_reductions() {
        let t0 = [0.6, 0.8];
        let psi = |q: f64| 1.0 + 0.1 * q;
        let at = |z: f64| analytic_revenue_spherical(z, &t0, &t0, psi);
        let scale = psi(1.0);
        assert!((at(0.3) - 0.3 * 0.7 * scale).abs() < 1e-12);
        let best = (0..=100)
            .map(|i| i as f64 / 100.0)
            .max_by(|a, b| at(*a).total_cmp(&at(*b)))
            .unwrap();
        assert_eq!(best, 0.5);
        assert_eq!(analytic_revenue_spherical(0.0, &[0.2, 0.1], &t0, psi), 0.0);
        let flat = analytic_revenue_spherical(0.3, &[0.2, 0.1], &t0, |_| 1.0);
        assert!((flat - 0.3 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn spherical_mgf_table_is_consistent() {
        let mut rng = seeded(3);
        let table = SphericalMgf::tabulate(2, Interval::new(0.0, 0.5), 101, 20_000, &mut rng);
        assert!((table.eval(0.0) - 1.0).abs() < 1e-12);
        // psi is increasing and convex in q
        let v: Vec<f64> = (0..8).map(|i| table.eval(i as f64)).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn alpha_bounds_examples() {
        let b = alpha_bounds(
            Interval::new(0.1, 1.0),
            &[Interval::new(0.0, 1.0); 2],
            &[Interval::new(-0.5, 0.5); 2],
            None,
        )
        .unwrap();
        assert!((b.alpha1 - 0.1 * exp(-1.0)).abs() < 1e-12);
        assert!((b.alpha2 - E).abs() < 1e-12);

        // corner-enumeration oracle over every sign pattern
        let zs = [0.1, 1.0];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for mask in 0..16u32 {
            let t = [(mask & 1) as f64, ((mask >> 1) & 1) as f64];
            let x = [
                if mask & 4 == 0 { -0.5 } else { 0.5 },
                if mask & 8 == 0 { -0.5 } else { 0.5 },
            ];
            for z in zs {
                let v = z * exp(dot(&t, &x));
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert!((b.alpha1 - lo).abs() < 1e-15 && (b.alpha2 - hi).abs() < 1e-15);

        let b = alpha_bounds(
            Interval::new(0.2, 0.9),
            &[Interval::new(0.0, 1.0)],
            &[Interval::new(0.0, 0.0)],
            None,
        )
        .unwrap();
        assert_eq!((b.alpha1, b.alpha2), (0.2, 0.9));

        let b = alpha_bounds(
            Interval::new(0.5, 0.5),
            &[Interval::new(1.0, 1.0)],
            &[Interval::new(0.0, 0.5)],
            None,
        )
        .unwrap();
        assert_eq!(b.alpha1, 0.5);
        assert!((b.alpha2 - 0.82436).abs() < 1e-5);
    }

    #[test]
    fn alpha_bounds_zero_floor() {
        let z = Interval::new(0.0, 1.0);
        let t = [Interval::new(0.0, 1.0)];
        let x = [Interval::new(-0.5, 0.5)];
        assert!(matches!(
            alpha_bounds(z, &t, &x, None),
            Err(Error::DegenerateBounds(_))
        ));
        let b = alpha_bounds(z, &t, &x, Some(DEFAULT_Z_FLOOR)).unwrap();
        assert!((b.alpha1 - 1e-3 * exp(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn alpha_prime_bounded_and_degenerate() {
        let mut spec = normal_spec();
        spec.covariates = CovariateLaw::UniformBox(vec![Interval::new(-0.5, 0.5); 2]);
        let a2 = alpha_bounds(
            spec.z_support,
            &spec.theta_box,
            &spec.covariate_box().unwrap(),
            Some(DEFAULT_Z_FLOOR),
        )
        .unwrap()
        .alpha2;
        let ap = alpha_prime_subgaussian(&spec, 10, 2000, &mut seeded(5)).unwrap();
        assert!(ap <= 1.05 * a2);

        spec.covariates = CovariateLaw::UniformBox(vec![Interval::new(0.0, 0.0); 2]);
        let ap = alpha_prime_subgaussian(&spec, 10, 1000, &mut seeded(5)).unwrap();
        assert!((ap - 1.05).abs() < 1e-12);

        assert_eq!(
            alpha_prime_subgaussian(&spec, 10, 999, &mut seeded(5)),
            Err(Error::TooFewSamples {
                needed: 1000,
                got: 999
            })
        );
    }

    #[test]
    fn spec_validation() {
        let mut spec = normal_spec();
        assert!(spec.validate().is_ok());
        spec.theta0[0] = 1.5;
        assert!(spec.validate().is_err());
        let mut spec = normal_spec();
        spec.covariates = CovariateLaw::UniformBox(vec![Interval::new(-0.6, 0.5); 2]);
        assert!(spec.validate().is_err());
        let mut spec = normal_spec();
        spec.z_support = Interval::new(0.2, 1.0);
        assert!(spec.validate().is_err(), "noise support outside z_support");
    }

    #[test]
    fn kappa_estimates_are_ordered() {
        let spec = EnvironmentSpec {
            d: 1,
            theta0: vec![0.5],
            covariates: CovariateLaw::UniformBox(vec![Interval::new(-0.5, 0.5)]),
            noise: NoiseLaw::Uniform { lo: 0.0, hi: 1.0 },
            horizon: 10,
            theta_box: vec![Interval::new(0.0, 1.0)],
            z_support: Interval::new(0.0, 1.0),
        };
        let (k1, k2) = estimate_kappas(&spec, 0.5, 200, 5000, &mut seeded(9));
        assert!(k1 > 0.0 && k1 <= k2 && k2.is_finite());
    }
}
