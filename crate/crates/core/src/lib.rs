//! Semi-parametric contextual pricing with censored (sale / no-sale) feedback.
//!
//! A customer arriving with covariates `x` values the product at
//! `V = z * exp(theta0 . x)`, where `z` is an unobserved residual drawn from an
//! unknown law on `[0, 1]`. The seller posts a price, observes only whether a
//! sale happened, and is judged against a clairvoyant oracle that knows
//! `theta0` and the residual law.
//!
//! The crate is `no_std` (it needs `alloc`) and contains:
//!
//! - [`model`]: the generative market, the oracle, revenue functions and the
//!   valuation-bound constants.
//! - [`grid`]: the `n^(-1/4)` discretization of the (z, theta) arm space and
//!   price-interval unions with exact Lebesgue-uniform sampling.
//! - [`estimator`]: the one-bit sparse estimator (a linear objective over the
//!   intersection of an L1 and an L2 ball), solved exactly and certified.
//! - [`policies`]: the arm-elimination pricing policies and baselines.
//! - [`harness`]: coupled regret episodes, replications, summaries and the
//!   regret bound.
//!
//! File formats, configuration and parallel execution live in the `pricelab`
//! companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod estimator;
pub mod grid;
pub mod harness;
pub(crate) mod math;
pub mod model;
pub mod policies;
pub mod rng;

pub use error::{Error, Result};
