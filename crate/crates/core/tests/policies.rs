use pricelab_core::estimator::BallConstraints;
use pricelab_core::grid::{build_partition, CellGrid, Interval};
use pricelab_core::harness::{run_episode, Market};
use pricelab_core::model::{
    sample_arrival, transact, AssumptionConstants, CovariateLaw, EnvironmentSpec, NoiseLaw,
};
use pricelab_core::policies::{
    compute_gamma, DecoupledDeepC, DeepC, DeepCRounds, Feedback, PolicySpec, PricingPolicy,
    SparseDeepC,
};
use pricelab_core::rng::{seeded, stream, Purpose};
use proptest::prelude::*;
use rand::Rng;

fn bounded_spec(d: usize, n: usize) -> EnvironmentSpec {
    EnvironmentSpec {
        d,
        theta0: vec![0.5; d],
        covariates: CovariateLaw::UniformBox(vec![Interval::new(-0.5, 0.5); d]),
        noise: NoiseLaw::Uniform { lo: 0.0, hi: 1.0 },
        horizon: n,
        theta_box: vec![Interval::new(0.0, 1.0); d],
        z_support: Interval::new(0.0, 1.0),
    }
}

fn normal_spec(theta0: Vec<f64>, n: usize) -> EnvironmentSpec {
    let d = theta0.len();
    EnvironmentSpec {
        d,
        theta0,
        covariates: CovariateLaw::StandardNormal,
        noise: NoiseLaw::Uniform { lo: 0.0, hi: 1.0 },
        horizon: n,
        theta_box: vec![Interval::new(0.0, 1.0); d],
        z_support: Interval::new(0.0, 1.0),
    }
}

fn all_specs(d: usize) -> Vec<PolicySpec> {
    let balls = BallConstraints::for_sparsity(d).unwrap();
    vec![
        PolicySpec::Oracle,
        PolicySpec::UniformRandom,
        PolicySpec::FixedPrice { price: 0.4 },
        PolicySpec::DeepC { gamma: 0.05 },
        PolicySpec::DeepCRounds {
            gamma: 0.01,
            round_cap: None,
        },
        PolicySpec::Decoupled {
            gamma: 0.05,
            balls,
            explore: Interval::new(0.05, 1.5),
        },
        PolicySpec::Sparse { gamma: 0.05, balls },
    ]
}

/// Prices of `policy` when fed the given covariates and sale indicators.
fn replay(
    policy: &PolicySpec,
    market: &Market,
    log: &[(Vec<f64>, bool)],
    seed: u64,
) -> Vec<f64> {
    let mut p = market.build_policy(policy).unwrap();
    let mut rng = seeded(seed);
    log.iter()
        .map(|(x, sale)| {
            let price = p.next_price(x, &mut rng);
            p.update(Feedback {
                covariate: x,
                price,
                sale: *sale,
            });
            price
        })
        .collect()
}

#[test]
fn replay_reproduces_prices() {
    let market = Market::new(bounded_spec(2, 400)).unwrap();
    let mut arrivals = seeded(5);
    for policy in all_specs(2) {
        // log a live run, then replay the logged (covariate, sale) stream
        let mut p = market.build_policy(&policy).unwrap();
        let mut rng = seeded(99);
        let mut log = Vec::new();
        let mut prices = Vec::new();
        for _ in 0..400 {
            let a = sample_arrival(&market.spec, &mut arrivals);
            let price = p.next_price(&a.covariate, &mut rng);
            let out = transact(&a.covariate, a.latent_z, &market.spec.theta0, price).unwrap();
            p.update(Feedback {
                covariate: &a.covariate,
                price,
                sale: out.sale,
            });
            prices.push(price);
            log.push((a.covariate, out.sale));
        }
        assert_eq!(replay(&policy, &market, &log, 99), prices, "{}", policy.name());
    }
}

#[test]
fn prices_are_positive_and_finite() {
    for policy in all_specs(2) {
        let market = Market::new(normal_spec(vec![0.6, 0.8], 2000)).unwrap();
        let mut p = market.build_policy(&policy).unwrap();
        let mut a = stream(3, 0, Purpose::Arrivals);
        let mut r = stream(3, 0, Purpose::Policy);
        let trace = run_episode(&market, p.as_mut(), &mut a, &mut r, true).unwrap();
        assert!(trace.steps.iter().all(|s| s.price > 0.0 && s.price.is_finite()));
    }
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    small.iter().all(|c| big.contains(c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn deepc_elimination_is_monotone(seed in any::<u64>(), gamma in 0.001f64..0.2) {
        let spec = bounded_spec(1, 625);
        let grid = CellGrid::new(spec.z_support, &spec.theta_box, spec.horizon).unwrap();
        let mut p = DeepC::new(grid, gamma);
        let mut a = seeded(seed);
        let mut r = seeded(seed.wrapping_add(1));
        let mut prev = p.active().to_vec();
        for _ in 0..spec.horizon {
            let arr = sample_arrival(&spec, &mut a);
            let price = p.next_price(&arr.covariate, &mut r);
            let sale = transact(&arr.covariate, arr.latent_z, &spec.theta0, price).unwrap().sale;
            p.update(Feedback { covariate: &arr.covariate, price, sale });
            prop_assert!(!p.active().is_empty());
            prop_assert!(is_subset(p.active(), &prev));
            prev = p.active().to_vec();
        }
    }

    #[test]
    fn rounds_record_once_per_round(seed in any::<u64>(), gamma in 0.0005f64..0.05) {
        let spec = bounded_spec(1, 625);
        let grid = CellGrid::new(spec.z_support, &spec.theta_box, spec.horizon).unwrap();
        let mut p = DeepCRounds::new(grid, gamma, spec.horizon, spec.horizon).unwrap();
        let mut a = seeded(seed);
        let mut r = seeded(seed.wrapping_add(1));
        let mut prev = p.active_cells().to_vec();
        for _ in 0..spec.horizon {
            let arr = sample_arrival(&spec, &mut a);
            let price = p.next_price(&arr.covariate, &mut r);
            let sale = transact(&arr.covariate, arr.latent_z, &spec.theta0, price).unwrap().sale;
            let closed = p.observe(Feedback { covariate: &arr.covariate, price, sale });
            prop_assert!(!p.active_cells().is_empty());
            prop_assert!(is_subset(p.active_cells(), &prev));
            if closed.is_some() {
                let completed = p.round() - 1;
                for &c in p.active_cells() {
                    prop_assert_eq!(p.recorded(c), completed);
                }
            }
            prev = p.active_cells().to_vec();
        }
        prop_assert_eq!(p.capped_rounds(), 0);
    }

    #[test]
    fn residual_bandits_shrink_monotonically(seed in any::<u64>()) {
        let n = 1000;
        let spec = normal_spec(vec![0.6, 0.8], n);
        let balls = BallConstraints::for_sparsity(2).unwrap();
        let axis = build_partition(spec.z_support, n).unwrap();
        let mut dec = DecoupledDeepC::new(axis.clone(), n, 0.02, balls, Interval::new(0.05, 2.0), 2).unwrap();
        let mut sp = SparseDeepC::new(axis, 0.02, balls, 2);
        let mut a = seeded(seed);
        let mut r = seeded(seed.wrapping_add(1));
        let (mut prev_d, mut prev_s) = (dec.bandit().active().to_vec(), sp.bandit().active().to_vec());
        for _ in 0..n {
            let arr = sample_arrival(&spec, &mut a);
            for p in [&mut dec as &mut dyn PricingPolicy, &mut sp] {
                let price = p.next_price(&arr.covariate, &mut r);
                let sale = transact(&arr.covariate, arr.latent_z, &spec.theta0, price).unwrap().sale;
                p.update(Feedback { covariate: &arr.covariate, price, sale });
            }
            prop_assert!(!dec.bandit().active().is_empty() && !sp.bandit().active().is_empty());
            prop_assert!(is_subset(dec.bandit().active(), &prev_d));
            prop_assert!(is_subset(sp.bandit().active(), &prev_s));
            prev_d = dec.bandit().active().to_vec();
            prev_s = sp.bandit().active().to_vec();
        }
    }
}

#[test]
fn rounds_hit_frequencies_follow_lengths() {
    // x = 0: the two active z rows map to [0, 0.2] and [0.6, 0.8]
    let n = 625;
    let grid = CellGrid::new(Interval::new(0.0, 1.0), &[Interval::new(0.0, 1.0)], n).unwrap();
    let mut p = DeepCRounds::new(grid, 1.0, n, n).unwrap();
    p.restrict(vec![0, 3], vec![vec![0, 1, 2, 3, 4]]);
    let mut rng = seeded(8);
    let draws = 10_000;
    let low = (0..draws)
        .filter(|_| p.next_price(&[0.0], &mut rng) <= 0.2 + 1e-12)
        .count() as f64;
    let sigma = (draws as f64 * 0.25).sqrt();
    assert!((low - 0.5 * draws as f64).abs() < 3.0 * sigma);
}

/// With no covariates the round-based policy is a residual-price eliminator;
/// with the prescribed confidence scale the cell holding z* must survive.
#[test]
fn rounds_keep_z_star_without_covariates() {
    let n = 10_000;
    let spec = EnvironmentSpec {
        covariates: CovariateLaw::UniformBox(vec![Interval::new(0.0, 0.0)]),
        ..bounded_spec(1, n)
    };
    let market = Market::new(spec).unwrap();
    // alpha1 from the 1e-3 residual floor, alpha2 = 1; kappas of F(z) = z(1 - z)
    // around z* = 1/2, where the gap is exactly (z - 1/2)^2.
    let c = AssumptionConstants::new(1e-3, 1.0, 1.0, 1.0).unwrap();
    let gamma = compute_gamma(&c, n).unwrap();
    let mut kept = 0;
    for seed in 0..100 {
        let grid = CellGrid::new(market.spec.z_support, &market.spec.theta_box, n).unwrap();
        let mut p = DeepCRounds::new(grid, gamma, n, n).unwrap();
        let mut a = stream(seed, 0, Purpose::Arrivals);
        let mut r = stream(seed, 0, Purpose::Policy);
        run_episode(&market, &mut p, &mut a, &mut r, false).unwrap();
        let z_cell = p.grid().z.locate(market.z_star).unwrap();
        if p.active_cells().iter().any(|&c| p.grid().decode(c).z == z_cell) {
            kept += 1;
        }
    }
    assert!(kept >= 95, "z* kept in {kept} of 100");
}

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Exploration-only runs: the one-bit estimate from 10^4 uniform prices
/// points close to the true parameter.
#[test]
fn decoupled_estimate_direction() {
    let n = 1_000_000; // exploration length 10^4
    let theta0 = vec![1.0, 0.0];
    let spec = normal_spec(theta0.clone(), n);
    let balls = BallConstraints::new(2f64.sqrt(), 1.0).unwrap();
    let mut good = 0;
    for seed in 0..100 {
        let axis = build_partition(spec.z_support, n).unwrap();
        let mut p = DecoupledDeepC::new(axis, n, 1.0, balls, Interval::new(0.05, 3.0), 2).unwrap();
        assert_eq!(p.exploration_steps(), 10_000);
        let mut a = seeded(seed);
        let mut r = seeded(seed + 1000);
        for _ in 0..p.exploration_steps() {
            let arr = sample_arrival(&spec, &mut a);
            let price = p.next_price(&arr.covariate, &mut r);
            let sale = transact(&arr.covariate, arr.latent_z, &theta0, price).unwrap().sale;
            p.update(Feedback { covariate: &arr.covariate, price, sale });
        }
        if angle_deg(p.estimate().unwrap(), &theta0) < 15.0 {
            good += 1;
        }
    }
    assert!(good >= 90, "{good} of 100 within 15 degrees");
}

/// Sparse support recovery after 5000 on-policy steps in dimension 100.
#[test]
fn sparse_support_recovery() {
    let d = 100;
    let n = 5000;
    let mut theta0 = vec![0.0; d];
    let support = [3usize, 17, 42, 88];
    for &i in &support {
        theta0[i] = 0.5;
    }
    let market = Market::new(normal_spec(theta0, n)).unwrap();
    let balls = BallConstraints::for_sparsity(4).unwrap();
    let mut good = 0;
    for seed in 0..50 {
        let axis = build_partition(market.spec.z_support, n).unwrap();
        let mut p = SparseDeepC::new(axis, 7.0, balls, d);
        let mut a = stream(seed, 0, Purpose::Arrivals);
        let mut r = stream(seed, 0, Purpose::Policy);
        run_episode(&market, &mut p, &mut a, &mut r, false).unwrap();
        let est = p.estimate().to_vec();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| est[j].abs().total_cmp(&est[i].abs()));
        let hits = order[..4].iter().filter(|i| support.contains(i)).count();
        if hits >= 3 {
            good += 1;
        }
    }
    assert!(good >= 40, "support recovered in {good} of 50");
}

#[test]
fn uniform_baseline_ignores_feedback() {
    let market = Market::new(bounded_spec(2, 100)).unwrap();
    let log: Vec<(Vec<f64>, bool)> = {
        let mut rng = seeded(1);
        (0..100)
            .map(|_| (vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5], rng.random()))
            .collect()
    };
    let flipped: Vec<(Vec<f64>, bool)> = log.iter().map(|(x, s)| (x.clone(), !s)).collect();
    assert_eq!(
        replay(&PolicySpec::UniformRandom, &market, &log, 4),
        replay(&PolicySpec::UniformRandom, &market, &flipped, 4)
    );
}
