mod common;

use rand::Rng;
use riskshare::nash::{self, NashKind};
use riskshare::validation::{self, iterate_best_responses, McConfig, DEFAULT_DAMPING};
use riskshare::{Elasticity, ElasticityVector};

use common::*;

#[test]
fn iteration_limits_match_solver() {
    let mut rng = rng(31);
    let (mut converged, mut total) = (0, 0);
    while total < 500 {
        let (_, e) = any_instance(&mut rng);
        if count_high_betas(&e) > 1 || nash::check_extreme_condition(&e).unwrap().is_some() {
            continue;
        }
        total += 1;
        let s = nash::solve(&e).unwrap();
        let start = ElasticityVector::from_values(&e.deltas).unwrap();
        let trace = iterate_best_responses(&e, &start, DEFAULT_DAMPING, 20_000).unwrap();
        if !trace.converged {
            continue;
        }
        converged += 1;
        for (a, b) in trace.last().iter().zip(s.elasticities.iter()) {
            assert!(a.approx_eq(*b, 1e-7), "{a} vs {b} ({})", s.kind.name());
        }
    }
    // the oracle has no convergence guarantee; it should still settle on most instances
    assert!(converged * 10 >= total * 9, "{converged} of {total} converged");
}

#[test]
fn converged_iterates_are_fixed_points() {
    let mut rng = rng(32);
    for _ in 0..500 {
        let (_, e) = any_instance(&mut rng);
        let start: Vec<f64> = (0..e.num_traders()).map(|_| log_uniform(&mut rng, 0.1, 10.0)).collect();
        let start = ElasticityVector::from_values(&start).unwrap();
        let trace = iterate_best_responses(&e, &start, DEFAULT_DAMPING, 5_000).unwrap();
        if trace.converged {
            nash::verify_fixed_point(&e, trace.last(), 1e-8).unwrap();
            assert!(trace.final_residual < validation::ITERATION_TOL);
        }
    }
}

#[test]
fn iteration_agrees_with_extreme_classification() {
    let mut rng = rng(33);
    let mut seen = 0;
    while seen < 200 {
        let (_, e) = any_instance(&mut rng);
        let Some(k) = nash::check_extreme_condition(&e).unwrap() else { continue };
        seen += 1;
        let start = ElasticityVector::from_values(&e.deltas).unwrap();
        let trace = iterate_best_responses(&e, &start, DEFAULT_DAMPING, 5_000).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.last()[k], Elasticity::Infinite);
        assert!(trace.escalations.iter().any(|x| x.trader == k && x.to == Elasticity::Infinite));
        let s = nash::solve(&e).unwrap();
        assert_eq!(s.kind, NashKind::Extreme { risk_neutral: k });
        for (a, b) in trace.last().iter().zip(s.elasticities.iter()) {
            assert!(a.approx_eq(*b, 1e-9));
        }
    }
}

#[test]
fn monte_carlo_is_bit_reproducible() {
    let cfg = McConfig::new(300_001, 99).unwrap();
    let a = validation::mc_certainty_equivalent(0.4, 2.2, 1.3, &cfg).unwrap();
    let b = validation::mc_certainty_equivalent(0.4, 2.2, 1.3, &cfg).unwrap();
    assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    // the first chunk is independent of the total sample count
    assert_eq!(validation::normal_chunk(99, 0, 10), validation::normal_chunk(99, 0, 20)[..10]);
}

#[test]
fn grid_oracle_on_multi_security_instances() {
    let mut rng = rng(34);
    for _ in 0..100 {
        let (_, e) = any_instance(&mut rng);
        let i = rng.random_range(0..e.num_traders());
        let rest = log_uniform(&mut rng, 0.01, 100.0);
        let closed = riskshare::best_response(&e, i, Elasticity::Finite(rest)).unwrap();
        let grid = validation::grid_best_response(&e, i, rest, validation::GRID_POINTS).unwrap();
        assert!((grid.k - closed.k).abs() < 1e-6, "{} vs {}", grid.k, closed.k);
        assert!(closed.value >= grid.value - 1e-10 * (1.0 + grid.value.abs()));
    }
}
