//! A single trader's strategic problem: choose the elasticity of the
//! submitted demand, given the aggregate elasticity of everyone else.
//!
//! Writing `k = theta_i / (theta_i + theta_rest)` for the trader's share of
//! the aggregate exposure, the post-trade certainty equivalent is
//!
//! ```text
//! V(k) = u_i + <a_i, C a_i> / (2 delta_i)
//!      + <a_I, C a_I> * [ (1 - k) k / theta_rest - k^2 / (2 delta_i) - beta_i (1 - k) / theta_rest ]
//! ```
//!
//! which is strictly concave in `k` whenever `a_I != 0`.

use serde::Serialize;

use crate::elasticity::Elasticity;
use crate::error::{Error, Result};
use crate::market::ExposureProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    InelasticZero,
    Interior,
    RiskNeutralInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponseResult {
    pub theta: Elasticity,
    /// Post-trade beta `theta / (theta + theta_rest)`.
    pub k: f64,
    /// Certainty equivalent at the optimum.
    pub value: f64,
    pub branch: Branch,
}

fn share(theta_i: Elasticity, theta_rest: f64) -> f64 {
    match theta_i {
        Elasticity::Zero => 0.0,
        Elasticity::Finite(t) => t / (t + theta_rest),
        Elasticity::Infinite => 1.0,
    }
}

/// `V_i` as a function of the share `k` in `[0, 1]`.
pub fn response_value_at_share(
    exposures: &ExposureProfile,
    i: usize,
    k: f64,
    theta_rest: f64,
) -> Result<f64> {
    exposures.check_trader(i)?;
    if !(theta_rest > 0.0 && theta_rest.is_finite()) {
        return Err(Error::Domain(format!(
            "aggregate elasticity of the other traders must be positive and finite, got {theta_rest}"
        )));
    }
    let delta = exposures.deltas[i];
    let base = exposures.u[i] + exposures.hedgeable_var[i] / (2.0 * delta);
    let agg = exposures.aggregate_market_variance;
    if exposures.is_trivial {
        return Ok(base);
    }
    let beta = exposures.beta[i];
    let bracket =
        (1.0 - k) * k / theta_rest - k * k / (2.0 * delta) - beta * (1.0 - k) / theta_rest;
    Ok(base + agg * bracket)
}

/// Trader `i`'s certainty equivalent after submitting `theta_i` against an
/// aggregate `theta_rest` of the others. `theta_i` may be zero or infinite.
pub fn response_value(
    exposures: &ExposureProfile,
    i: usize,
    theta_i: Elasticity,
    theta_rest: f64,
) -> Result<f64> {
    response_value_at_share(exposures, i, share(theta_i, theta_rest), theta_rest)
}

/// The unique maximizer of `V_i` over `[0, inf]`.
///
/// `theta_rest` may be infinite (response `delta_i (1 + beta_i)_+`) or zero,
/// the latter only when `beta_i > 1` (response `inf`).
pub fn best_response(
    exposures: &ExposureProfile,
    i: usize,
    theta_rest: Elasticity,
) -> Result<BestResponseResult> {
    exposures.check_trader(i)?;
    let betas = exposures.non_trivial_betas()?;
    let beta = betas[i];
    let delta = exposures.deltas[i];
    let base = exposures.u[i] + exposures.hedgeable_var[i] / (2.0 * delta);
    let agg = exposures.aggregate_market_variance;

    match theta_rest {
        Elasticity::Infinite => {
            // the others absorb everything at zero price; only the first-order
            // term in 1/theta_rest survives, maximized at delta (1 + beta)_+
            let theta = Elasticity::new(delta * (1.0 + beta).max(0.0))?;
            let branch = if theta.is_zero() {
                Branch::InelasticZero
            } else {
                Branch::Interior
            };
            Ok(BestResponseResult {
                theta,
                k: 0.0,
                value: base,
                branch,
            })
        }
        Elasticity::Zero => {
            if beta > 1.0 {
                Ok(BestResponseResult {
                    theta: Elasticity::Infinite,
                    k: 1.0,
                    value: base - agg / (2.0 * delta),
                    branch: Branch::RiskNeutralInfinity,
                })
            } else {
                Err(Error::Domain(format!(
                    "best response to zero aggregate elasticity is only defined for beta > 1 (trader {i} has beta {beta})"
                )))
            }
        }
        Elasticity::Finite(rest) => {
            let (theta, k, branch) = if beta <= -1.0 {
                (Elasticity::Zero, 0.0, Branch::InelasticZero)
            } else if beta >= 1.0 + rest / delta {
                (Elasticity::Infinite, 1.0, Branch::RiskNeutralInfinity)
            } else {
                let theta = delta * rest * (1.0 + beta) / (rest + delta * (1.0 - beta));
                let k = (1.0 + beta) / (2.0 + rest / delta);
                (Elasticity::Finite(theta), k, Branch::Interior)
            };
            let value = response_value_at_share(exposures, i, k, rest)?;
            Ok(BestResponseResult {
                theta,
                k,
                value,
                branch,
            })
        }
    }
}

/// Trader `i` responds optimally while everyone else submits their true
/// demand (`theta_rest = delta_{-i}`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedEquilibrium {
    pub response: BestResponseResult,
    /// `<q^r, p_hat - p^r>`, only in the non-extreme regime.
    pub cash_benefit: Option<f64>,
}

pub fn one_sided_equilibrium(exposures: &ExposureProfile, i: usize) -> Result<OneSidedEquilibrium> {
    exposures.check_trader(i)?;
    let betas = exposures.non_trivial_betas()?;
    let rest = exposures.delta_total - exposures.deltas[i];
    if !(rest > 0.0) {
        return Err(Error::Domain(format!(
            "trader {i} carries all risk tolerance (lambda_i = 1)"
        )));
    }
    let response = best_response(exposures, i, Elasticity::Finite(rest))?;
    let cash_benefit = (response.branch == Branch::Interior).then(|| {
        let lambda = exposures.deltas[i] / exposures.delta_total;
        let gap = betas[i] - lambda;
        exposures.aggregate_market_variance * lambda * gap * gap
            / (exposures.delta_total * (1.0 + lambda).powi(2) * (rest / exposures.delta_total))
    });
    Ok(OneSidedEquilibrium {
        response,
        cash_benefit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketModel;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn exposures(deltas: &[f64], betas: &[f64]) -> ExposureProfile {
        MarketModel::with_betas(deltas, betas, 1.0, 1.0)
            .unwrap()
            .exposures()
            .unwrap()
    }

    #[test]
    fn interior_example() {
        let e = exposures(&[1.0, 1.0], &[0.5, 0.5]);
        let r = best_response(&e, 0, Elasticity::Finite(1.0)).unwrap();
        assert_eq!(r.branch, Branch::Interior);
        assert_abs_diff_eq!(r.theta.value(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.k, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn grid_maximum_at_half() {
        // delta 1, beta 0.5, theta_rest 1, <a_I, C a_I> = 1
        let e = exposures(&[1.0, 1.0], &[0.5, 0.5]);
        let n = 1_000_000;
        let (best_k, _) = (0..=n)
            .map(|j| {
                let k = j as f64 / n as f64;
                (k, response_value_at_share(&e, 0, k, 1.0).unwrap())
            })
            .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((best_k - 0.5).abs() <= 1.0 / n as f64);
    }

    #[test]
    fn extreme_branches() {
        let e = exposures(&[1.0, 1.0], &[-1.5, 2.5]);
        let r = best_response(&e, 0, Elasticity::Finite(0.7)).unwrap();
        assert_eq!((r.theta, r.branch), (Elasticity::Zero, Branch::InelasticZero));
        assert_eq!(r.k, 0.0);
        // 1 + theta_rest / delta = 2 <= 2.5
        let r = best_response(&e, 1, Elasticity::Finite(1.0)).unwrap();
        assert_eq!(r.theta, Elasticity::Infinite);
        assert_eq!(r.branch, Branch::RiskNeutralInfinity);
        assert_eq!(r.k, 1.0);
    }

    #[test]
    fn boundaries_are_closed() {
        let e = exposures(&[1.0, 1.0], &[-1.0, 2.0]);
        assert!(best_response(&e, 0, Elasticity::Finite(3.0)).unwrap().theta.is_zero());
        // beta = 2 = 1 + 1/1 exactly
        assert!(best_response(&e, 1, Elasticity::Finite(1.0))
            .unwrap()
            .theta
            .is_infinite());
    }

    #[test]
    fn responses_to_extreme_aggregates() {
        let e = exposures(&[2.0, 1.0, 1.0], &[0.3, 2.0, -1.3]);
        let r = best_response(&e, 0, Elasticity::Infinite).unwrap();
        assert_abs_diff_eq!(r.theta.value(), 2.0 * 1.3, epsilon = 1e-14);
        let r = best_response(&e, 2, Elasticity::Infinite).unwrap();
        assert!(r.theta.is_zero());
        let r = best_response(&e, 1, Elasticity::Zero).unwrap();
        assert!(r.theta.is_infinite());
        assert!(matches!(
            best_response(&e, 0, Elasticity::Zero),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn closed_form_limits_of_value() {
        let mut m = MarketModel::with_betas(&[1.5, 0.5], &[0.8, 0.2], 2.0, 0.6).unwrap();
        m.traders[0].endowment_mean = 0.4;
        m.traders[0].endowment_var = 3.0;
        let e = m.exposures().unwrap();
        let (u, c, d) = (e.u[0], e.hedgeable_var[0], 1.5);
        let cross = e.inner(&e.a[0], &e.a_total);
        let rest = 0.9;
        let v0 = response_value(&e, 0, Elasticity::Zero, rest).unwrap();
        assert_abs_diff_eq!(v0, u + c / (2.0 * d) - cross / rest, epsilon = 1e-13);
        let a_minus = &e.a_total - &e.a[0];
        let vinf = response_value(&e, 0, Elasticity::Infinite, rest).unwrap();
        let want = u - e.inner(&a_minus, &(&e.a_total + &e.a[0])) / (2.0 * d);
        assert_abs_diff_eq!(vinf, want, epsilon = 1e-13);
    }

    #[test]
    fn value_matches_market_outcome() {
        use crate::competitive::clearing_outcome;
        use crate::elasticity::ElasticityVector;
        let mut m = MarketModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
            vec![
                crate::market::TraderProfile::new(0.8, vec![0.4, 0.1]),
                crate::market::TraderProfile::new(1.3, vec![-0.1, 0.3]),
            ],
        );
        m.traders[0].endowment_var = 2.0;
        let e = m.exposures().unwrap();
        for theta in [0.1, 0.8, 4.0] {
            let v = response_value(&e, 0, Elasticity::Finite(theta), 1.7).unwrap();
            let out = clearing_outcome(&e, &ElasticityVector::from_values(&[theta, 1.7]).unwrap())
                .unwrap();
            assert_abs_diff_eq!(v, out.utilities[0], epsilon = 1e-13);
        }
    }

    #[test]
    fn flat_when_trivial() {
        let e = MarketModel::new(
            DMatrix::identity(1, 1),
            vec![
                crate::market::TraderProfile::new(1.0, vec![0.6]),
                crate::market::TraderProfile::new(2.0, vec![-0.6]),
            ],
        )
        .exposures()
        .unwrap();
        let want = e.u[0] + 0.36 / 2.0;
        for t in [Elasticity::Zero, Elasticity::Finite(0.3), Elasticity::Infinite] {
            assert_abs_diff_eq!(response_value(&e, 0, t, 1.0).unwrap(), want, epsilon = 1e-15);
        }
        assert_eq!(
            best_response(&e, 0, Elasticity::Finite(1.0)),
            Err(Error::TrivialModel)
        );
    }

    #[test]
    fn rejects_bad_theta_rest() {
        let e = exposures(&[1.0, 1.0], &[0.5, 0.5]);
        assert!(response_value(&e, 0, Elasticity::Finite(1.0), 0.0).is_err());
        assert!(response_value(&e, 0, Elasticity::Finite(1.0), -1.0).is_err());
        assert!(matches!(
            response_value(&e, 5, Elasticity::Zero, 1.0),
            Err(Error::TraderIndex { .. })
        ));
    }

    #[test]
    fn one_sided_examples() {
        // beta = lambda: truthful, no trade, no benefit
        let e = exposures(&[1.0, 3.0], &[0.25, 0.75]);
        let r = one_sided_equilibrium(&e, 0).unwrap();
        assert_abs_diff_eq!(r.response.k, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.response.theta.value(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.cash_benefit.unwrap(), 0.0, epsilon = 1e-15);

        let e = exposures(&[1.0, 1.0], &[-1.2, 2.2]);
        let r = one_sided_equilibrium(&e, 0).unwrap();
        assert_eq!(r.response.k, 0.0);
        assert!(r.cash_benefit.is_none());
        // beta >= 1 / lambda
        let r = one_sided_equilibrium(&e, 1).unwrap();
        assert_eq!(r.response.k, 1.0);

        // delta = (1, 1), beta_0 = 1, lambda_0 = 0.5: k = 0.5 * 2 / 1.5
        let e = exposures(&[1.0, 1.0], &[1.0, 0.0]);
        let r = one_sided_equilibrium(&e, 0).unwrap();
        assert_abs_diff_eq!(r.response.k, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn cash_benefit_matches_vector_computation() {
        let m = MarketModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]),
            vec![
                crate::market::TraderProfile::new(0.6, vec![0.9, 0.4]),
                crate::market::TraderProfile::new(1.1, vec![-0.2, 0.1]),
                crate::market::TraderProfile::new(0.9, vec![0.05, -0.1]),
            ],
        );
        let e = m.exposures().unwrap();
        let i = 0;
        let r = one_sided_equilibrium(&e, i).unwrap();
        assert_eq!(r.response.branch, Branch::Interior);
        let rest = e.delta_total - e.deltas[i];
        let theta = r.response.theta.value();
        let p_hat = -(e.covariance() * &e.a_total) / e.delta_total;
        let p_r = -(e.covariance() * &e.a_total) / (theta + rest);
        let q_r = &e.a_total * (theta / (theta + rest)) - &e.a[i];
        let direct = q_r.dot(&(p_hat - p_r));
        assert_abs_diff_eq!(r.cash_benefit.unwrap(), direct, epsilon = 1e-13);
    }

    proptest! {
        #[test]
        fn value_is_concave_in_share(
            delta in 0.05f64..20.0,
            beta in -3.0f64..4.0,
            rest in 0.01f64..50.0,
        ) {
            let e = exposures(&[delta, 1.0], &[beta, 1.0 - beta]);
            let n = 200;
            let v: Vec<f64> = (0..=n)
                .map(|j| response_value_at_share(&e, 0, j as f64 / n as f64, rest).unwrap())
                .collect();
            let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for w in v.windows(3) {
                prop_assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-12 * scale);
            }
        }

        #[test]
        fn branch_matches_interval(
            delta in 0.05f64..20.0,
            beta in -3.0f64..4.0,
            rest in 0.01f64..50.0,
        ) {
            let e = exposures(&[delta, 1.0], &[beta, 1.0 - beta]);
            let r = best_response(&e, 0, Elasticity::Finite(rest)).unwrap();
            let interior = -1.0 < beta && beta < 1.0 + rest / delta;
            prop_assert_eq!(r.branch == Branch::Interior, interior);
            if interior {
                let theta = r.theta.value();
                prop_assert!((r.k - theta / (theta + rest)).abs() < 1e-12);
                // more elastic than true demand iff the trader sheds beta
                if (beta - r.k).abs() > 1e-9 {
                    prop_assert_eq!(theta > delta, beta > r.k);
                }
            }
        }

        #[test]
        fn optimum_dominates_probes(
            delta in 0.05f64..20.0,
            beta in -3.0f64..4.0,
            rest in 0.01f64..50.0,
        ) {
            let e = exposures(&[delta, 1.0], &[beta, 1.0 - beta]);
            let r = best_response(&e, 0, Elasticity::Finite(rest)).unwrap();
            let mut probes = vec![Elasticity::Zero, Elasticity::Infinite];
            probes.extend((0..99).map(|j| Elasticity::Finite(10f64.powf(-4.0 + 8.0 * j as f64 / 98.0))));
            for p in probes {
                let v = response_value(&e, 0, p, rest).unwrap();
                prop_assert!(r.value >= v - 1e-10 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn one_sided_direction(lambda in 0.02f64..0.98, beta in -0.99f64..3.0) {
            let e = exposures(&[lambda, 1.0 - lambda], &[beta, 1.0 - beta]);
            let r = one_sided_equilibrium(&e, 0).unwrap();
            if r.response.branch == Branch::Interior && (beta - lambda).abs() > 1e-9 {
                let k = r.response.k;
                prop_assert_eq!(lambda < beta, lambda < k && k < beta);
            }
        }
    }
}
