//! Price-taking equilibrium and the clearing map shared with the Nash solver.

use nalgebra::DVector;
use serde::Serialize;

use crate::elasticity::ElasticityVector;
use crate::error::{Error, Result};
use crate::market::ExposureProfile;

/// Prices, allocations and post-trade certainty equivalents of a cleared
/// market.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOutcome {
    pub prices: DVector<f64>,
    pub allocations: Vec<DVector<f64>>,
    /// Beta of each post-trade position; zero (and `beta_defined = false`)
    /// when the model is trivial.
    pub post_beta: Vec<f64>,
    pub beta_defined: bool,
    pub utilities: Vec<f64>,
    /// Signed risk premium `<q_i, p>`.
    pub premium: Vec<f64>,
}

impl EquilibriumOutcome {
    /// Largest `|sum_i q_i|` component.
    pub fn clearing_error(&self) -> f64 {
        let k = self.prices.len();
        self.allocations
            .iter()
            .fold(DVector::zeros(k), |acc, q| acc + q)
            .amax()
    }

    /// `||C^{1/2} q_i||^2` per trader.
    pub fn trade_sizes(&self, exposures: &ExposureProfile) -> Vec<f64> {
        self.allocations
            .iter()
            .map(|q| exposures.inner(q, q))
            .collect()
    }
}

/// Market outcome when trader `i` ends up holding `shares[i]` of the
/// aggregate exposure and prices are `-scale * C a_I`.
pub(crate) fn outcome_from_shares(
    exposures: &ExposureProfile,
    shares: &[f64],
    price_scale: f64,
) -> EquilibriumOutcome {
    let n = exposures.num_traders();
    let k = exposures.num_securities();
    let (prices, allocations, post_beta) = if exposures.is_trivial {
        (
            DVector::zeros(k),
            exposures.a.iter().map(|a| -a).collect::<Vec<_>>(),
            vec![0.0; n],
        )
    } else {
        let prices = if price_scale == 0.0 {
            DVector::zeros(k)
        } else {
            -(exposures.covariance() * &exposures.a_total) * price_scale
        };
        let allocations = (0..n)
            .map(|i| &exposures.a_total * shares[i] - &exposures.a[i])
            .collect();
        (prices, allocations, shares.to_vec())
    };
    let utilities = (0..n)
        .map(|i| exposures.post_trade_utility(i, &allocations[i], &prices))
        .collect();
    let premium = allocations.iter().map(|q| q.dot(&prices)).collect();
    EquilibriumOutcome {
        prices,
        allocations,
        post_beta,
        beta_defined: !exposures.is_trivial,
        utilities,
        premium,
    }
}

/// Outcome of the clearing price for arbitrary submitted elasticities.
pub fn clearing_outcome(
    exposures: &ExposureProfile,
    elasticities: &ElasticityVector,
) -> Result<EquilibriumOutcome> {
    if elasticities.len() != exposures.num_traders() {
        return Err(Error::Domain(format!(
            "{} elasticities for {} traders",
            elasticities.len(),
            exposures.num_traders()
        )));
    }
    let shares = elasticities.shares()?;
    let scale = match elasticities.total().finite() {
        Some(total) => 1.0 / total,
        None => 0.0,
    };
    Ok(outcome_from_shares(exposures, &shares, scale))
}

/// The unique competitive equilibrium: `p = -C a_I / delta_I`,
/// `q_i = lambda_i a_I - a_i`.
pub fn competitive_equilibrium(exposures: &ExposureProfile) -> EquilibriumOutcome {
    outcome_from_shares(exposures, &exposures.lambda, 1.0 / exposures.delta_total)
}

/// `sum_i (-a_i - theta_i C^{-1} p)`.
pub fn aggregate_demand(
    exposures: &ExposureProfile,
    elasticities: &ElasticityVector,
    price: &DVector<f64>,
) -> Result<DVector<f64>> {
    if price.len() != exposures.num_securities() {
        return Err(Error::Domain(format!(
            "price has {} components, expected {}",
            price.len(),
            exposures.num_securities()
        )));
    }
    let mut theta_total = 0.0;
    for e in elasticities.iter() {
        theta_total += e.finite().ok_or_else(|| {
            Error::Domain("infinite elasticity has no finite-valued demand function".into())
        })?;
    }
    Ok(-&exposures.a_total - exposures.solve(price) * theta_total)
}

/// Utility gain split into the payoff term and the signed risk premium:
/// `utility_i = u_i + payoff_gain_i - premium_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityDecomposition {
    pub payoff_gain: Vec<f64>,
    pub premium: Vec<f64>,
}

/// Uses the closed-form payoff term `(<a_i, C a_i> - k_i^2 <a_I, C a_I>) / (2 delta_i)`
/// where `k_i` is the post-trade beta.
pub fn decompose(exposures: &ExposureProfile, outcome: &EquilibriumOutcome) -> UtilityDecomposition {
    let agg = exposures.aggregate_market_variance;
    let payoff_gain = (0..exposures.num_traders())
        .map(|i| {
            let k = if outcome.beta_defined { outcome.post_beta[i] } else { 0.0 };
            (exposures.hedgeable_var[i] - k * k * agg) / (2.0 * exposures.deltas[i])
        })
        .collect();
    UtilityDecomposition {
        payoff_gain,
        premium: outcome.premium.clone(),
    }
}
