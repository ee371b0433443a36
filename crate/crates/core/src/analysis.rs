//! Welfare comparison between the Nash and competitive equilibria.

use serde::Serialize;

use crate::competitive::{competitive_equilibrium, decompose, EquilibriumOutcome};
use crate::error::{Error, Result};
use crate::market::{ExposureProfile, MarketModel};
use crate::nash::{self, NashKind, NashSolution};

/// Relative tolerance of the internal cross-checks.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Nash minus competitive certainty equivalent, per trader.
    pub du: Vec<f64>,
    /// `sum_i du_i`.
    pub inefficiency: f64,
    pub premium_competitive: Vec<f64>,
    pub premium_nash: Vec<f64>,
    pub payoff_gain_competitive: Vec<f64>,
    pub payoff_gain_nash: Vec<f64>,
    /// `(beta_0 + lambda_0)(beta_1 + lambda_1) / (8 lambda_0 lambda_1)`, two-trader
    /// closed-form case only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_factor: Option<f64>,
}

fn check_close(what: &str, left: f64, right: f64, scale: f64) -> Result<()> {
    if (left - right).abs() <= CROSS_CHECK_TOL * (1.0 + scale.abs()) {
        Ok(())
    } else {
        Err(Error::Mismatch {
            what: what.to_string(),
            left,
            right,
        })
    }
}

/// `L = (beta_0 + lambda_0)(beta_1 + lambda_1) / (8 lambda_0 lambda_1)`.
pub fn l_factor(exposures: &ExposureProfile) -> Result<f64> {
    let beta = exposures.non_trivial_betas()?;
    if beta.len() != 2 {
        return Err(Error::Precondition(format!(
            "L is defined for two traders, got {}",
            beta.len()
        )));
    }
    let lam = &exposures.lambda;
    Ok((beta[0] + lam[0]) * (beta[1] + lam[1]) / (8.0 * lam[0] * lam[1]))
}

/// Closed-form utility difference for two traders in the non-extreme regime.
pub fn bilateral_du(exposures: &ExposureProfile, i: usize) -> Result<f64> {
    exposures.check_trader(i)?;
    let l = l_factor(exposures)?;
    let agg = exposures.aggregate_market_variance;
    let (b, lam, d) = (exposures.beta[i], exposures.lambda[i], exposures.deltas[i]);
    let mid = 0.5 * (lam + b);
    Ok(agg / (2.0 * d) * (lam * lam - mid * mid) + (b - lam) * agg * (1.0 - l) / exposures.delta_total)
}

/// Closed-form utility difference at the extreme equilibrium where trader
/// `k` is risk neutral.
pub fn extreme_du(exposures: &ExposureProfile, k: usize, i: usize) -> Result<f64> {
    exposures.check_trader(i)?;
    let beta = exposures.non_trivial_betas()?;
    let (b, lam, d) = (beta[i], exposures.lambda[i], exposures.deltas[i]);
    let base = lam * (2.0 * b - lam);
    let bracket = if i == k { base - 1.0 } else { base };
    Ok(exposures.aggregate_market_variance / (2.0 * d) * bracket)
}

/// `-<a_I, C a_I> (1 - lambda_k) / (2 delta_I lambda_k)`.
pub fn extreme_inefficiency(exposures: &ExposureProfile, k: usize) -> Result<f64> {
    exposures.check_trader(k)?;
    let lam = exposures.lambda[k];
    Ok(-exposures.aggregate_market_variance * (1.0 - lam) / (2.0 * exposures.delta_total * lam))
}

/// Compares the two equilibria trader by trader. The utility difference is
/// taken directly from the outcomes and checked against the payoff/premium
/// decomposition and, where available, the closed forms.
pub fn compare(
    exposures: &ExposureProfile,
    competitive: &EquilibriumOutcome,
    nash: &NashSolution,
) -> Result<ComparisonReport> {
    let Some(nash_outcome) = nash.outcome.as_ref() else {
        return Err(Error::Precondition(
            "no Nash equilibrium to compare against (unsupported regime)".into(),
        ));
    };
    let n = exposures.num_traders();
    if competitive.utilities.len() != n || nash_outcome.utilities.len() != n {
        return Err(Error::Precondition(
            "equilibria were computed for a different number of traders".into(),
        ));
    }

    let du: Vec<f64> = (0..n)
        .map(|i| nash_outcome.utilities[i] - competitive.utilities[i])
        .collect();
    let inefficiency = du.iter().sum();
    let dc = decompose(exposures, competitive);
    let dn = decompose(exposures, nash_outcome);

    for i in 0..n {
        let scale = nash_outcome.utilities[i].abs().max(competitive.utilities[i].abs());
        let via_parts =
            (dn.payoff_gain[i] - dn.premium[i]) - (dc.payoff_gain[i] - dc.premium[i]);
        check_close("decomposition", du[i], via_parts, scale)?;
    }

    let mut l = None;
    match nash.kind {
        NashKind::BilateralClosedForm if n == 2 => {
            l = Some(l_factor(exposures)?);
            for i in 0..n {
                let scale = nash_outcome.utilities[i].abs().max(competitive.utilities[i].abs());
                check_close("bilateral closed form", du[i], bilateral_du(exposures, i)?, scale)?;
            }
        }
        NashKind::Extreme { risk_neutral: k } => {
            let mut scale = 0.0f64;
            for i in 0..n {
                let s = nash_outcome.utilities[i].abs().max(competitive.utilities[i].abs());
                scale = scale.max(s);
                check_close("extreme closed form", du[i], extreme_du(exposures, k, i)?, s)?;
            }
            check_close(
                "extreme inefficiency",
                inefficiency,
                extreme_inefficiency(exposures, k)?,
                scale,
            )?;
        }
        _ => {}
    }

    Ok(ComparisonReport {
        du,
        inefficiency,
        premium_competitive: dc.premium,
        premium_nash: dn.premium,
        payoff_gain_competitive: dc.payoff_gain,
        payoff_gain_nash: dn.payoff_gain,
        l_factor: l,
    })
}

/// Solves both equilibria and compares them.
pub fn analyze(exposures: &ExposureProfile) -> Result<(EquilibriumOutcome, NashSolution, Option<ComparisonReport>)> {
    let competitive = competitive_equilibrium(exposures);
    let nash = nash::solve(exposures)?;
    let report = if nash.is_solved() {
        Some(compare(exposures, &competitive, &nash)?)
    } else {
        None
    };
    Ok((competitive, nash, report))
}

/// Limit of trader 0's utility difference as its risk tolerance grows
/// without bound, two traders:
/// `<a_I, C a_I> (1 + beta_0)(1 - beta_0)^2 / (8 delta_1)` for `beta_0` in `(-1, 1)`, else 0.
pub fn risk_neutral_limit_du(exposures: &ExposureProfile) -> Result<f64> {
    let beta = exposures.non_trivial_betas()?;
    if beta.len() != 2 {
        return Err(Error::Precondition(format!(
            "risk-neutral limit is stated for two traders, got {}",
            beta.len()
        )));
    }
    let b = beta[0];
    if b <= -1.0 || b >= 1.0 {
        return Ok(0.0);
    }
    Ok(exposures.aggregate_market_variance * (1.0 + b) * (1.0 - b).powi(2) / (8.0 * exposures.deltas[1]))
}

/// Incomplete market versus its complete counterpart with the same betas and
/// risk tolerances, where `<a_I, C a_I>` is replaced by `Var(E_I)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncompletenessReport {
    pub aggregate_market_variance: f64,
    pub total_endowment_var: f64,
    pub du: Vec<f64>,
    pub du_complete: Vec<f64>,
    /// `du_complete - du`.
    pub du_gap: Vec<f64>,
    pub inefficiency: f64,
    pub inefficiency_complete: f64,
    /// `||C^{1/2} q_hat_i||^2`.
    pub competitive_gain: Vec<f64>,
    /// `Var(lambda_i E_I - E_i)` with `Cov(E_i, E_I) = beta_i Var(E_I)`.
    pub competitive_gain_complete: Vec<f64>,
}

/// Requires `total_endowment_var` and exactly two traders with `beta > -1`.
/// The complete-market competitive gain uses each trader's `endowment_var`.
pub fn incompleteness_effect(model: &MarketModel) -> Result<IncompletenessReport> {
    let Some(total_var) = model.total_endowment_var else {
        return Err(Error::Precondition("total_endowment_var is not set".into()));
    };
    let exposures = model.exposures()?;
    let agg = exposures.aggregate_market_variance;
    if agg > total_var + 1e-10 * total_var.max(1.0) {
        return Err(Error::Precondition(format!(
            "<a_I, C a_I> = {agg} exceeds Var(E_I) = {total_var}"
        )));
    }
    let beta = exposures.non_trivial_betas()?;
    let active = beta.iter().filter(|&&b| b > -1.0).count();
    if active != 2 {
        return Err(Error::Precondition(format!(
            "incompleteness comparison needs two traders with beta > -1, found {active}"
        )));
    }
    let (competitive, _, report) = analyze(&exposures)?;
    let report = report.ok_or_else(|| Error::Precondition("no Nash equilibrium".into()))?;

    // utility differences are linear in <a_I, C a_I> at fixed (beta, lambda, delta)
    let ratio = total_var / agg;
    let du_complete: Vec<f64> = report.du.iter().map(|d| d * ratio).collect();
    let du_gap = du_complete.iter().zip(&report.du).map(|(c, d)| c - d).collect();
    let competitive_gain = competitive.trade_sizes(&exposures);
    let lam = &exposures.lambda;
    let competitive_gain_complete = (0..beta.len())
        .map(|i| {
            let g = lam[i] * lam[i] * total_var - 2.0 * lam[i] * beta[i] * total_var
                + exposures.endowment_var[i];
            if g < competitive_gain[i] - 1e-10 * (1.0 + g.abs()) {
                Err(Error::Precondition(format!(
                    "endowment_var of trader {i} is too small for the complete counterpart"
                )))
            } else {
                Ok(g)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IncompletenessReport {
        aggregate_market_variance: agg,
        total_endowment_var: total_var,
        inefficiency: report.inefficiency,
        inefficiency_complete: report.inefficiency * ratio,
        du: report.du,
        du_complete,
        du_gap,
        competitive_gain,
        competitive_gain_complete,
    })
}
