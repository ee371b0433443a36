//! Linear Nash equilibria of the demand-elasticity game.
//!
//! [`solve`] classifies an instance and dispatches:
//!
//! * trivial: `a_I = 0`, every elasticity vector is an equilibrium with the
//!   competitive prices and allocations;
//! * extreme: one trader (the unique one satisfying the extreme condition)
//!   submits infinite elasticity, prices are zero;
//! * bilateral: exactly two traders have `beta > -1`, closed form;
//! * general: the monotone scalar equation in the aggregate elasticity,
//!   solved by bisection (see [`CoupledSystem`]);
//! * unsupported: two or more traders with `beta > 1` and no extreme
//!   equilibrium; uniqueness is open there, so nothing is returned.

use serde::Serialize;

use crate::best_response::best_response;
use crate::competitive::{outcome_from_shares, EquilibriumOutcome};
use crate::elasticity::{Elasticity, ElasticityVector};
use crate::error::{Error, Result};
use crate::market::ExposureProfile;

/// Relative slack on the extreme condition, so that instances sitting on the
/// boundary are classified as extreme despite rounding.
pub const EXTREME_TOL: f64 = 1e-12;
/// Default bisection tolerance on `|F(x) - 1|` and on the bracket width
/// relative to `1 + x`.
pub const ROOT_TOL: f64 = 1e-12;
/// Relative tolerance of the coordinatewise best-response check.
pub const FIXED_POINT_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NashKind {
    Trivial,
    Extreme { risk_neutral: usize },
    BilateralClosedForm,
    GeneralNonExtreme,
    UnsupportedRegime { high_beta: Vec<usize> },
}

impl NashKind {
    pub fn name(&self) -> &'static str {
        match self {
            NashKind::Trivial => "trivial",
            NashKind::Extreme { .. } => "extreme",
            NashKind::BilateralClosedForm => "bilateral_closed_form",
            NashKind::GeneralNonExtreme => "general_non_extreme",
            NashKind::UnsupportedRegime { .. } => "unsupported_regime",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashSolution {
    pub kind: NashKind,
    /// Empty for the unsupported regime.
    pub elasticities: ElasticityVector,
    pub theta_total: Elasticity,
    /// `theta_i / theta_I`, with share one for an infinite elasticity.
    pub k_shares: Vec<f64>,
    /// `None` only for the unsupported regime.
    pub outcome: Option<EquilibriumOutcome>,
    /// Left minus right of the coupled first-order conditions; for an
    /// extreme equilibrium the `theta_I -> inf` limit `theta_i / delta_i - (1 + beta_i)`.
    pub residuals: Vec<f64>,
}

impl NashSolution {
    pub fn is_solved(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    fn build(exposures: &ExposureProfile, kind: NashKind, elasticities: ElasticityVector) -> Result<Self> {
        let k_shares = elasticities.shares()?;
        let theta_total = elasticities.total();
        let scale = match theta_total.finite() {
            Some(t) => 1.0 / t,
            None => 0.0,
        };
        let outcome = outcome_from_shares(exposures, &k_shares, scale);
        let residuals = if exposures.is_trivial {
            vec![0.0; elasticities.len()]
        } else {
            coupled_residuals(exposures, &elasticities)
        };
        Ok(NashSolution {
            kind,
            elasticities,
            theta_total,
            k_shares,
            outcome: Some(outcome),
            residuals,
        })
    }

    fn unsupported(high_beta: Vec<usize>) -> Self {
        NashSolution {
            kind: NashKind::UnsupportedRegime { high_beta },
            elasticities: ElasticityVector(Vec::new()),
            theta_total: Elasticity::Zero,
            k_shares: Vec::new(),
            outcome: None,
            residuals: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub root_tol: f64,
    /// Run the coordinatewise best-response check before returning.
    pub verify: bool,
    pub fixed_point_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            root_tol: ROOT_TOL,
            verify: true,
            fixed_point_tol: FIXED_POINT_TOL,
        }
    }
}

/// Residuals of `(2 + (theta_I - theta_i) / delta_i) theta_i / theta_I = 1 + beta_i`
/// for traders with `beta_i > -1`, and `theta_i / delta_i` for the others.
pub fn coupled_residuals(exposures: &ExposureProfile, theta: &ElasticityVector) -> Vec<f64> {
    let beta = &exposures.beta;
    let delta = &exposures.deltas;
    match theta.total() {
        Elasticity::Infinite => (0..theta.len())
            .map(|i| match theta[i] {
                Elasticity::Infinite => 0.0,
                t if beta[i] > -1.0 => t.value() / delta[i] - (1.0 + beta[i]),
                t => t.value() / delta[i],
            })
            .collect(),
        total => {
            let total = total.value();
            (0..theta.len())
                .map(|i| {
                    let t = theta[i].value();
                    if beta[i] > -1.0 {
                        (2.0 + (total - t) / delta[i]) * t / total - (1.0 + beta[i])
                    } else {
                        t / delta[i]
                    }
                })
                .collect()
        }
    }
}

/// The unique trader `k` with
/// `beta_k >= 1 + (1/delta_k) sum_{i != k} delta_i (1 + beta_i)_+`, if any.
///
/// Cross-checks against the aggregate form
/// `sum_i delta_i (1 + beta_i)_+ <= 2 max_i delta_i beta_i`.
pub fn check_extreme_condition(exposures: &ExposureProfile) -> Result<Option<usize>> {
    let beta = exposures.non_trivial_betas()?;
    let delta = &exposures.deltas;
    let n = beta.len();
    let pos: Vec<f64> = (0..n).map(|i| delta[i] * (1.0 + beta[i]).max(0.0)).collect();
    let total: f64 = pos.iter().sum();
    let max_db = (0..n).map(|i| delta[i] * beta[i]).fold(f64::NEG_INFINITY, f64::max);
    let tol = EXTREME_TOL * total.max(max_db.abs()).max(f64::MIN_POSITIVE);

    let hits: Vec<usize> = (0..n)
        .filter(|&k| {
            let others: f64 = (0..n).filter(|&i| i != k).map(|i| pos[i]).sum();
            delta[k] * (beta[k] - 1.0) - others >= -tol
        })
        .collect();
    let aggregate = 2.0 * max_db - total >= -tol;

    if hits.len() > 1 {
        return Err(Error::Consistency(format!(
            "extreme condition holds for several traders {hits:?}"
        )));
    }
    if aggregate != (hits.len() == 1) {
        return Err(Error::Consistency(format!(
            "per-trader extreme test ({hits:?}) disagrees with aggregate test ({aggregate})"
        )));
    }
    Ok(hits.first().copied())
}

/// Trader `k` submits infinite elasticity, everyone else `delta_i (1 + beta_i)_+`.
pub fn solve_extreme(exposures: &ExposureProfile, k: usize) -> Result<NashSolution> {
    exposures.check_trader(k)?;
    let beta = exposures.non_trivial_betas()?;
    let theta = (0..beta.len())
        .map(|i| {
            if i == k {
                Ok(Elasticity::Infinite)
            } else {
                Elasticity::new(exposures.deltas[i] * (1.0 + beta[i]).max(0.0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    NashSolution::build(exposures, NashKind::Extreme { risk_neutral: k }, ElasticityVector(theta))
}

fn active_traders(beta: &[f64]) -> Vec<usize> {
    (0..beta.len()).filter(|&i| beta[i] > -1.0).collect()
}

/// Closed form when exactly two traders have `beta > -1` and
/// `|lambda_0 beta_0 - lambda_1 beta_1| < lambda_0 + lambda_1`.
pub fn solve_bilateral(exposures: &ExposureProfile) -> Result<NashSolution> {
    let beta = exposures.non_trivial_betas()?;
    let active = active_traders(beta);
    let [p, q] = active[..] else {
        return Err(Error::Precondition(format!(
            "bilateral closed form needs exactly two traders with beta > -1, found {}",
            active.len()
        )));
    };
    let lam = &exposures.lambda;
    let (lp, lq, bp, bq) = (lam[p], lam[q], beta[p], beta[q]);
    let spread = lp * bp - lq * bq;
    if !(spread.abs() < lp + lq) {
        return Err(Error::Precondition(format!(
            "|lambda_{p} beta_{p} - lambda_{q} beta_{q}| = {} is not below lambda_{p} + lambda_{q} = {}; equilibrium is extreme",
            spread.abs(),
            lp + lq
        )));
    }
    let theta_p = exposures.deltas[p] * 2.0 * lq * (bp + bq) / ((lp + lq) - spread);
    let theta_q = exposures.deltas[q] * 2.0 * lp * (bp + bq) / ((lp + lq) + spread);
    let mut theta = vec![Elasticity::Zero; beta.len()];
    theta[p] = Elasticity::new(theta_p)?;
    theta[q] = Elasticity::new(theta_q)?;
    NashSolution::build(exposures, NashKind::BilateralClosedForm, ElasticityVector(theta))
}

/// Interior response of a trader with `-1 < beta <= 1` when the aggregate
/// elasticity is `x`: the smaller root of
/// `theta^2 / 2 - (delta + x/2) theta + delta (1 + beta) x / 2 = 0`.
///
/// Evaluated as `delta (1 + beta) x / (delta + x/2 + sqrt(D))`, which avoids
/// the cancellation in `delta + x/2 - sqrt(D)`; `beta = 1` uses the exact
/// kink `min(x, 2 delta)`.
pub fn coupled_response(delta: f64, beta: f64, x: f64) -> f64 {
    if beta == 1.0 {
        return x.min(2.0 * delta);
    }
    let half = 0.5 * x;
    // (delta + x/2)^2 - delta (1 + beta) x, written as a sum of nonnegative terms
    let disc = ((half - delta * beta).powi(2) + delta * delta * (1.0 - beta * beta)).max(0.0);
    delta * (1.0 + beta) * x / (delta + half + disc.sqrt())
}

/// `coupled_response(delta, beta, x) / x`, finite as `x -> 0`.
fn coupled_ratio(delta: f64, beta: f64, x: f64) -> f64 {
    if beta == 1.0 {
        return (2.0 * delta / x).min(1.0);
    }
    let half = 0.5 * x;
    let disc = ((half - delta * beta).powi(2) + delta * delta * (1.0 - beta * beta)).max(0.0);
    delta * (1.0 + beta) / (delta + half + disc.sqrt())
}

/// The scalar equation for the aggregate elasticity in the non-extreme
/// regime. The leader is a maximal-beta trader; followers are the other
/// traders with `-1 < beta <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSystem {
    pub leader: usize,
    leader_delta: f64,
    leader_beta: f64,
    /// `(trader, delta, beta)`.
    pub followers: Vec<(usize, f64, f64)>,
    delta_total: f64,
}

impl CoupledSystem {
    /// Fails if another trader besides the leader has `beta > 1`.
    pub fn new(exposures: &ExposureProfile) -> Result<Self> {
        let beta = exposures.non_trivial_betas()?;
        let leader = (0..beta.len())
            .fold(0, |best, i| if beta[i] > beta[best] { i } else { best });
        Self::with_leader(exposures, leader)
    }

    /// Same system with an explicit choice of leader (must have maximal beta).
    pub fn with_leader(exposures: &ExposureProfile, leader: usize) -> Result<Self> {
        exposures.check_trader(leader)?;
        let beta = exposures.non_trivial_betas()?;
        if beta.iter().any(|&b| b > beta[leader]) {
            return Err(Error::Precondition(format!(
                "trader {leader} does not have maximal beta"
            )));
        }
        let mut followers = Vec::new();
        for (i, &b) in beta.iter().enumerate() {
            if i == leader || b <= -1.0 {
                continue;
            }
            if b > 1.0 {
                return Err(Error::Precondition(format!(
                    "traders {leader} and {i} both have beta > 1"
                )));
            }
            followers.push((i, exposures.deltas[i], b));
        }
        if followers.is_empty() {
            return Err(Error::Precondition(
                "no follower with -1 < beta <= 1; the equilibrium is extreme".into(),
            ));
        }
        Ok(Self {
            leader,
            leader_delta: exposures.deltas[leader],
            leader_beta: beta[leader],
            followers,
            delta_total: exposures.delta_total,
        })
    }

    /// `sigma(x) = sum_{followers} phi_i(x)`.
    pub fn sigma(&self, x: f64) -> f64 {
        self.followers
            .iter()
            .map(|&(_, d, b)| coupled_response(d, b, x))
            .sum()
    }

    /// `F(x) = (1 + beta_0) delta_0 / (2 delta_0 + sigma(x)) + sigma(x) / x`.
    pub fn key_lhs(&self, x: f64) -> f64 {
        let ratio: f64 = self
            .followers
            .iter()
            .map(|&(_, d, b)| coupled_ratio(d, b, x))
            .sum();
        let sigma = ratio * x;
        (1.0 + self.leader_beta) * self.leader_delta / (2.0 * self.leader_delta + sigma) + ratio
    }

    /// `F(0+) = |J_0| / 2 + (sum_{J_0} beta_i) / 2`.
    pub fn lhs_at_zero(&self) -> f64 {
        let n = self.followers.len() as f64 + 1.0;
        let sum: f64 = self.leader_beta + self.followers.iter().map(|f| f.2).sum::<f64>();
        0.5 * (n + sum)
    }

    /// `F(inf) = (1 + beta_0) delta_0 / (2 delta_0 + sum_J delta_i (1 + beta_i))`.
    pub fn lhs_at_infinity(&self) -> f64 {
        let sigma_inf: f64 = self.followers.iter().map(|&(_, d, b)| d * (1.0 + b)).sum();
        (1.0 + self.leader_beta) * self.leader_delta / (2.0 * self.leader_delta + sigma_inf)
    }

    /// `[lo, hi]` with `F(lo) > 1 >= F(hi)`.
    pub fn bracket(&self) -> Result<(f64, f64)> {
        let lo = 1e-12 * self.delta_total;
        let f_lo = self.key_lhs(lo);
        if !(f_lo > 1.0) {
            return Err(Error::Bracket(format!("F({lo:e}) = {f_lo} is not above 1")));
        }
        let mut hi = self.delta_total;
        for _ in 0..=MAX_DOUBLINGS {
            if self.key_lhs(hi) < 1.0 {
                return Ok((lo, hi));
            }
            hi *= 2.0;
        }
        Err(Error::Bracket(format!(
            "F stays at or above 1 up to x = {hi:e}; F(inf) = {}",
            self.lhs_at_infinity()
        )))
    }

    /// Root of `F(x) = 1` by bisection.
    pub fn solve_total(&self, tol: f64) -> Result<f64> {
        let (mut lo, mut hi) = self.bracket()?;
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f = self.key_lhs(mid);
            if f > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < tol * (1.0 + mid) && (f - 1.0).abs() < tol {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Elasticities at aggregate `x`: followers `phi_i(x)`, leader
    /// `(1 + beta_0) delta_0 x / (2 delta_0 + sigma(x))`, everyone else zero.
    pub fn elasticities_at(&self, x: f64, num_traders: usize) -> Result<ElasticityVector> {
        let mut theta = vec![Elasticity::Zero; num_traders];
        let mut sigma = 0.0;
        for &(i, d, b) in &self.followers {
            let t = coupled_response(d, b, x);
            sigma += t;
            theta[i] = Elasticity::new(t)?;
        }
        let lead = (1.0 + self.leader_beta) * self.leader_delta * x
            / (2.0 * self.leader_delta + sigma);
        theta[self.leader] = Elasticity::new(lead)?;
        Ok(ElasticityVector(theta))
    }
}

fn high_beta_traders(beta: &[f64]) -> Vec<usize> {
    (0..beta.len()).filter(|&i| beta[i] > 1.0).collect()
}

/// Non-extreme equilibrium via the scalar equation for the aggregate
/// elasticity. Returns the unsupported regime when two or more traders have
/// `beta > 1`.
pub fn solve_general(exposures: &ExposureProfile) -> Result<NashSolution> {
    solve_general_with(exposures, &SolverOptions::default())
}

pub fn solve_general_with(exposures: &ExposureProfile, opts: &SolverOptions) -> Result<NashSolution> {
    let beta = exposures.non_trivial_betas()?;
    if let Some(k) = check_extreme_condition(exposures)? {
        return Err(Error::Precondition(format!(
            "extreme condition holds for trader {k}; use solve_extreme"
        )));
    }
    let high = high_beta_traders(beta);
    if high.len() >= 2 {
        return Ok(NashSolution::unsupported(high));
    }
    let system = CoupledSystem::new(exposures)?;
    let total = system.solve_total(opts.root_tol)?;
    let theta = system.elasticities_at(total, beta.len())?;
    NashSolution::build(exposures, NashKind::GeneralNonExtreme, theta)
}

/// Classifies the instance and returns its unique linear Nash equilibrium.
pub fn solve(exposures: &ExposureProfile) -> Result<NashSolution> {
    solve_with(exposures, &SolverOptions::default())
}

pub fn solve_with(exposures: &ExposureProfile, opts: &SolverOptions) -> Result<NashSolution> {
    let Some(beta) = exposures.betas() else {
        let truthful = ElasticityVector::from_values(&exposures.deltas)?;
        return NashSolution::build(exposures, NashKind::Trivial, truthful);
    };
    let solution = if let Some(k) = check_extreme_condition(exposures)? {
        solve_extreme(exposures, k)?
    } else if active_traders(beta).len() == 2 {
        solve_bilateral(exposures)?
    } else {
        solve_general_with(exposures, opts)?
    };
    if opts.verify && solution.is_solved() {
        verify_fixed_point(exposures, &solution.elasticities, opts.fixed_point_tol)?;
    }
    Ok(solution)
}

/// Checks that every trader's elasticity is a best response to the others'
/// aggregate, within `rel_tol`. A tag mismatch is tolerated only when the
/// trader sits on a branch boundary of the best response within `rel_tol`.
pub fn verify_fixed_point(
    exposures: &ExposureProfile,
    theta: &ElasticityVector,
    rel_tol: f64,
) -> Result<()> {
    let beta = exposures.non_trivial_betas()?;
    for i in 0..theta.len() {
        let rest = theta.total_except(i);
        let br = best_response(exposures, i, rest)?;
        if br.theta.approx_eq(theta[i], rel_tol) {
            continue;
        }
        let boundary = match (theta[i], br.theta, rest) {
            (Elasticity::Infinite, _, Elasticity::Finite(r))
            | (_, Elasticity::Infinite, Elasticity::Finite(r)) => {
                let threshold = 1.0 + r / exposures.deltas[i];
                (beta[i] - threshold).abs() <= rel_tol * threshold.abs().max(1.0)
            }
            (Elasticity::Zero, Elasticity::Finite(_), _)
            | (Elasticity::Finite(_), Elasticity::Zero, _) => (beta[i] + 1.0).abs() <= rel_tol,
            _ => false,
        };
        if !boundary {
            return Err(Error::FixedPoint {
                trader: i,
                expected: theta[i].to_string(),
                actual: br.theta.to_string(),
            });
        }
    }
    Ok(())
}
