//! Problem instance, validation, and the derived exposure quantities
//! (hedgeable exposures `a_i`, projected betas, relative risk tolerances).
//!
//! Securities are assumed centred (`E[S] = 0`); callers with non-zero means
//! must shift them before building a [`MarketModel`].

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry of the securities covariance.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest eigenvalue must exceed this times the largest diagonal entry.
pub const PD_TOL: f64 = 1e-10;
/// `a_I` is treated as zero when `<a_I, C a_I>` falls below this fraction of
/// `sum_i <a_i, C a_i>`.
pub const TRIVIAL_REL_TOL: f64 = 1e-12;
/// Absolute fallback for the trivial test when every `a_i` vanishes.
pub const TRIVIAL_ABS_TOL: f64 = 1e-14;

/// One trader's preferences and the moments of its random endowment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderProfile {
    /// Risk tolerance (reciprocal of CARA risk aversion).
    pub delta: f64,
    /// `Cov(E_i, S)`, one entry per security.
    pub cov_endowment_securities: Vec<f64>,
    pub endowment_mean: f64,
    pub endowment_var: f64,
}

impl TraderProfile {
    pub fn new(delta: f64, cov_endowment_securities: Vec<f64>) -> Self {
        Self {
            delta,
            cov_endowment_securities,
            endowment_mean: 0.0,
            endowment_var: 0.0,
        }
    }

    pub fn with_endowment(mut self, mean: f64, var: f64) -> Self {
        self.endowment_mean = mean;
        self.endowment_var = var;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub securities_cov: DMatrix<f64>,
    pub traders: Vec<TraderProfile>,
    /// `Var(E_I)`; only needed for the incompleteness comparison.
    pub total_endowment_var: Option<f64>,
}

/// A single reason a [`MarketModel`] is rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySecurities,
    NotSquare { rows: usize, cols: usize },
    NonFinite(String),
    NotSymmetric { row: usize, col: usize },
    NotPositiveDefinite { min_eigenvalue: f64 },
    TooFewTraders(usize),
    DimensionMismatch { trader: usize, expected: usize, got: usize },
    NonPositiveDelta { trader: usize, delta: f64 },
    NegativeEndowmentVar { trader: usize, var: f64 },
    NegativeTotalVar(f64),
    InconsistentTotalVar { projected: f64, total: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySecurities => write!(f, "securities covariance is empty"),
            Violation::NotSquare { rows, cols } => {
                write!(f, "securities covariance is {rows}x{cols}, not square")
            }
            Violation::NonFinite(field) => write!(f, "{field} contains a non-finite value"),
            Violation::NotSymmetric { row, col } => {
                write!(f, "securities covariance is not symmetric at ({row}, {col})")
            }
            Violation::NotPositiveDefinite { min_eigenvalue } => write!(
                f,
                "securities covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e})"
            ),
            Violation::TooFewTraders(n) => write!(f, "need at least 2 traders, got {n}"),
            Violation::DimensionMismatch {
                trader,
                expected,
                got,
            } => write!(
                f,
                "trader {trader}: cov_es has length {got}, expected {expected}"
            ),
            Violation::NonPositiveDelta { trader, delta } => write!(
                f,
                "trader {trader}: risk tolerance must be strictly positive (got {delta})"
            ),
            Violation::NegativeEndowmentVar { trader, var } => {
                write!(f, "trader {trader}: endowment variance {var} is negative")
            }
            Violation::NegativeTotalVar(v) => write!(f, "total endowment variance {v} is negative"),
            Violation::InconsistentTotalVar { projected, total } => write!(
                f,
                "total endowment variance {total} is below its projection on the securities {projected}"
            ),
        }
    }
}

impl MarketModel {
    pub fn new(securities_cov: DMatrix<f64>, traders: Vec<TraderProfile>) -> Self {
        Self {
            securities_cov,
            traders,
            total_endowment_var: None,
        }
    }

    pub fn with_total_endowment_var(mut self, var: f64) -> Self {
        self.total_endowment_var = Some(var);
        self
    }

    /// One security with variance `market_var` and traders whose projected
    /// betas are exactly `betas` (which must sum to one). The aggregate
    /// exposure is scaled so that `<a_I, C a_I> = aggregate_var`.
    pub fn with_betas(
        deltas: &[f64],
        betas: &[f64],
        market_var: f64,
        aggregate_var: f64,
    ) -> Result<Self> {
        if deltas.len() != betas.len() {
            return Err(Error::Domain(format!(
                "{} risk tolerances but {} betas",
                deltas.len(),
                betas.len()
            )));
        }
        let sum: f64 = betas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("betas must sum to 1, got {sum}")));
        }
        if !(market_var > 0.0 && aggregate_var > 0.0) {
            return Err(Error::Domain(
                "market and aggregate variances must be positive".into(),
            ));
        }
        // a_I = s with s^2 * c = aggregate_var, a_i = beta_i * s, Cov(E_i, S) = c * a_i
        let s = (aggregate_var / market_var).sqrt();
        let traders = deltas
            .iter()
            .zip(betas)
            .map(|(&d, &b)| TraderProfile::new(d, vec![market_var * b * s]))
            .collect();
        let model = Self::new(DMatrix::from_element(1, 1, market_var), traders);
        model.check()?;
        Ok(model)
    }

    pub fn num_securities(&self) -> usize {
        self.securities_cov.nrows()
    }

    pub fn num_traders(&self) -> usize {
        self.traders.len()
    }

    /// Every violation found; empty means the model is well posed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let c = &self.securities_cov;
        let (rows, cols) = c.shape();
        if rows == 0 || cols == 0 {
            out.push(Violation::EmptySecurities);
        } else if rows != cols {
            out.push(Violation::NotSquare { rows, cols });
        } else if c.iter().any(|x| !x.is_finite()) {
            out.push(Violation::NonFinite("securities covariance".into()));
        } else {
            let scale = c.amax().max(f64::MIN_POSITIVE);
            let mut symmetric = true;
            'outer: for i in 0..rows {
                for j in (i + 1)..cols {
                    if (c[(i, j)] - c[(j, i)]).abs() > SYMMETRY_TOL * scale {
                        out.push(Violation::NotSymmetric { row: i, col: j });
                        symmetric = false;
                        break 'outer;
                    }
                }
            }
            if symmetric {
                let sym = (c + c.transpose()) * 0.5;
                let min_eig = SymmetricEigen::new(sym)
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                let max_diag = c.diagonal().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(min_eig > PD_TOL * max_diag.max(0.0)) || max_diag <= 0.0 {
                    out.push(Violation::NotPositiveDefinite {
                        min_eigenvalue: min_eig,
                    });
                }
            }
        }

        if self.traders.len() < 2 {
            out.push(Violation::TooFewTraders(self.traders.len()));
        }
        for (i, t) in self.traders.iter().enumerate() {
            if t.cov_endowment_securities.len() != rows {
                out.push(Violation::DimensionMismatch {
                    trader: i,
                    expected: rows,
                    got: t.cov_endowment_securities.len(),
                });
            }
            let finite = t.delta.is_finite()
                && t.endowment_mean.is_finite()
                && t.endowment_var.is_finite()
                && t.cov_endowment_securities.iter().all(|x| x.is_finite());
            if !finite {
                out.push(Violation::NonFinite(format!("trader {i}")));
                continue;
            }
            if t.delta <= 0.0 {
                out.push(Violation::NonPositiveDelta {
                    trader: i,
                    delta: t.delta,
                });
            }
            if t.endowment_var < 0.0 {
                out.push(Violation::NegativeEndowmentVar {
                    trader: i,
                    var: t.endowment_var,
                });
            }
        }

        if let Some(total) = self.total_endowment_var {
            if !total.is_finite() {
                out.push(Violation::NonFinite("total_endowment_var".into()));
            } else if total < 0.0 {
                out.push(Violation::NegativeTotalVar(total));
            } else if out.is_empty() {
                if let Ok(exp) = derive_unchecked(self) {
                    let projected = exp.aggregate_market_variance;
                    if projected > total + 1e-10 * total.max(1.0) {
                        out.push(Violation::InconsistentTotalVar { projected, total });
                    }
                }
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    /// Validates and derives the exposure profile.
    pub fn exposures(&self) -> Result<ExposureProfile> {
        derive_exposures(self)
    }
}

/// Quantities derived from a validated [`MarketModel`]; every downstream
/// computation works from this.
#[derive(Debug, Clone)]
pub struct ExposureProfile {
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub deltas: Vec<f64>,
    /// `a_i = C^{-1} Cov(E_i, S)`.
    pub a: Vec<DVector<f64>>,
    pub a_total: DVector<f64>,
    /// Projected betas; all zero when the model is trivial.
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub delta_total: f64,
    /// Autarky certainty equivalents `E[E_i] - Var(E_i) / (2 delta_i)`.
    pub u: Vec<f64>,
    /// `<a_I, C a_I>`.
    pub aggregate_market_variance: f64,
    /// `<a_i, C a_i>` per trader.
    pub hedgeable_var: Vec<f64>,
    pub endowment_mean: Vec<f64>,
    pub endowment_var: Vec<f64>,
    pub is_trivial: bool,
}

pub fn derive_exposures(model: &MarketModel) -> Result<ExposureProfile> {
    model.check()?;
    derive_unchecked(model)
}

fn derive_unchecked(model: &MarketModel) -> Result<ExposureProfile> {
    let cov = model.securities_cov.clone();
    let chol = Cholesky::new(cov.clone()).ok_or(Error::SingularFactorization)?;
    let k = cov.nrows();

    let a: Vec<DVector<f64>> = model
        .traders
        .iter()
        .map(|t| chol.solve(&DVector::from_column_slice(&t.cov_endowment_securities)))
        .collect();
    let a_total = a.iter().fold(DVector::zeros(k), |acc, ai| acc + ai);

    let quad = |x: &DVector<f64>, y: &DVector<f64>| x.dot(&(&cov * y));
    let aggregate = quad(&a_total, &a_total).max(0.0);
    let hedgeable_var: Vec<f64> = a.iter().map(|ai| quad(ai, ai).max(0.0)).collect();
    let denom: f64 = hedgeable_var.iter().sum();
    let is_trivial = if denom > 0.0 {
        aggregate < TRIVIAL_REL_TOL * denom
    } else {
        aggregate < TRIVIAL_ABS_TOL
    };

    let beta = if is_trivial {
        vec![0.0; a.len()]
    } else {
        a.iter().map(|ai| quad(&a_total, ai) / aggregate).collect()
    };

    let deltas: Vec<f64> = model.traders.iter().map(|t| t.delta).collect();
    let delta_total: f64 = deltas.iter().sum();
    let lambda = deltas.iter().map(|d| d / delta_total).collect();
    let u = model
        .traders
        .iter()
        .map(|t| t.endowment_mean - t.endowment_var / (2.0 * t.delta))
        .collect();

    Ok(ExposureProfile {
        cov,
        chol,
        deltas,
        a,
        a_total,
        beta,
        lambda,
        delta_total,
        u,
        aggregate_market_variance: aggregate,
        hedgeable_var,
        endowment_mean: model.traders.iter().map(|t| t.endowment_mean).collect(),
        endowment_var: model.traders.iter().map(|t| t.endowment_var).collect(),
        is_trivial,
    })
}

impl ExposureProfile {
    pub fn num_traders(&self) -> usize {
        self.a.len()
    }

    pub fn num_securities(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Betas, or `None` when `a_I = 0` and they are undefined.
    pub fn betas(&self) -> Option<&[f64]> {
        (!self.is_trivial).then_some(self.beta.as_slice())
    }

    pub fn non_trivial_betas(&self) -> Result<&[f64]> {
        self.betas().ok_or(Error::TrivialModel)
    }

    /// `<x, C y>`.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.cov * y))
    }

    /// `C^{-1} v` via the Cholesky factor.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn check_trader(&self, i: usize) -> Result<()> {
        if i < self.num_traders() {
            Ok(())
        } else {
            Err(Error::TraderIndex {
                index: i,
                count: self.num_traders(),
            })
        }
    }

    /// Certainty equivalent of `E_i + <q, S - p>`.
    pub fn post_trade_utility(&self, i: usize, q: &DVector<f64>, p: &DVector<f64>) -> f64 {
        let mean = self.endowment_mean[i] - q.dot(p);
        let var = self.post_trade_variance(i, q);
        mean - var / (2.0 * self.deltas[i])
    }

    /// `Var(E_i + <q, S>) = Var(E_i) + 2 <q, C a_i> + <q, C q>`.
    pub fn post_trade_variance(&self, i: usize, q: &DVector<f64>) -> f64 {
        self.endowment_var[i] + 2.0 * self.inner(q, &self.a[i]) + self.inner(q, q)
    }
}

/// CARA certainty equivalent of a Gaussian payoff `N(mean, variance)`.
pub fn certainty_equivalent(mean: f64, variance: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "risk tolerance must be strictly positive, got {delta}"
        )));
    }
    if variance < 0.0 {
        return Err(Error::Domain(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    Ok(mean - variance / (2.0 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_trader(cov_es: [f64; 2]) -> MarketModel {
        MarketModel::new(
            DMatrix::identity(1, 1),
            vec![
                TraderProfile::new(1.0, vec![cov_es[0]]),
                TraderProfile::new(1.0, vec![cov_es[1]]),
            ],
        )
    }

    #[test]
    fn identity_cov_two_traders_is_valid() {
        let m = MarketModel::new(
            DMatrix::identity(2, 2),
            vec![
                TraderProfile::new(1.0, vec![0.3, 0.1]),
                TraderProfile::new(1.0, vec![-0.2, 0.4]),
            ],
        );
        assert!(m.validate().is_empty());
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        // eigenvalues 1 and -0.1
        let c = DMatrix::from_row_slice(2, 2, &[0.45, 0.55, 0.55, 0.45]);
        let m = MarketModel::new(
            c,
            vec![
                TraderProfile::new(1.0, vec![0.0, 0.0]),
                TraderProfile::new(1.0, vec![0.0, 0.0]),
            ],
        );
        let v = m.validate();
        assert!(matches!(v[0], Violation::NotPositiveDefinite { min_eigenvalue } if (min_eigenvalue + 0.1).abs() < 1e-12));
        assert!(v[0].to_string().contains("not positive definite"));
    }

    #[test]
    fn zero_delta_rejected() {
        let mut m = two_trader([1.0, 0.0]);
        m.traders[1].delta = 0.0;
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0]
            .to_string()
            .contains("risk tolerance must be strictly positive"));
    }

    #[test]
    fn asymmetric_and_ragged_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        let m = MarketModel::new(
            c,
            vec![
                TraderProfile::new(1.0, vec![0.0, 0.0]),
                TraderProfile::new(1.0, vec![0.0]),
            ],
        );
        let v = m.validate();
        assert!(v.iter().any(|x| matches!(x, Violation::NotSymmetric { .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::DimensionMismatch { trader: 1, .. })));
    }

    #[test]
    fn single_trader_rejected() {
        let m = MarketModel::new(
            DMatrix::identity(1, 1),
            vec![TraderProfile::new(1.0, vec![1.0])],
        );
        assert_eq!(m.validate(), vec![Violation::TooFewTraders(1)]);
    }

    #[test]
    fn total_var_below_projection_rejected() {
        let m = two_trader([1.5, -0.5]).with_total_endowment_var(0.5);
        assert!(matches!(
            m.validate()[..],
            [Violation::InconsistentTotalVar { .. }]
        ));
        assert!(two_trader([1.5, -0.5])
            .with_total_endowment_var(1.0)
            .validate()
            .is_empty());
    }

    #[test]
    fn one_security_exposures() {
        let e = two_trader([1.5, -0.5]).exposures().unwrap();
        // C = [1]: a_i = Cov(E_i, S) directly
        assert_abs_diff_eq!(e.a[0][0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.a[1][0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.a_total[0], 1.0, epsilon = 1e-15);
        assert_eq!(e.betas().unwrap(), &[1.5, -0.5]);
        assert_eq!(e.lambda, vec![0.5, 0.5]);
        assert!(!e.is_trivial);
    }

    #[test]
    fn exposures_solve_the_linear_system() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let covs = [vec![0.4, -0.1, 0.2], vec![-0.3, 0.5, 0.05], vec![0.1, 0.1, -0.6]];
        let m = MarketModel::new(
            c.clone(),
            covs.iter()
                .map(|v| TraderProfile::new(0.7, v.clone()))
                .collect(),
        );
        let e = m.exposures().unwrap();
        for (ai, v) in e.a.iter().zip(&covs) {
            let back = &c * ai;
            for k in 0..3 {
                assert_abs_diff_eq!(back[k], v[k], epsilon = 1e-13);
            }
        }
        assert_abs_diff_eq!(e.beta.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_covariances_are_trivial() {
        let e = two_trader([0.0, 0.0]).exposures().unwrap();
        assert!(e.is_trivial);
        assert!(e.betas().is_none());
        assert_eq!(e.non_trivial_betas(), Err(Error::TrivialModel));
        // cancelling exposures are trivial too
        let e = two_trader([0.7, -0.7]).exposures().unwrap();
        assert!(e.is_trivial);
    }

    #[test]
    fn lambdas_sum_to_one() {
        let m = MarketModel::with_betas(&[0.3, 1.7, 2.2], &[0.2, 0.5, 0.3], 1.0, 1.0).unwrap();
        let e = m.exposures().unwrap();
        assert_abs_diff_eq!(e.lambda.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn with_betas_reproduces_betas() {
        let m = MarketModel::with_betas(&[1.0, 2.0, 0.5], &[1.2, 0.2, -0.4], 2.5, 0.8).unwrap();
        let e = m.exposures().unwrap();
        for (b, want) in e.beta.iter().zip([1.2, 0.2, -0.4]) {
            assert_abs_diff_eq!(*b, want, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(e.aggregate_market_variance, 0.8, epsilon = 1e-14);
    }

    #[test]
    fn certainty_equivalent_values() {
        assert_eq!(certainty_equivalent(1.0, 4.0, 2.0).unwrap(), 0.0);
        assert_eq!(certainty_equivalent(0.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            certainty_equivalent(1.0, 1.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(certainty_equivalent(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn post_trade_utility_matches_certainty_equivalent() {
        let m = two_trader([1.5, -0.5]);
        let mut m = m;
        m.traders[0] = m.traders[0].clone().with_endowment(0.3, 4.0);
        let e = m.exposures().unwrap();
        let q = DVector::from_element(1, -1.0);
        let p = DVector::from_element(1, -0.5);
        // mean 0.3 - (-1)(-0.5) = -0.2, var 4 + 2(-1)(1.5) + 1 = 2
        let want = certainty_equivalent(-0.2, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(e.post_trade_utility(0, &q, &p), want, epsilon = 1e-15);
    }
}
