//! Strategic trading in incomplete markets with CARA traders.
//!
//! Traders hold jointly Gaussian endowments and trade a set of securities by
//! submitting linear demand schedules. This crate computes the competitive
//! benchmark, each trader's best response in elasticity, the unique linear
//! Nash equilibrium where it is known to exist, and welfare comparisons.
//!
//! ```
//! use riskshare::{MarketModel, nash};
//!
//! let model = MarketModel::with_betas(&[1.0, 1.0], &[1.2, -0.2], 1.0, 1.0).unwrap();
//! let exposures = model.exposures().unwrap();
//! let eq = nash::solve(&exposures).unwrap();
//! assert_eq!(eq.kind.name(), "bilateral_closed_form");
//! assert!((eq.elasticities[0].value() - 10.0 / 3.0).abs() < 1e-12);
//! ```

pub mod analysis;
pub mod best_response;
pub mod cli;
pub mod competitive;
pub mod elasticity;
pub mod error;
pub mod market;
pub mod nash;
pub mod validation;

pub use best_response::{best_response, BestResponseResult, Branch};
pub use competitive::{competitive_equilibrium, EquilibriumOutcome};
pub use elasticity::{Elasticity, ElasticityVector};
pub use error::{Error, Result};
pub use market::{ExposureProfile, MarketModel, TraderProfile};
pub use nash::{NashKind, NashSolution};
