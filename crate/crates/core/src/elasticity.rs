//! Submitted demand elasticities on the extended nonnegative reals.

use std::fmt;
use std::ops::Add;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Elasticity of a submitted linear demand `-a_i - theta C^{-1} p`.
///
/// `Zero` is the perfectly inelastic demand, `Infinite` the risk-neutral one.
/// A `Finite` value is always strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elasticity {
    Zero,
    Finite(f64),
    Infinite,
}

impl Elasticity {
    /// Maps `0` to `Zero` and `+inf` to `Infinite`; rejects negatives and NaN.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            Err(Error::Domain(format!(
                "elasticity must be nonnegative, got {value}"
            )))
        } else if value == 0.0 {
            Ok(Elasticity::Zero)
        } else if value.is_infinite() {
            Ok(Elasticity::Infinite)
        } else {
            Ok(Elasticity::Finite(value))
        }
    }

    /// The value as a float (`f64::INFINITY` for `Infinite`).
    pub fn value(self) -> f64 {
        match self {
            Elasticity::Zero => 0.0,
            Elasticity::Finite(x) => x,
            Elasticity::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Elasticity::Infinite)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Elasticity::Zero)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Elasticity::Infinite => None,
            e => Some(e.value()),
        }
    }

    /// Same tag and, for finite values, relative distance at most `rel_tol`.
    pub fn approx_eq(self, other: Elasticity, rel_tol: f64) -> bool {
        match (self, other) {
            (Elasticity::Zero, Elasticity::Zero) | (Elasticity::Infinite, Elasticity::Infinite) => {
                true
            }
            (Elasticity::Finite(x), Elasticity::Finite(y)) => {
                (x - y).abs() <= rel_tol * x.abs().max(y.abs())
            }
            _ => false,
        }
    }
}

impl Add for Elasticity {
    type Output = Elasticity;

    fn add(self, rhs: Elasticity) -> Elasticity {
        match (self, rhs) {
            (Elasticity::Infinite, _) | (_, Elasticity::Infinite) => Elasticity::Infinite,
            (Elasticity::Zero, x) | (x, Elasticity::Zero) => x,
            (Elasticity::Finite(x), Elasticity::Finite(y)) => Elasticity::Finite(x + y),
        }
    }
}

impl fmt::Display for Elasticity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Elasticity::Zero => write!(f, "0"),
            Elasticity::Finite(x) => write!(f, "{x}"),
            Elasticity::Infinite => write!(f, "inf"),
        }
    }
}

/// Finite values serialize as numbers, `Infinite` as the string `"inf"`.
impl Serialize for Elasticity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Elasticity::Infinite => s.serialize_str("inf"),
            e => s.serialize_f64(e.value()),
        }
    }
}

/// Per-trader elasticities.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ElasticityVector(pub Vec<Elasticity>);

impl ElasticityVector {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .map(|&v| Elasticity::new(v))
            .collect::<Result<Vec<_>>>()
            .map(ElasticityVector)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Elasticity> {
        self.0.iter()
    }

    pub fn total(&self) -> Elasticity {
        self.0.iter().fold(Elasticity::Zero, |acc, &e| acc + e)
    }

    /// Aggregate elasticity of everyone except trader `i`.
    pub fn total_except(&self, i: usize) -> Elasticity {
        self.0
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .fold(Elasticity::Zero, |acc, (_, &e)| acc + e)
    }

    /// Shares `theta_i / theta_I`, with share one for a trader submitting
    /// infinite elasticity. Fails when the total is zero or more than one
    /// trader is infinite.
    pub fn shares(&self) -> Result<Vec<f64>> {
        let infinite: Vec<usize> = (0..self.len()).filter(|&i| self.0[i].is_infinite()).collect();
        match infinite.len() {
            0 => {
                let total = self.total().value();
                if total <= 0.0 {
                    return Err(Error::Domain(
                        "aggregate elasticity is zero; no clearing price".into(),
                    ));
                }
                Ok(self.0.iter().map(|e| e.value() / total).collect())
            }
            1 => Ok((0..self.len())
                .map(|i| if i == infinite[0] { 1.0 } else { 0.0 })
                .collect()),
            _ => Err(Error::Domain(
                "more than one trader submits infinite elasticity; shares undefined".into(),
            )),
        }
    }
}

impl std::ops::Index<usize> for ElasticityVector {
    type Output = Elasticity;

    fn index(&self, i: usize) -> &Elasticity {
        &self.0[i]
    }
}
