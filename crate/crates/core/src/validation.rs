//! Oracles the solver is tested against: Monte-Carlo certainty equivalents,
//! a grid search for best responses and damped best-response iteration.
//!
//! # Sampling
//!
//! Samples are drawn in chunks of [`MC_CHUNK`]. Chunk `j` uses
//! `ChaCha20Rng::seed_from_u64(seed)` with `set_stream(j)`. Uniforms are
//! `(next_u64() >> 11) * 2^-53`; standard normals come in pairs from the
//! Box-Muller transform `sqrt(-2 ln(1 - u1)) * (cos, sin)(2 pi u2)`. Chunk
//! statistics are merged in chunk order, so results do not depend on the
//! number of worker threads.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::best_response::best_response;
use crate::elasticity::{Elasticity, ElasticityVector};
use crate::error::{Error, Result};
use crate::market::ExposureProfile;

pub const MC_CHUNK: usize = 1 << 16;
/// Grid size of [`grid_best_response`].
pub const GRID_POINTS: usize = 100_000;
pub const DEFAULT_DAMPING: f64 = 0.5;
/// Step size below which the iteration counts as converged.
pub const ITERATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub sample_count: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(sample_count: usize, seed: u64) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::Domain("sample_count must be at least 1".into()));
        }
        Ok(Self { sample_count, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// False when `exp(-X / delta)` overflowed for some sample.
    pub reliable: bool,
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.n += 1.0;
        let d = y - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (y - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }
}

fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draws for chunk `chunk` of the stream seeded by `seed`.
pub fn normal_chunk(seed: u64, chunk: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let mut out = Vec::with_capacity(len + 1);
    while out.len() < len {
        let r = (-2.0 * (1.0 - uniform(&mut rng)).ln()).sqrt();
        let angle = 2.0 * PI * uniform(&mut rng);
        out.push(r * angle.cos());
        out.push(r * angle.sin());
    }
    out.truncate(len);
    out
}

/// Estimates `-delta log E[exp(-X / delta)]` for `X ~ N(mean, variance)`.
///
/// Samples are centred at `mean` before exponentiating, which leaves the
/// estimator unchanged. The standard error is the delta-method value
/// `delta * sd(Y) / (sqrt(n) * mean(Y))` with `Y = exp(-(X - mean) / delta)`.
pub fn mc_certainty_equivalent(mean: f64, variance: f64, delta: f64, cfg: &McConfig) -> Result<McEstimate> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    if !(variance >= 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::Domain(format!(
            "need finite mean and nonnegative variance, got ({mean}, {variance})"
        )));
    }
    if cfg.sample_count == 0 {
        return Err(Error::Domain("sample_count must be at least 1".into()));
    }
    let sd = variance.sqrt();
    let chunks = cfg.sample_count.div_ceil(MC_CHUNK);
    let parts: Vec<(Moments, bool)> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let len = MC_CHUNK.min(cfg.sample_count - j * MC_CHUNK);
            let mut m = Moments::default();
            let mut finite = true;
            for z in normal_chunk(cfg.seed, j as u64, len) {
                let y = (-sd * z / delta).exp();
                finite &= y.is_finite();
                m.push(y);
            }
            (m, finite)
        })
        .collect();
    let (m, reliable) = parts
        .into_iter()
        .fold((Moments::default(), true), |(acc, ok), (m, f)| (acc.merge(m), ok && f));

    let estimate = mean - delta * m.mean.ln();
    let sample_sd = if m.n > 1.0 { (m.m2 / (m.n - 1.0)).sqrt() } else { 0.0 };
    let std_error = delta * sample_sd / (m.n.sqrt() * m.mean);
    let reliable = reliable && estimate.is_finite() && std_error.is_finite();
    Ok(McEstimate {
        estimate,
        std_error,
        reliable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub k: f64,
    pub theta: Elasticity,
    pub value: f64,
}

/// Trader `i`'s certainty equivalent when holding share `k` of the aggregate
/// exposure, evaluated from the post-trade position
/// `q = k a_I - a_i` at price `p = -(1 - k) C a_I / theta_rest`.
pub fn share_utility(exposures: &ExposureProfile, i: usize, k: f64, theta_rest: f64) -> f64 {
    let q = &exposures.a_total * k - &exposures.a[i];
    let p: DVector<f64> = -(exposures.covariance() * &exposures.a_total) * ((1.0 - k) / theta_rest);
    exposures.post_trade_utility(i, &q, &p)
}

/// Maximizes [`share_utility`] over `k` in `[0, 1]`: a uniform grid of
/// `points + 1` nodes, then golden-section search between the neighbours of
/// the best node.
pub fn grid_best_response(
    exposures: &ExposureProfile,
    i: usize,
    theta_rest: f64,
    points: usize,
) -> Result<GridOptimum> {
    exposures.check_trader(i)?;
    if !(theta_rest > 0.0 && theta_rest.is_finite()) {
        return Err(Error::Domain(format!(
            "theta_rest must be positive and finite, got {theta_rest}"
        )));
    }
    let points = points.max(2);
    // share_utility expanded in the scalars <a_I, C a_I>, <a_i, C a_I>, <a_i, C a_i>
    let agg = exposures.aggregate_market_variance;
    let cross = exposures.inner(&exposures.a[i], &exposures.a_total);
    let own = exposures.hedgeable_var[i];
    let (mean, var, delta) = (exposures.endowment_mean[i], exposures.endowment_var[i], exposures.deltas[i]);
    let f = |k: f64| {
        let premium = -(1.0 - k) / theta_rest * (k * agg - cross);
        let post_var = var + 2.0 * (k * cross - own) + (k * k * agg - 2.0 * k * cross + own);
        mean - premium - post_var / (2.0 * delta)
    };
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..=points {
        let v = f(j as f64 / points as f64);
        if v > best.1 {
            best = (j, v);
        }
    }
    let mut lo = best.0.saturating_sub(1) as f64 / points as f64;
    let mut hi = (best.0 + 1).min(points) as f64 / points as f64;

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-13 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    // the endpoints of [0, 1] are candidates in their own right
    let (k, value) = [(0.0, f(0.0)), (mid, f(mid)), (1.0, f(1.0))]
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    let theta = if k >= 1.0 {
        Elasticity::Infinite
    } else {
        Elasticity::new(k * theta_rest / (1.0 - k))?
    };
    Ok(GridOptimum { k, theta, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Escalation {
    pub iteration: usize,
    pub trader: usize,
    pub to: Elasticity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Starting point followed by every iterate.
    pub iterates: Vec<ElasticityVector>,
    pub converged: bool,
    pub final_residual: f64,
    /// Largest relative step of each iteration over finite coordinates.
    pub residuals: Vec<f64>,
    /// Changes of a coordinate to `Zero` or `Infinite` (or back).
    pub escalations: Vec<Escalation>,
}

impl IterationTrace {
    pub fn last(&self) -> &ElasticityVector {
        self.iterates.last().expect("trace holds the starting point")
    }
}

fn same_tag(a: Elasticity, b: Elasticity) -> bool {
    std::mem::discriminant(&a) == std::mem::discriminant(&b)
}

/// Jacobi best-response dynamics with convex damping. A coordinate whose
/// response or current value is `Zero` or `Infinite` jumps to the response.
pub fn iterate_best_responses(
    exposures: &ExposureProfile,
    start: &ElasticityVector,
    damping: f64,
    max_iter: usize,
) -> Result<IterationTrace> {
    exposures.non_trivial_betas()?;
    if start.len() != exposures.num_traders() {
        return Err(Error::Domain(format!(
            "start has {} entries for {} traders",
            start.len(),
            exposures.num_traders()
        )));
    }
    if start.iter().any(|e| e.finite().is_none() || e.is_zero()) {
        return Err(Error::Domain("start must be strictly positive and finite".into()));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::Domain(format!("damping must lie in (0, 1], got {damping}")));
    }

    let mut trace = IterationTrace {
        iterates: vec![start.clone()],
        converged: false,
        final_residual: f64::INFINITY,
        residuals: Vec::new(),
        escalations: Vec::new(),
    };
    let mut current = start.clone();
    for iteration in 1..=max_iter {
        let mut next = Vec::with_capacity(current.len());
        let mut step = 0.0f64;
        let mut tags_stable = true;
        for i in 0..current.len() {
            let rest = current.total_except(i);
            let response = match best_response(exposures, i, rest) {
                Ok(r) => r.theta,
                // everyone else inelastic and no response exists
                Err(Error::Domain(_)) => return Ok(trace),
                Err(e) => return Err(e),
            };
            let cur = current[i];
            let new = match (cur, response) {
                (Elasticity::Finite(c), Elasticity::Finite(r)) => {
                    let v = (1.0 - damping) * c + damping * r;
                    step = step.max((v - c).abs() / c.abs().max(v.abs()).max(f64::MIN_POSITIVE));
                    Elasticity::Finite(v)
                }
                _ => response,
            };
            if !same_tag(cur, new) {
                tags_stable = false;
                trace.escalations.push(Escalation {
                    iteration,
                    trader: i,
                    to: new,
                });
            }
            next.push(new);
        }
        current = ElasticityVector(next);
        trace.iterates.push(current.clone());
        trace.residuals.push(step);
        trace.final_residual = step;
        if tags_stable && step < ITERATION_TOL {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}
