#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use riskshare::{ExposureProfile, MarketModel, TraderProfile};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn normal(rng: &mut StdRng) -> f64 {
    // sum of uniforms is plenty for generating test instances
    (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
}

/// Random positive definite covariance `L L^T + 0.2 I`.
pub fn random_cov(rng: &mut StdRng, k: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(k, k, |_, _| normal(rng) / (k as f64).sqrt());
    &l * l.transpose() + DMatrix::identity(k, k) * 0.2
}

/// `n` traders, `k` securities, risk tolerances in `[0.2, 5]`, endowment
/// variances at least the hedgeable part.
pub fn random_model(rng: &mut StdRng, n: usize, k: usize) -> MarketModel {
    let cov = random_cov(rng, k);
    let traders = (0..n)
        .map(|_| {
            let cov_es = (0..k).map(|_| normal(rng)).collect();
            TraderProfile::new(log_uniform(rng, 0.2, 5.0), cov_es)
        })
        .collect();
    let mut model = MarketModel::new(cov, traders);
    let e = model.exposures().expect("random model is valid");
    for (t, c) in model.traders.iter_mut().zip(&e.hedgeable_var) {
        t.endowment_mean = rng.random_range(-1.0..1.0);
        t.endowment_var = c + rng.random_range(0.0..1.0);
    }
    model
}

/// Single-security model with the given betas and risk tolerances, a random
/// aggregate variance and consistent endowment variances.
pub fn beta_model(rng: &mut StdRng, deltas: &[f64], betas: &[f64]) -> MarketModel {
    let agg = log_uniform(rng, 0.3, 3.0);
    let mut model = MarketModel::with_betas(deltas, betas, log_uniform(rng, 0.5, 2.0), agg).unwrap();
    for (t, b) in model.traders.iter_mut().zip(betas) {
        t.endowment_var = b * b * agg + rng.random_range(0.0..1.0);
    }
    model
}

/// Betas summing to one, the first `n - 1` uniform in `[lo, hi]`.
pub fn random_betas(rng: &mut StdRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut b: Vec<f64> = (0..n - 1).map(|_| rng.random_range(lo..hi)).collect();
    b.push(1.0 - b.iter().sum::<f64>());
    b
}

pub fn count_high_betas(e: &ExposureProfile) -> usize {
    e.beta.iter().filter(|&&b| b > 1.0).count()
}

/// Exactly two traders with `beta > -1`, strict closed-form condition.
pub fn satisfies_bilateral(e: &ExposureProfile) -> bool {
    if e.is_trivial {
        return false;
    }
    let active: Vec<usize> = (0..e.num_traders()).filter(|&i| e.beta[i] > -1.0).collect();
    let [p, q] = active[..] else { return false };
    let (lp, lq) = (e.lambda[p], e.lambda[q]);
    (lp * e.beta[p] - lq * e.beta[q]).abs() < lp + lq
}

/// Draws models from `draw` until `accept` holds.
pub fn sample_where(
    rng: &mut StdRng,
    mut draw: impl FnMut(&mut StdRng) -> MarketModel,
    accept: impl Fn(&ExposureProfile) -> bool,
) -> (MarketModel, ExposureProfile) {
    loop {
        let m = draw(rng);
        if let Ok(e) = m.exposures() {
            if !e.is_trivial && accept(&e) {
                return (m, e);
            }
        }
    }
}

/// Mixed bag: general multi-security models and single-security beta models
/// covering every regime.
pub fn any_instance(rng: &mut StdRng) -> (MarketModel, ExposureProfile) {
    let n = rng.random_range(2..=6);
    if rng.random_bool(0.5) {
        let k = rng.random_range(1..=3);
        sample_where(rng, |r| random_model(r, n, k), |_| true)
    } else {
        let deltas: Vec<f64> = (0..n).map(|_| log_uniform(rng, 0.2, 5.0)).collect();
        let betas = random_betas(rng, n, -2.0, 3.0);
        let m = beta_model(rng, &deltas, &betas);
        let e = m.exposures().unwrap();
        (m, e)
    }
}
