use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ci::clopper_pearson;
use super::statistic::StatisticSpec;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::Scalar;
use crate::ustat::SampleMatrix;
use crate::value_space::{DiscreteDistribution, NormedValue};

/// Confidence level of the reported intervals.
pub const MC_CONFIDENCE: f64 = 0.99;

/// Smallest accepted trial count.
pub const MIN_TRIALS: u64 = 100;

/// Quantile levels for grids when no exact law is available.
pub const QUANTILE_LEVELS: [f64; 5] = [0.5, 0.75, 0.9, 0.95, 0.99];

/// Draws one sample point.
pub trait Sampler<T: Scalar>: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> NormedValue<T>;
}

impl<T: Scalar> Sampler<T> for DiscreteDistribution<T> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> NormedValue<T> {
        self.value(self.atom_for_uniform(rng.random::<f64>())).clone()
    }
}

/// Independent centred normal coordinates.
#[derive(Clone, Copy, Debug)]
pub struct GaussianSampler {
    pub dim: usize,
    pub std_dev: f64,
}

impl<T: Scalar> Sampler<T> for GaussianSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> NormedValue<T> {
        NormedValue::new((0..self.dim).map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::of(z * self.std_dev)
        }))
        .expect("dim >= 1")
    }
}

/// Monte Carlo estimate of `P(||S|| >= t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub t: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub successes: u64,
    pub trials: u64,
    pub seed: u64,
}

impl TailEstimate {
    pub fn covers(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// `||S||` for trials `0..trials`, trial `i` drawn from stream `i` under `seed`.
///
/// The sample matrix is filled row-major, so output is independent of how
/// trials are spread across workers.
pub fn mc_norm_samples<T: Scalar>(
    spec: &StatisticSpec<T>,
    sampler: &dyn Sampler<T>,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let copies = spec.copies_needed();
    let n = spec.n;
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(seed, trial);
            let rows = (0..n)
                .map(|_| (0..copies).map(|_| sampler.sample(&mut rng)).collect())
                .collect();
            spec.norm_of(&SampleMatrix::from_rows(rows)?)
        })
        .collect()
}

/// Tail estimates on `t_grid` with Clopper-Pearson intervals at [`MC_CONFIDENCE`].
pub fn mc_tail<T: Scalar>(
    spec: &StatisticSpec<T>,
    sampler: &dyn Sampler<T>,
    t_grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<TailEstimate>> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid(format!("at least {MIN_TRIALS} trials required, got {trials}")));
    }
    let norms = mc_norm_samples(spec, sampler, trials, seed)?;
    Ok(tail_estimates(&norms, t_grid, seed))
}

/// Turns raw norm samples into per-threshold estimates.
pub fn tail_estimates(norms: &[f64], t_grid: &[f64], seed: u64) -> Vec<TailEstimate> {
    let trials = norms.len() as u64;
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    t_grid
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&x| x < t) as u64;
            let successes = trials - below;
            let (ci_low, ci_high) = clopper_pearson(successes, trials, MC_CONFIDENCE);
            TailEstimate {
                t,
                p_hat: successes as f64 / trials as f64,
                ci_low,
                ci_high,
                successes,
                trials,
                seed,
            }
        })
        .collect()
}

/// Empirical quantiles at [`QUANTILE_LEVELS`] (lower quantile convention).
pub fn quantile_grid(norms: &[f64]) -> Vec<f64> {
    if norms.is_empty() {
        return Vec::new();
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = QUANTILE_LEVELS
        .iter()
        .map(|q| {
            let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
            sorted[idx]
        })
        .collect();
    grid.dedup();
    grid
}
