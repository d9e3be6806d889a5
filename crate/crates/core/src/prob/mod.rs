//! Exact and Monte Carlo laws of U-statistic norms: tail functions, moments,
//! the anticoncentration functional and threshold grids.

mod ci;
mod exact;
mod kappa;
mod law;
mod monte_carlo;
mod statistic;

pub use ci::clopper_pearson;
pub use exact::{exact_law, exact_value_law};
pub use kappa::{kappa, KappaEstimate, DEFAULT_KAPPA_GRID, MEAN_TOLERANCE};
pub use law::{FiniteLaw, NormLaw, ScalarLaw, MERGE_TOLERANCE};
pub use monte_carlo::{
    mc_norm_samples, mc_tail, quantile_grid, tail_estimates, GaussianSampler, Sampler, TailEstimate,
    MC_CONFIDENCE, MIN_TRIALS, QUANTILE_LEVELS,
};
pub use statistic::{Mode, StatisticSpec};

/// `P(X >= t)` for a norm law.
pub fn tail(law: &NormLaw, t: f64) -> f64 {
    law.tail(t)
}

/// `(E|X|^p)^(1/p)` for any finite law.
pub fn moment(law: &impl FiniteLaw, p: f64) -> f64 {
    law.moment(p)
}

/// Threshold grid for one or more exact laws: every positive support point,
/// every midpoint between consecutive points, a point just above zero and a
/// point just above the largest value.
pub fn grid_from_laws(laws: &[&NormLaw]) -> Vec<f64> {
    let mut pts: Vec<f64> = laws.iter().flat_map(|l| l.values()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let max = pts.last().copied().unwrap_or(0.0);
    let positive: Vec<f64> = pts.iter().copied().filter(|&v| v > 0.0).collect();
    let mut grid = Vec::with_capacity(2 * pts.len() + 2);
    let smallest = positive.first().copied().unwrap_or(1.0);
    grid.push(smallest * 1e-6);
    for (i, &v) in positive.iter().enumerate() {
        grid.push(v);
        if let Some(&next) = positive.get(i + 1) {
            grid.push(0.5 * (v + next));
        }
    }
    grid.push(if max > 0.0 { max * (1.0 + 1e-6) } else { 1.0 });
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}
