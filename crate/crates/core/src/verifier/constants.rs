use serde::{Deserialize, Serialize};

use super::PROB_TOLERANCE;
use crate::error::{Error, Result};
use crate::kernel::{check_symmetry, KernelFamily};
use crate::prob::{exact_law, grid_from_laws, Mode, NormLaw, StatisticSpec};
use crate::scalar::Scalar;
use crate::value_space::{saturating_pow, DiscreteDistribution, EnumerationBudget, Norm};

/// Upper end of the bisection bracket.
pub const BRACKET_TOP: f64 = (1u64 << 20) as f64;

/// Relative width at which bisection stops.
pub const DEFAULT_BISECTION_TOLERANCE: f64 = 1e-3;

/// Which pair of statistics a constant compares. The check is always
/// `P(lhs >= t) <= C P(C rhs >= t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "direction")]
pub enum Direction {
    /// Coupled against fully decoupled.
    Upper,
    /// Fully decoupled against coupled; needs a symmetric kernel.
    Lower,
    /// Sum over all `l^k` copy patterns against coupled.
    Lemma3 { l: usize },
}

impl Direction {
    pub fn lhs_mode(self, k: usize) -> Mode {
        match self {
            Direction::Upper => Mode::Coupled,
            Direction::Lower => Mode::decoupled(k),
            Direction::Lemma3 { l } => Mode::Mixed { l },
        }
    }

    pub fn rhs_mode(self, k: usize) -> Mode {
        match self {
            Direction::Upper => Mode::decoupled(k),
            Direction::Lower | Direction::Lemma3 { .. } => Mode::Coupled,
        }
    }

    pub fn label(self) -> String {
        match self {
            Direction::Upper => "upper".into(),
            Direction::Lower => "lower".into(),
            Direction::Lemma3 { l } => format!("lemma3(l={l})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchSettings {
    pub tolerance: f64,
    pub budget: EnumerationBudget,
    /// Cap on realizations times kernel evaluations per realization.
    pub work_budget: EnumerationBudget,
    pub symmetry_trials: usize,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_BISECTION_TOLERANCE,
            budget: EnumerationBudget::default(),
            work_budget: EnumerationBudget(1 << 28),
            symmetry_trials: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSearchResult {
    pub direction: Direction,
    pub instance: String,
    pub c_min: f64,
    pub feasible: bool,
    pub bracket: (f64, f64),
    pub t_grid: Vec<f64>,
    /// `c_min P(c_min rhs >= t) - P(lhs >= t)` per grid point.
    pub slack: Vec<f64>,
}

fn scaled_tail(rhs: &NormLaw, t: f64, c: f64) -> f64 {
    rhs.tail_at(t / c)
}

/// `P(lhs >= t) <= c P(c rhs >= t)` at every grid point.
pub fn is_feasible(lhs: &NormLaw, rhs: &NormLaw, c: f64, grid: &[f64]) -> bool {
    grid.iter().all(|&t| lhs.tail(t) <= c * scaled_tail(rhs, t, c) + PROB_TOLERANCE)
}

/// Constants at which some grid constraint becomes active: for threshold `t`
/// and rhs atom `v` with tail `τ`, `max(t / v, P(lhs >= t) / τ)`.
fn breakpoints(lhs: &NormLaw, rhs: &NormLaw, grid: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let atoms: Vec<f64> = rhs.values().filter(|&v| v > 0.0).collect();
    let mut out = Vec::new();
    for &t in grid {
        let need = lhs.tail(t);
        if need <= 0.0 {
            continue;
        }
        for &v in &atoms {
            let c = (t / v).max(need / rhs.tail(v));
            if c > lo && c <= hi {
                out.push(c);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Bisection for the least feasible constant between two exact laws.
///
/// Feasibility only grows with `c`, so after bisection narrows the bracket
/// to the tolerance, the exact frontier, which is always one of the
/// [`breakpoints`], is located inside it when representable.
pub fn search_laws(direction: Direction, instance: String, lhs: &NormLaw, rhs: &NormLaw, tolerance: f64) -> ConstantSearchResult {
    let grid = grid_from_laws(&[lhs, rhs]);
    let slack_at = |c: f64| -> Vec<f64> { grid.iter().map(|&t| c * scaled_tail(rhs, t, c) - lhs.tail(t)).collect() };
    let done = |c_min: f64, feasible: bool, bracket: (f64, f64)| ConstantSearchResult {
        direction,
        instance: instance.clone(),
        c_min,
        feasible,
        bracket,
        t_grid: grid.clone(),
        slack: slack_at(c_min),
    };
    if is_feasible(lhs, rhs, 1.0, &grid) {
        return done(1.0, true, (1.0, 1.0));
    }
    if !is_feasible(lhs, rhs, BRACKET_TOP, &grid) {
        return done(BRACKET_TOP, false, (1.0, BRACKET_TOP));
    }
    let (mut lo, mut hi) = (1.0, BRACKET_TOP);
    while hi - lo > tolerance * hi {
        let mid = 0.5 * (lo + hi);
        if is_feasible(lhs, rhs, mid, &grid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c_min = breakpoints(lhs, rhs, &grid, lo, hi)
        .into_iter()
        .find(|&c| is_feasible(lhs, rhs, c, &grid))
        .unwrap_or(hi);
    done(c_min, true, (lo, hi))
}

fn checked_law<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    n: usize,
    mode: Mode,
    norm: Norm,
    settings: &SearchSettings,
) -> Result<(NormLaw, String)> {
    let spec = StatisticSpec::new(kf.clone(), n, mode, norm)?;
    let realizations = saturating_pow(dist.len(), n * spec.copies_needed());
    settings.budget.check(realizations)?;
    settings.work_budget.check(realizations.saturating_mul(spec.evaluations_per_sample()))?;
    Ok((exact_law(&spec, dist, settings.budget)?, spec.describe()))
}

/// Least `C` in `[1, 2^20]` with `P(||lhs|| >= t) <= C P(C ||rhs|| >= t)` for
/// all `t`, from the exact laws of both statistics.
///
/// The lower direction is refused for kernels that fail the symmetry test.
pub fn search_constant<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    n: usize,
    direction: Direction,
    norm: Norm,
    settings: &SearchSettings,
) -> Result<ConstantSearchResult> {
    if direction == Direction::Lower && !check_symmetry(kf, dist, settings.symmetry_trials, settings.seed) {
        return Err(Error::AsymmetricKernel(kf.name().to_string()));
    }
    search_constant_unchecked(kf, dist, n, direction, norm, settings)
}

/// [`search_constant`] without the symmetry gate.
pub fn search_constant_unchecked<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    n: usize,
    direction: Direction,
    norm: Norm,
    settings: &SearchSettings,
) -> Result<ConstantSearchResult> {
    let k = kf.order();
    if let Direction::Lemma3 { l } = direction {
        if l == 0 || l > k {
            return Err(Error::invalid(format!("l = {l} must lie in 1..={k}")));
        }
    }
    let (lhs, name) = checked_law(kf, dist, n, direction.lhs_mode(k), norm, settings)?;
    let (rhs, _) = checked_law(kf, dist, n, direction.rhs_mode(k), norm, settings)?;
    let instance = format!("{} vs {}", name, direction.rhs_mode(k).label());
    Ok(search_laws(direction, instance, &lhs, &rhs, settings.tolerance))
}
