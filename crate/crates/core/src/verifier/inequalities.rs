use rand::seq::index::sample;
use rand::Rng;

use super::chaos::{Chaos, ChaosVariables};
use super::{InequalityReport, Relation, ThresholdRow};
use crate::error::Result;
use crate::prob::{exact_value_law, grid_from_laws, kappa, FiniteLaw, KappaEstimate, NormLaw, StatisticSpec, MERGE_TOLERANCE};
use crate::rng::stream_rng;
use crate::scalar::Scalar;
use crate::value_space::{DiscreteDistribution, EnumerationBudget, Norm, NormedValue};

/// Factor in front of the symmetrized tail.
pub const LEMMA1_FACTOR: f64 = 3.0;

fn describe_law(x: &DiscreteDistribution<f64>) -> String {
    format!("{}-atom law on R^{}", x.len(), x.dim())
}

/// `P(||X|| >= t) <= 3 P(||X + Y|| >= 2t/3)` for `Y` an independent copy of
/// `X`, at every threshold where either side jumps.
pub fn verify_lemma1(x: &DiscreteDistribution<f64>, norm: Norm, budget: EnumerationBudget) -> Result<InequalityReport> {
    budget.check((x.len() as u128).pow(2))?;
    let single = NormLaw::from_outcomes(x.atoms().iter().map(|a| (norm.eval(&a.value), a.prob)).collect())?;
    let mut pairs = Vec::with_capacity(x.len() * x.len());
    for a in x.atoms() {
        for b in x.atoms() {
            pairs.push((norm.eval(&(&a.value + &b.value)), a.prob * b.prob));
        }
    }
    // P(||X+Y|| >= 2t/3) is the tail of (3/2)||X+Y|| at t
    let sum = NormLaw::from_outcomes(pairs)?.scaled(1.5)?;
    let rows = grid_from_laws(&[&single, &sum])
        .into_iter()
        .map(|t| ThresholdRow::probability(Some(t), single.tail(t), LEMMA1_FACTOR * sum.tail_at(t), Relation::AtMost))
        .collect();
    Ok(InequalityReport::new("lemma1", describe_law(x), Relation::AtMost, rows))
}

/// [`verify_lemma1`] with `X` the vector statistic of `spec` under `dist`.
pub fn verify_lemma1_statistic<T: Scalar>(
    spec: &StatisticSpec<T>,
    dist: &DiscreteDistribution<T>,
    budget: EnumerationBudget,
) -> Result<InequalityReport> {
    let law = exact_value_law(spec, dist, budget)?;
    let mut report = verify_lemma1(&law, spec.norm, budget)?;
    report.instance = spec.describe();
    Ok(report)
}

/// `P(||a + Y|| >= ||a||) >= κ/4` for mean-zero `Y`, both sides exact.
///
/// In dimension above one the κ used is the grid estimate, which can only
/// overstate the true value; the report carries a note saying so.
pub fn verify_prop1(
    a: &NormedValue<f64>,
    y: &DiscreteDistribution<f64>,
    norm: Norm,
    kappa_grid: usize,
) -> Result<(InequalityReport, KappaEstimate)> {
    let k = kappa(y, norm, kappa_grid)?;
    let level = norm.eval(a);
    let threshold = level * (1.0 - MERGE_TOLERANCE);
    let mut lhs = 0.0;
    for atom in y.atoms() {
        let shifted = a.checked_add(&atom.value)?;
        if norm.eval(&shifted) >= threshold {
            lhs += atom.prob;
        }
    }
    let rows = vec![ThresholdRow::probability(Some(level), lhs.min(1.0), k.value / 4.0, Relation::AtLeast)];
    let mut report = InequalityReport::new("prop1", format!("a={:?} {}", a.coords(), describe_law(y)), Relation::AtLeast, rows);
    if !k.exact {
        report = report.with_note("kappa is a grid upper estimate");
    }
    Ok((report, k))
}

/// Exact `P(||x + chaos|| >= ||x||)` over all sign vectors, required to be
/// strictly positive.
pub fn verify_lemma2(chaos: &Chaos, norm: Norm, budget: EnumerationBudget) -> Result<(f64, InequalityReport)> {
    let level = norm.eval(&chaos.x);
    let threshold = level * (1.0 - MERGE_TOLERANCE);
    let mut prob = 0.0;
    chaos.for_each_outcome(budget, |v, p| {
        if norm.eval(v) >= threshold {
            prob += p;
        }
    })?;
    let prob = prob.min(1.0);
    let rows = vec![ThresholdRow::probability(Some(level), prob, 0.0, Relation::Positive)];
    Ok((prob, InequalityReport::new("lemma2", chaos.describe(), Relation::Positive, rows)))
}

/// `(q - 1)^(k/2)` with `q = 4`.
pub fn rademacher_moment_bound(degree: usize) -> f64 {
    3f64.powf(degree as f64 / 2.0)
}

/// `σ_l^{-k}` with `σ_l^{-2} = 3 + sqrt(max(3, l))`.
///
/// For a single row `Y = sum_r a_r (δ_r - 1/l)` the kurtosis is at most `l`
/// (one outcome carries mass `1/l`), so with `M = max(3, l)`
/// `E(x + W)^4 <= x^4 + (6 + 2 sqrt M) x^2 EW^2 + (M + 2 sqrt M) (EW^2)^2`
/// for any sum `W` of independent such rows, which is dominated by
/// `(x^2 + σ^{-2} EW^2)^2`.
pub fn selector_moment_bound(l: usize, degree: usize) -> f64 {
    let inv_sigma_sq = 3.0 + (l.max(3) as f64).sqrt();
    inv_sigma_sq.powf(degree as f64 / 2.0)
}

fn moment_bound(chaos: &Chaos) -> f64 {
    let degree = chaos.degree();
    match chaos.variables {
        ChaosVariables::Rademacher => rademacher_moment_bound(degree),
        ChaosVariables::Selector { l } | ChaosVariables::CenteredSelector { l } => selector_moment_bound(l, degree),
    }
}

/// `||ξ||_4 <= bound * ||ξ||_2` for the real chaos `ξ`, followed by the
/// consequence `||ξ||_2 <= c^2 ||ξ||_1` with `c` the measured ratio.
///
/// `bound` defaults to [`rademacher_moment_bound`] or
/// [`selector_moment_bound`] by variable kind. A chaos with `||ξ||_2 = 0`
/// gives a report without rows.
pub fn verify_moment_comparison(chaos: &Chaos, bound: Option<f64>, budget: EnumerationBudget) -> Result<InequalityReport> {
    let law = chaos.scalar_law(budget)?;
    let (m1, m2, m4) = (law.moment(1.0), law.moment(2.0), law.moment(4.0));
    if m2 == 0.0 {
        return Ok(InequalityReport::new("moments", chaos.describe(), Relation::AtMost, vec![]).with_note("degenerate: ||xi||_2 = 0"));
    }
    let bound = bound.unwrap_or_else(|| moment_bound(chaos));
    let c = m4 / m2;
    let rows = vec![ThresholdRow::moment(c, bound), ThresholdRow::moment(m2, c * c * m1)];
    Ok(InequalityReport::new("moments", chaos.describe(), Relation::AtMost, rows))
}

/// Law with 2 to 5 distinct integer atoms in `[-4, 4]^dim` and random
/// rational weights.
pub fn random_law(dim: usize, seed: u64) -> Result<DiscreteDistribution<f64>> {
    let mut rng = stream_rng(seed, 1);
    let side = 9usize;
    let cells = side.pow(dim as u32);
    let m = rng.random_range(2..=5usize).min(cells);
    let picks = sample(&mut rng, cells, m);
    let weights: Vec<f64> = (0..m).map(|_| rng.random_range(1..=10u32) as f64).collect();
    let total: f64 = weights.iter().sum();
    let atoms = picks
        .iter()
        .zip(&weights)
        .map(|(cell, w)| {
            let mut c = cell;
            let coords = (0..dim).map(|_| {
                let v = (c % side) as f64 - 4.0;
                c /= side;
                v
            });
            (NormedValue::new(coords).expect("dim >= 1"), w / total)
        })
        .collect();
    DiscreteDistribution::new(atoms)
}

/// [`random_law`] shifted to mean zero.
pub fn random_mean_zero_law(dim: usize, seed: u64) -> Result<DiscreteDistribution<f64>> {
    let law = random_law(dim, seed)?;
    let mean = law.mean();
    DiscreteDistribution::new(law.atoms().iter().map(|a| (&a.value - &mean, a.prob)).collect())
}
