use std::collections::BTreeMap;

use rayon::prelude::*;

use super::law::NormLaw;
use super::statistic::StatisticSpec;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::ustat::SampleMatrix;
use crate::value_space::{
    increment_mixed_radix, product_enumerate, DiscreteDistribution, EnumerationBudget, NormedValue,
};

/// Realizations handled per work unit; fixed so results do not depend on the
/// number of workers.
const CHUNK: u64 = 1 << 12;

/// Evaluates `f` on every sample-matrix realization with its probability.
fn enumerate_realizations<T, R, F>(
    spec: &StatisticSpec<T>,
    dist: &DiscreteDistribution<T>,
    budget: EnumerationBudget,
    f: F,
) -> Result<Vec<(R, f64)>>
where
    T: Scalar,
    R: Send,
    F: Fn(&SampleMatrix<T>) -> Result<R> + Sync,
{
    let n = spec.n;
    let copies = spec.copies_needed();
    let enumeration = product_enumerate(dist, n * copies, budget)?;
    let total = enumeration.total();
    let chunks: Vec<u64> = (0..total.div_ceil(CHUNK)).collect();
    let parts: Vec<Result<Vec<(R, f64)>>> = chunks
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut digits = enumeration.assignment_at(start);
            let mut out = Vec::with_capacity((end - start) as usize);
            for _ in start..end {
                let s = SampleMatrix::from_assignment(dist, n, copies, &digits);
                out.push((f(&s)?, enumeration.probability_of(&digits)));
                increment_mixed_radix(&mut digits, dist.len());
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(total as usize);
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Exact law of `||S||` by enumerating every realization of the sample
/// matrix. Outcomes whose norms agree to 1e-12 (relative) are merged.
pub fn exact_law<T: Scalar>(
    spec: &StatisticSpec<T>,
    dist: &DiscreteDistribution<T>,
    budget: EnumerationBudget,
) -> Result<NormLaw> {
    let outcomes = enumerate_realizations(spec, dist, budget, |s| spec.norm_of(s))?;
    NormLaw::from_outcomes(outcomes)
}

/// Exact law of the vector statistic `S` itself, as a discrete distribution
/// on `R^d`. Outcomes are merged only when bitwise equal.
pub fn exact_value_law<T: Scalar>(
    spec: &StatisticSpec<T>,
    dist: &DiscreteDistribution<T>,
    budget: EnumerationBudget,
) -> Result<DiscreteDistribution<f64>> {
    let outcomes = enumerate_realizations(spec, dist, budget, |s| Ok(spec.evaluate(s)?.to_f64()))?;
    let mut merged: BTreeMap<Vec<u64>, (NormedValue<f64>, Vec<f64>)> = BTreeMap::new();
    for (v, p) in outcomes {
        // +0.0 and -0.0 are the same atom
        let key = v.coords().iter().map(|c| (c + 0.0).to_bits()).collect();
        merged.entry(key).or_insert_with(|| (v.clone(), Vec::new())).1.push(p);
    }
    DiscreteDistribution::new(
        merged
            .into_values()
            .map(|(v, ps)| (v, crate::value_space::neumaier_sum(ps)))
            .collect(),
    )
}
