use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{all_words, factorial, KernelFamily, MAX_PERMUTATION_ORDER};
use crate::randomization::{
    distributional_equality_check, expansion_residual, selector_conditional_expectation, selector_expectation_target,
    sign_conditional_expectation, sign_expectation_target, Coupling, SignVector,
};
use crate::rng::stream_rng;
use crate::scalar::Scalar;
use crate::ustat::{inclusion_exclusion_sum, pattern_sum, symmetrized_decoupled_sum, CopyPattern, SampleMatrix};
use crate::value_space::{saturating_pow, DiscreteDistribution, EnumerationBudget, Norm, NormedValue};

/// Largest residual seen by an exact identity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityOutcome {
    pub max_residual: f64,
    pub comparisons: u64,
    pub tolerance: f64,
    pub holds: bool,
}

impl IdentityOutcome {
    fn new(max_residual: f64, comparisons: u64, tolerance: f64) -> Self {
        Self {
            max_residual,
            comparisons,
            tolerance,
            holds: max_residual <= tolerance,
        }
    }
}

/// Random `n x copies` sample drawn from `dist` under `seed`.
pub fn sampled_matrix<T: Scalar>(dist: &DiscreteDistribution<T>, n: usize, copies: usize, seed: u64) -> SampleMatrix<T> {
    SampleMatrix::random(dist, n, copies, &mut stream_rng(seed, 2))
}

fn residual<T: Scalar>(a: &NormedValue<T>, b: &NormedValue<T>, norm: Norm) -> Result<f64> {
    Ok(norm.eval(&a.checked_sub(b)?).to_f64_lossy())
}

fn two_column_patterns(k: usize) -> Vec<CopyPattern> {
    all_words(2, k).into_iter().map(|w| CopyPattern(w.to_vec())).collect()
}

/// The sign expansion on one random two-column sample, for every sign
/// vector and every pattern in `{0, 1}^k`.
pub fn expansion_identity<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    n: usize,
    seed: u64,
    norm: Norm,
    tolerance: f64,
    budget: EnumerationBudget,
) -> Result<IdentityOutcome> {
    let k = kf.order();
    budget.check(saturating_pow(2, n).saturating_mul(saturating_pow(2, k)))?;
    let s = sampled_matrix(dist, n, 2, seed);
    let patterns = two_column_patterns(k);
    let mut worst = 0.0f64;
    let mut count = 0;
    for bits in 0..(1u64 << n) {
        let sv = SignVector::from_bits(n, bits);
        for p in &patterns {
            worst = worst.max(expansion_residual(kf, &s, &sv, p, norm)?.to_f64_lossy());
            count += 1;
        }
    }
    Ok(IdentityOutcome::new(worst, count, tolerance))
}

/// Average over all sign vectors equals `2^-k` times the two-copy mixed sum,
/// for every pattern in `{0, 1}^k`.
pub fn sign_conditional_identity<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    n: usize,
    seed: u64,
    norm: Norm,
    tolerance: f64,
    budget: EnumerationBudget,
) -> Result<IdentityOutcome> {
    let s = sampled_matrix(dist, n, 2, seed);
    let target = sign_expectation_target(kf, &s)?;
    let mut worst = 0.0f64;
    let patterns = two_column_patterns(kf.order());
    for p in &patterns {
        let avg = sign_conditional_expectation(kf, &s, p, budget)?;
        worst = worst.max(residual(&avg, &target, norm)?);
    }
    Ok(IdentityOutcome::new(worst, patterns.len() as u64, tolerance))
}

/// Average over all selector matrices equals `l^-k` times the `l`-copy mixed sum.
#[allow(clippy::too_many_arguments)]
pub fn selector_conditional_identity<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    n: usize,
    l: usize,
    seed: u64,
    norm: Norm,
    tolerance: f64,
    budget: EnumerationBudget,
) -> Result<IdentityOutcome> {
    let s = sampled_matrix(dist, n, l, seed);
    let avg = selector_conditional_expectation(kf, &s, l, budget)?;
    let target = selector_expectation_target(kf, &s, l)?;
    Ok(IdentityOutcome::new(residual(&avg, &target, norm)?, 1, tolerance))
}

/// Inclusion-exclusion over column subsets against the sum over the `k!`
/// permutation patterns, and for symmetric kernels against `k!` times the
/// decoupled sum.
pub fn mazur_orlicz_identity<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    n: usize,
    seed: u64,
    norm: Norm,
    tolerance: f64,
    symmetric: bool,
) -> Result<IdentityOutcome> {
    let k = kf.order();
    if k > MAX_PERMUTATION_ORDER {
        return Err(Error::invalid(format!("k = {k} exceeds {MAX_PERMUTATION_ORDER}")));
    }
    let s = sampled_matrix(dist, n, k, seed);
    let ie = inclusion_exclusion_sum(kf, &s)?;
    let mut worst = residual(&ie, &symmetrized_decoupled_sum(kf, &s, MAX_PERMUTATION_ORDER)?, norm)?;
    let mut count = 1;
    if symmetric {
        let dec = pattern_sum(kf, &s, &CopyPattern::decoupled(k))?.scaled(T::of(factorial(k) as f64));
        worst = worst.max(residual(&ie, &dec, norm)?);
        count += 1;
    }
    Ok(IdentityOutcome::new(worst, count, tolerance))
}

/// Total-variation distance between the law of the coupled rows and the
/// product law; `None` when the instance has more than `cap` outcomes.
pub fn coupling_law_identity<T: Scalar>(
    dist: &DiscreteDistribution<T>,
    n: usize,
    coupling: Coupling,
    tolerance: f64,
    cap: u64,
) -> Result<Option<IdentityOutcome>> {
    let (copies, randomizations) = match coupling {
        Coupling::Sign => (2, saturating_pow(2, n)),
        Coupling::Selector { l } => (l, saturating_pow(l, n)),
    };
    let outcomes = saturating_pow(dist.len(), n * copies).saturating_mul(randomizations);
    if outcomes > cap as u128 {
        return Ok(None);
    }
    let check = distributional_equality_check(dist, n, coupling, EnumerationBudget(cap))?;
    Ok(Some(IdentityOutcome::new(check.total_variation, check.outcomes, tolerance)))
}
