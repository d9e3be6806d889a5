//! The two randomization couplings behind the decoupling argument and exact
//! checks of the identities they satisfy.
//!
//! *Sign coupling*: given two copies and independent signs `σ_i`, row `i` of
//! `Z` is `(X_i^1, X_i^2)` when `σ_i = +1` and `(X_i^2, X_i^1)` otherwise.
//! Averaging the pattern-`p` statistic of `Z` over all signs gives
//! `2^-k` times the mixed sum over two copies, for every `p`.
//!
//! *Selector coupling*: given `l` copies and per-row indicator vectors with a
//! single one, `Z_i` is the selected copy of `X_i`. Averaging the coupled
//! statistic of `Z` over all selectors gives `l^-k` times the mixed sum over
//! `l` copies.
//!
//! Conditional expectations here are exhaustive averages, never samples.

use std::collections::HashMap;

use num_traits::Num;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::kernel::{all_words, for_each_distinct_tuple, KernelFamily};
use crate::scalar::Scalar;
use crate::ustat::{mixed_sum, pattern_sum, CopyPattern, PairwiseSum, SampleMatrix};
use crate::value_space::{
    increment_mixed_radix, product_enumerate, saturating_pow, DiscreteDistribution,
    EnumerationBudget, Norm, NormedValue,
};

/// Identity-check tolerance shared by the exact checks in this module.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Symmetric Bernoulli signs `σ_1, ..., σ_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::invalid("signs must be +1 or -1"));
        }
        Ok(Self(signs))
    }

    pub fn all_plus(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Bit `i` of `bits` set means `σ_i = -1`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        Self((0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }
}

/// `n` rows of `l` indicators, exactly one set per row; stored as the
/// selected column of each row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectorMatrix {
    l: usize,
    choices: Vec<usize>,
}

impl SelectorMatrix {
    pub fn from_choices(l: usize, choices: Vec<usize>) -> Result<Self> {
        if l == 0 {
            return Err(Error::invalid("selector width l must be at least 1"));
        }
        if let Some(&c) = choices.iter().find(|&&c| c >= l) {
            return Err(Error::invalid(format!("selected column {c} out of range 0..{l}")));
        }
        Ok(Self { l, choices })
    }

    /// Validates 0/1 rows summing to one.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let l = rows.first().map_or(0, Vec::len);
        let mut choices = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != l || row.iter().any(|&d| d > 1) || row.iter().filter(|&&d| d == 1).count() != 1 {
                return Err(Error::invalid(format!(
                    "selector row {i} must be 0/1 of width {l} with exactly one 1"
                )));
            }
            choices.push(row.iter().position(|&d| d == 1).expect("one set entry"));
        }
        Self::from_choices(l, choices)
    }

    pub fn n(&self) -> usize {
        self.choices.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.choices
            .iter()
            .map(|&c| (0..self.l).map(|j| u8::from(j == c)).collect())
            .collect()
    }

    /// Entries `δ_ij - 1/l` in any numeric type; with an exact rational type
    /// every row sums to zero exactly.
    pub fn centered<R: Num + Copy>(&self) -> Vec<Vec<R>> {
        let l = (0..self.l).fold(R::zero(), |acc, _| acc + R::one());
        let inv = R::one() / l;
        self.choices
            .iter()
            .map(|&c| {
                (0..self.l)
                    .map(|j| if j == c { R::one() - inv } else { R::zero() - inv })
                    .collect()
            })
            .collect()
    }
}

fn require_columns<T: Scalar>(s: &SampleMatrix<T>, cols: usize, what: &str) -> Result<()> {
    if s.copies() != cols {
        return Err(Error::invalid(format!(
            "{what} needs a sample with exactly {cols} columns, got {}",
            s.copies()
        )));
    }
    Ok(())
}

/// Row-wise swap of the two copies where `σ_i = -1`.
pub fn sign_couple<T: Scalar>(s: &SampleMatrix<T>, sv: &SignVector) -> Result<SampleMatrix<T>> {
    require_columns(s, 2, "sign coupling")?;
    if sv.len() != s.n() {
        return Err(Error::invalid(format!(
            "sign vector has length {} but the sample has {} rows",
            sv.len(),
            s.n()
        )));
    }
    let rows = (0..s.n())
        .map(|i| {
            let (a, b) = (s.get(i, 0).clone(), s.get(i, 1).clone());
            if sv.signs()[i] == 1 {
                vec![a, b]
            } else {
                vec![b, a]
            }
        })
        .collect();
    SampleMatrix::from_rows(rows)
}

/// Norm of the difference between the two sides of the sign expansion
///
/// `2^k f_i(Z^{p_1}, ..., Z^{p_k}) = sum_j prod_r (1 ± σ_{i_r}) f_i(X^{j_1}, ..., X^{j_k})`,
///
/// summed over all injective tuples, where the factor for slot `r` is
/// `1 + σ` when `j_r = p_r` and `1 - σ` otherwise.
pub fn expansion_residual<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    sv: &SignVector,
    p: &CopyPattern,
    norm: Norm,
) -> Result<T> {
    let z = sign_couple(s, sv)?;
    let k = kf.order();
    if p.len() != k || p.copies_needed() > 2 {
        return Err(Error::invalid("pattern must have length k with entries in {0, 1}"));
    }
    let lhs = pattern_sum(kf, &z, p)?.scaled(T::of((1u64 << k) as f64));

    let words = all_words(2, k);
    let sig = sv.signs();
    let two = T::of(2.0);
    let mut rhs = PairwiseSum::new(kf.out_dim());
    let mut args: SmallVec<[&NormedValue<T>; 8]> = SmallVec::new();
    for_each_distinct_tuple(s.n(), k, |tuple| {
        for j in &words {
            // each factor is 0 or 2
            let mut weight = T::one();
            for r in 0..k {
                let plus = j[r] == p.0[r];
                let sigma_pos = sig[tuple[r]] == 1;
                if plus != sigma_pos {
                    weight = T::zero();
                    break;
                }
                weight *= two;
            }
            args.clear();
            args.extend((0..k).map(|r| s.get(tuple[r], j[r])));
            let term = kf.eval(tuple, &args);
            rhs.push(&term.scaled(weight));
        }
    });
    Ok(norm.eval(&lhs.checked_sub(&rhs.finish())?))
}

/// Exact average over all `2^n` sign vectors of the pattern-`p` statistic of
/// the sign-coupled sample.
pub fn sign_conditional_expectation<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    p: &CopyPattern,
    budget: EnumerationBudget,
) -> Result<NormedValue<T>> {
    require_columns(s, 2, "sign conditional expectation")?;
    let n = s.n();
    budget.check(saturating_pow(2, n))?;
    let mut acc = PairwiseSum::new(kf.out_dim());
    for bits in 0..(1u64 << n) {
        let z = sign_couple(s, &SignVector::from_bits(n, bits))?;
        acc.push(&pattern_sum(kf, &z, p)?);
    }
    Ok(acc.finish().scaled(T::of(1.0 / (1u64 << n) as f64)))
}

/// Single-column sample `Z_i = X_i^{(choice_i)}`.
pub fn selector_couple<T: Scalar>(s: &SampleMatrix<T>, sm: &SelectorMatrix) -> Result<SampleMatrix<T>> {
    if sm.n() != s.n() {
        return Err(Error::invalid(format!(
            "selector has {} rows but the sample has {}",
            sm.n(),
            s.n()
        )));
    }
    if sm.l() > s.copies() {
        return Err(Error::invalid(format!(
            "selector width {} exceeds the {} available columns",
            sm.l(),
            s.copies()
        )));
    }
    SampleMatrix::from_rows(
        sm.choices()
            .iter()
            .enumerate()
            .map(|(i, &c)| vec![s.get(i, c).clone()])
            .collect(),
    )
}

/// Calls `f` for each of the `l^n` selector matrices in mixed-radix order.
pub fn for_each_selector(n: usize, l: usize, mut f: impl FnMut(&SelectorMatrix)) {
    let mut sm = SelectorMatrix {
        l,
        choices: vec![0; n],
    };
    loop {
        f(&sm);
        if !increment_mixed_radix(&mut sm.choices, l) {
            break;
        }
    }
}

/// Exact average over all `l^n` equiprobable selector matrices of the coupled
/// statistic of the selector-coupled sample.
pub fn selector_conditional_expectation<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    l: usize,
    budget: EnumerationBudget,
) -> Result<NormedValue<T>> {
    if l == 0 || l > s.copies() {
        return Err(Error::invalid(format!(
            "l = {l} must lie in 1..={} (available columns)",
            s.copies()
        )));
    }
    let n = s.n();
    let total = saturating_pow(l, n);
    budget.check(total)?;
    let coupled = CopyPattern::coupled(kf.order());
    let mut acc = PairwiseSum::new(kf.out_dim());
    let mut err = None;
    for_each_selector(n, l, |sm| {
        if err.is_some() {
            return;
        }
        match selector_couple(s, sm).and_then(|z| pattern_sum(kf, &z, &coupled)) {
            Ok(v) => acc.push(&v),
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(acc.finish().scaled(T::of(1.0 / total as f64)))
}

/// `2^-k * mixed_sum(l = 2)`, the value every sign conditional expectation must match.
pub fn sign_expectation_target<T: Scalar>(kf: &KernelFamily<T>, s: &SampleMatrix<T>) -> Result<NormedValue<T>> {
    Ok(mixed_sum(kf, s, 2)?.scaled(T::of(1.0 / (1u64 << kf.order()) as f64)))
}

/// `l^-k * mixed_sum(l)`.
pub fn selector_expectation_target<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    l: usize,
) -> Result<NormedValue<T>> {
    let scale = (l as f64).powi(-(kf.order() as i32));
    Ok(mixed_sum(kf, s, l)?.scaled(T::of(scale)))
}

/// Which randomization to push through the distributional check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Coupling {
    /// Two copies swapped by signs; compares the law of the coupled pair rows.
    Sign,
    /// One of `l` copies per row; compares the law of `Z` with one copy.
    Selector { l: usize },
}

/// Outcome of an exact distributional comparison.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CouplingLawCheck {
    pub total_variation: f64,
    pub outcomes: u64,
    pub holds: bool,
}

/// Exact law of the coupled rows versus the law of the uncoupled ones.
///
/// Enumerates every sample realization and every randomization, accumulates
/// the induced law of `Z`, and reports its total-variation distance to the
/// target product law; `holds` when the distance is at most
/// [`IDENTITY_TOLERANCE`].
pub fn distributional_equality_check<T: Scalar>(
    dist: &DiscreteDistribution<T>,
    n: usize,
    coupling: Coupling,
    budget: EnumerationBudget,
) -> Result<CouplingLawCheck> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let (copies, randomizations, z_width) = match coupling {
        Coupling::Sign => (2, saturating_pow(2, n), 2 * n),
        Coupling::Selector { l } => {
            if l == 0 {
                return Err(Error::invalid("selector width must be at least 1"));
            }
            (l, saturating_pow(l, n), n)
        }
    };
    let samples = saturating_pow(dist.len(), n * copies);
    budget.check(samples.saturating_mul(randomizations))?;

    let mut law: HashMap<Vec<usize>, f64> = HashMap::new();
    for (assignment, p) in product_enumerate(dist, n * copies, budget)? {
        match coupling {
            Coupling::Sign => {
                for bits in 0..(1u64 << n) {
                    let mut z = Vec::with_capacity(z_width);
                    for i in 0..n {
                        let (a, b) = (assignment[2 * i], assignment[2 * i + 1]);
                        if bits >> i & 1 == 0 {
                            z.extend([a, b]);
                        } else {
                            z.extend([b, a]);
                        }
                    }
                    *law.entry(z).or_insert(0.0) += p / (1u64 << n) as f64;
                }
            }
            Coupling::Selector { l } => {
                let weight = p / randomizations as f64;
                for_each_selector(n, l, |sm| {
                    let z: Vec<usize> = sm
                        .choices()
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| assignment[i * l + c])
                        .collect();
                    *law.entry(z).or_insert(0.0) += weight;
                });
            }
        }
    }

    let target = product_enumerate(dist, z_width, budget)?;
    let mut diff = 0.0;
    let mut seen = 0usize;
    for (z, q) in target {
        let p = law.get(&z).copied().unwrap_or(0.0);
        if p > 0.0 {
            seen += 1;
        }
        diff += (p - q).abs();
    }
    // mass placed outside the target support (impossible for these couplings)
    let stray: f64 = if seen < law.len() {
        law.values().sum::<f64>() - 1.0
    } else {
        0.0
    };
    let tv = 0.5 * (diff + stray.abs());
    Ok(CouplingLawCheck {
        total_variation: tv,
        outcomes: (samples * randomizations) as u64,
        holds: tv <= IDENTITY_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use num_rational::Ratio;

    type K = KernelFamily<f64>;
    type S = SampleMatrix<f64>;

    fn sample(seed: u64, dist: &DiscreteDistribution<f64>, n: usize, copies: usize) -> S {
        S::random(dist, n, copies, &mut stream_rng(seed, 1))
    }

    #[test]
    fn sign_couple_examples() {
        let s = S::from_scalar_columns(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(sign_couple(&s, &SignVector::all_plus(2)).unwrap(), s);
        let swapped = S::from_scalar_columns(&[&[3.0, 4.0], &[1.0, 2.0]]).unwrap();
        assert_eq!(sign_couple(&s, &SignVector::new(vec![-1, -1]).unwrap()).unwrap(), swapped);
        let mixed = sign_couple(&s, &SignVector::new(vec![1, -1]).unwrap()).unwrap();
        assert_eq!(mixed, S::from_scalar_columns(&[&[1.0, 4.0], &[3.0, 2.0]]).unwrap());
        assert!(sign_couple(&s, &SignVector::all_plus(3)).is_err());
        assert!(SignVector::new(vec![0]).is_err());
    }

    #[test]
    fn expansion_residual_vanishes() {
        let rad = DiscreteDistribution::rademacher();
        let u3 = DiscreteDistribution::uniform(3).unwrap();
        for (k, n) in [(2, 3), (3, 4), (2, 5)] {
            for (seed, dist) in [(1u64, &rad), (2, &u3)] {
                let kf = K::random_coefficient(k, n, 1, seed, false).unwrap();
                let s = sample(seed, dist, n, 2);
                for bits in 0..(1u64 << n) {
                    let sv = SignVector::from_bits(n, bits);
                    for p in all_words(2, k) {
                        let r = expansion_residual(&kf, &s, &sv, &CopyPattern(p.to_vec()), Norm::Maximum).unwrap();
                        assert!(r <= IDENTITY_TOLERANCE, "k={k} n={n} bits={bits} p={p:?} r={r}");
                    }
                }
            }
        }
    }

    #[test]
    fn sign_expectation_examples() {
        let konst = K::constant(2, 2, NormedValue::scalar(1.0)).unwrap();
        let s = S::from_scalar_columns(&[&[1.0, -1.0], &[1.0, 1.0]]).unwrap();
        let b = EnumerationBudget::default();
        let e = sign_conditional_expectation(&konst, &s, &CopyPattern::coupled(2), b).unwrap();
        assert_eq!(e.first(), 2.0);
        let xy = K::product(2, 2, 1).unwrap();
        for p in all_words(2, 2) {
            let e = sign_conditional_expectation(&xy, &s, &CopyPattern(p.to_vec()), b).unwrap();
            assert_eq!(e.first(), 0.0);
        }
    }

    #[test]
    fn sign_expectation_is_pattern_invariant() {
        let dist = DiscreteDistribution::uniform(3).unwrap();
        let kf = K::random_coefficient(3, 4, 1, 8, false).unwrap();
        let s = sample(8, &dist, 4, 2);
        let target = sign_expectation_target(&kf, &s).unwrap();
        for p in all_words(2, 3) {
            let e = sign_conditional_expectation(&kf, &s, &CopyPattern(p.to_vec()), EnumerationBudget::default()).unwrap();
            assert!(e.max_abs_diff(&target).unwrap() <= IDENTITY_TOLERANCE);
        }
    }

    #[test]
    fn sign_expectation_budget() {
        let kf = K::product(2, 30, 1).unwrap();
        let s = S::from_columns(vec![vec![NormedValue::scalar(1.0); 30]; 2]).unwrap();
        assert!(matches!(
            sign_conditional_expectation(&kf, &s, &CopyPattern::coupled(2), EnumerationBudget(1 << 20)),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn selector_couple_examples() {
        let s = S::from_scalar_columns(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let first = SelectorMatrix::from_rows(&[vec![1, 0], vec![1, 0]]).unwrap();
        assert_eq!(selector_couple(&s, &first).unwrap().column(0), s.column(0));
        let diag = SelectorMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let z = selector_couple(&s, &diag).unwrap().column(0);
        assert_eq!(z, vec![NormedValue::scalar(1.0), NormedValue::scalar(4.0)]);
        let single = S::from_scalar_columns(&[&[5.0, 6.0]]).unwrap();
        let one = SelectorMatrix::from_choices(1, vec![0, 0]).unwrap();
        assert_eq!(selector_couple(&single, &one).unwrap(), single);
        assert!(SelectorMatrix::from_rows(&[vec![1, 1]]).is_err());
        assert!(SelectorMatrix::from_rows(&[vec![0, 0]]).is_err());
        assert!(SelectorMatrix::from_rows(&[vec![2, 0]]).is_err());
    }

    #[test]
    fn selector_expectation_examples() {
        let b = EnumerationBudget::default();
        let xy = K::product(2, 3, 1).unwrap();
        let s = sample(3, &DiscreteDistribution::uniform(3).unwrap(), 3, 3);
        let coupled = pattern_sum(&xy, &s, &CopyPattern::coupled(2)).unwrap();
        assert_eq!(selector_conditional_expectation(&xy, &s, 1, b).unwrap(), coupled);

        let konst = K::constant(2, 2, NormedValue::scalar(1.0)).unwrap();
        let s2 = S::from_scalar_columns(&[&[1.0, -1.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(selector_conditional_expectation(&konst, &s2, 2, b).unwrap().first(), 2.0);

        let kf = K::random_coefficient(2, 4, 1, 21, false).unwrap();
        let s4 = sample(21, &DiscreteDistribution::rademacher(), 4, 2);
        let e = selector_conditional_expectation(&kf, &s4, 2, b).unwrap();
        let t = selector_expectation_target(&kf, &s4, 2).unwrap();
        assert!(e.max_abs_diff(&t).unwrap() <= IDENTITY_TOLERANCE);
    }

    #[test]
    fn selector_expectation_matches_mixed_sum() {
        let b = EnumerationBudget::default();
        let dist = DiscreteDistribution::uniform(3).unwrap();
        for k in 1..=3 {
            for n in k.max(2)..=4 {
                for l in 1..=3 {
                    let kf = K::random_coefficient(k, n, 1, (k * 100 + n * 10 + l) as u64, false).unwrap();
                    let s = sample(l as u64, &dist, n, 3);
                    let e = selector_conditional_expectation(&kf, &s, l, b).unwrap();
                    let t = selector_expectation_target(&kf, &s, l).unwrap();
                    assert!(e.max_abs_diff(&t).unwrap() <= 1e-12, "k={k} n={n} l={l}");
                }
            }
        }
    }

    #[test]
    fn centered_selector_rows_sum_to_zero() {
        for l in 1..=5 {
            for_each_selector(3, l, |sm| {
                for row in sm.centered::<Ratio<i64>>() {
                    assert_eq!(row.iter().fold(Ratio::from_integer(0), |a, &b| a + b), Ratio::from_integer(0));
                }
                for row in sm.centered::<f64>() {
                    assert!(row.iter().sum::<f64>().abs() <= 1e-15);
                }
            });
        }
    }

    #[test]
    fn coupling_laws_match() {
        let b = EnumerationBudget(1 << 20);
        let rad = DiscreteDistribution::<f64>::rademacher();
        let u3 = DiscreteDistribution::<f64>::uniform(3).unwrap();
        let c = distributional_equality_check(&rad, 2, Coupling::Selector { l: 2 }, b).unwrap();
        assert!(c.holds && c.outcomes == 64, "{c:?}");
        let c = distributional_equality_check(&rad, 3, Coupling::Sign, b).unwrap();
        assert!(c.holds && c.outcomes == 512, "{c:?}");
        let c = distributional_equality_check(&u3, 2, Coupling::Selector { l: 3 }, b).unwrap();
        assert!(c.holds && c.outcomes == 729 * 9, "{c:?}");
        let skew = DiscreteDistribution::<f64>::from_scalars(&[(0.0, 0.125), (1.0, 0.375), (5.0, 0.5)]).unwrap();
        assert!(distributional_equality_check(&skew, 3, Coupling::Sign, b).unwrap().holds);
    }

    #[test]
    fn coupling_check_budget() {
        let u3 = DiscreteDistribution::<f64>::uniform(3).unwrap();
        assert!(matches!(
            distributional_equality_check(&u3, 6, Coupling::Selector { l: 3 }, EnumerationBudget(1 << 20)),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
