//! Coupled, decoupled, partially decoupled and mixed U-statistic sums for a
//! fixed realization of the sample matrix.
//!
//! Row `i` of a [`SampleMatrix`] holds `X_i` from each independent copy, one
//! copy per column. A [`CopyPattern`] `(p_1, ..., p_k)` says which column
//! feeds argument `r`: the all-zero pattern gives the coupled statistic and
//! `(0, 1, ..., k-1)` the fully decoupled one.
//!
//! Tuples are visited lexicographically and sums use [`PairwiseSum`], so a
//! given input always produces the same bits.

use rand::Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::kernel::{all_words, factorial, for_each_distinct_tuple, permutations, KernelFamily, TupleBuf};
use crate::scalar::Scalar;
use crate::value_space::{DiscreteDistribution, NormedValue};

/// Terms summed sequentially before switching to tree reduction.
const PAIRWISE_BLOCK: usize = 1 << 12;

/// Sequential within blocks of 4096 terms, binary tree across blocks.
#[derive(Clone, Debug)]
pub struct PairwiseSum<T: Scalar> {
    block: NormedValue<T>,
    in_block: usize,
    // (level, partial) with strictly decreasing levels, like a binary counter
    stack: Vec<(u32, NormedValue<T>)>,
}

impl<T: Scalar> PairwiseSum<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            block: NormedValue::zeros(dim),
            in_block: 0,
            stack: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, v: &NormedValue<T>) {
        self.block.add_in_place(v);
        self.in_block += 1;
        if self.in_block == PAIRWISE_BLOCK {
            let dim = self.block.dim();
            let mut carry = (0u32, std::mem::replace(&mut self.block, NormedValue::zeros(dim)));
            self.in_block = 0;
            while let Some((level, _)) = self.stack.last() {
                if *level != carry.0 {
                    break;
                }
                let (level, mut left) = self.stack.pop().expect("non-empty");
                left.add_in_place(&carry.1);
                carry = (level + 1, left);
            }
            self.stack.push(carry);
        }
    }

    pub fn finish(self) -> NormedValue<T> {
        let mut total = self.block;
        for (_, partial) in self.stack.into_iter().rev() {
            total.add_in_place(&partial);
        }
        total
    }
}

/// `n` rows by `copies` columns of sample points, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix<T: Scalar> {
    n: usize,
    copies: usize,
    entries: Vec<NormedValue<T>>,
}

impl<T: Scalar> SampleMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<NormedValue<T>>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("sample matrix needs at least one row"));
        }
        let copies = rows[0].len();
        if copies == 0 {
            return Err(Error::invalid("sample matrix needs at least one column"));
        }
        if rows.iter().any(|r| r.len() != copies) {
            return Err(Error::invalid("ragged sample matrix"));
        }
        Ok(Self {
            n,
            copies,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds the matrix from copies given column by column.
    pub fn from_columns(columns: Vec<Vec<NormedValue<T>>>) -> Result<Self> {
        let copies = columns.len();
        if copies == 0 {
            return Err(Error::invalid("sample matrix needs at least one column"));
        }
        let n = columns[0].len();
        if n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns must be non-empty and of equal length"));
        }
        let rows = (0..n)
            .map(|i| columns.iter().map(|c| c[i].clone()).collect())
            .collect();
        Self::from_rows(rows)
    }

    /// Convenience for one-dimensional samples.
    pub fn from_scalar_columns(columns: &[&[f64]]) -> Result<Self> {
        Self::from_columns(
            columns
                .iter()
                .map(|c| c.iter().map(|&x| NormedValue::scalar(T::of(x))).collect())
                .collect(),
        )
    }

    /// Matrix whose entry `(i, j)` is atom `assignment[i * copies + j]`.
    pub fn from_assignment(
        dist: &DiscreteDistribution<T>,
        n: usize,
        copies: usize,
        assignment: &[usize],
    ) -> Self {
        assert_eq!(assignment.len(), n * copies, "assignment length");
        Self {
            n,
            copies,
            entries: assignment.iter().map(|&a| dist.value(a).clone()).collect(),
        }
    }

    pub fn random(
        dist: &DiscreteDistribution<T>,
        n: usize,
        copies: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            n,
            copies,
            entries: (0..n * copies)
                .map(|_| dist.value(dist.atom_for_uniform(rng.random::<f64>())).clone())
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    #[inline]
    pub fn get(&self, row: usize, copy: usize) -> &NormedValue<T> {
        &self.entries[row * self.copies + copy]
    }

    pub fn row(&self, row: usize) -> &[NormedValue<T>] {
        &self.entries[row * self.copies..(row + 1) * self.copies]
    }

    pub fn column(&self, copy: usize) -> Vec<NormedValue<T>> {
        (0..self.n).map(|i| self.get(i, copy).clone()).collect()
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.copies) {
            return Err(Error::invalid(format!("column {c} out of range 0..{}", self.copies)));
        }
        Self::from_rows(
            (0..self.n)
                .map(|i| cols.iter().map(|&c| self.get(i, c).clone()).collect())
                .collect(),
        )
    }
}

/// Which copy feeds each kernel argument.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct CopyPattern(pub Vec<usize>);

impl CopyPattern {
    /// `(0, ..., 0)`.
    pub fn coupled(k: usize) -> Self {
        CopyPattern(vec![0; k])
    }

    /// `(0, 1, ..., k-1)`.
    pub fn decoupled(k: usize) -> Self {
        CopyPattern((0..k).collect())
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of columns the pattern reads.
    pub fn copies_needed(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    pub fn all_equal(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

fn check_shape<T: Scalar>(kf: &KernelFamily<T>, s: &SampleMatrix<T>) -> Result<()> {
    let k = kf.order();
    if k > s.n() {
        return Err(Error::invalid(format!("order k={k} exceeds n={}", s.n())));
    }
    if s.n() > kf.n() {
        return Err(Error::invalid(format!(
            "sample has {} rows but kernel `{}` is indexed by 0..{}",
            s.n(),
            kf.name(),
            kf.n()
        )));
    }
    Ok(())
}

/// `sum over injective tuples i and each pattern p of f_i(X_{i_1}^{p_1}, ..., X_{i_k}^{p_k})`.
///
/// Patterns must already be validated against `s.copies()`.
fn sum_over_patterns<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    patterns: &[TupleBuf],
) -> NormedValue<T> {
    let k = kf.order();
    let mut acc = PairwiseSum::new(kf.out_dim());
    let mut args: SmallVec<[&NormedValue<T>; 8]> = SmallVec::with_capacity(k);
    for_each_distinct_tuple(s.n(), k, |tuple| {
        for p in patterns {
            args.clear();
            args.extend((0..k).map(|r| s.get(tuple[r], p[r])));
            acc.push(&kf.eval(tuple, &args));
        }
    });
    acc.finish()
}

/// The U-statistic with argument `r` read from column `p.0[r]`.
pub fn pattern_sum<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    p: &CopyPattern,
) -> Result<NormedValue<T>> {
    check_shape(kf, s)?;
    if p.len() != kf.order() {
        return Err(Error::invalid(format!(
            "pattern length {} does not match kernel order {}",
            p.len(),
            kf.order()
        )));
    }
    if p.copies_needed() > s.copies() {
        return Err(Error::invalid(format!(
            "pattern {:?} reads column {} but the sample has {} columns",
            p.0,
            p.copies_needed() - 1,
            s.copies()
        )));
    }
    Ok(sum_over_patterns(kf, s, &[p.0.iter().copied().collect()]))
}

/// Sum over all tuples and all patterns whose entries lie in `columns`.
pub fn subset_mixed_sum<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    columns: &[usize],
) -> Result<NormedValue<T>> {
    check_shape(kf, s)?;
    if columns.is_empty() {
        return Err(Error::invalid("at least one column is required"));
    }
    if let Some(&c) = columns.iter().find(|&&c| c >= s.copies()) {
        return Err(Error::invalid(format!("column {c} out of range 0..{}", s.copies())));
    }
    let k = kf.order();
    let patterns: Vec<TupleBuf> = all_words(columns.len(), k)
        .into_iter()
        .map(|w| w.iter().map(|&j| columns[j]).collect())
        .collect();
    Ok(sum_over_patterns(kf, s, &patterns))
}

/// Sum over all tuples and all `l^k` patterns over columns `0..l`.
pub fn mixed_sum<T: Scalar>(kf: &KernelFamily<T>, s: &SampleMatrix<T>, l: usize) -> Result<NormedValue<T>> {
    if l == 0 {
        return Err(Error::invalid("l must be at least 1"));
    }
    if l > s.copies() {
        return Err(Error::invalid(format!(
            "mixed sum over {l} copies needs {l} columns, sample has {}",
            s.copies()
        )));
    }
    let cols: Vec<usize> = (0..l).collect();
    subset_mixed_sum(kf, s, &cols)
}

/// Sum over patterns on columns `{0, 1}` that are not constant.
pub fn not_all_equal_sum<T: Scalar>(kf: &KernelFamily<T>, s: &SampleMatrix<T>) -> Result<NormedValue<T>> {
    check_shape(kf, s)?;
    if s.copies() < 2 {
        return Err(Error::invalid("not-all-equal sum needs two columns"));
    }
    let patterns: Vec<TupleBuf> = all_words(2, kf.order())
        .into_iter()
        .filter(|w| !w.windows(2).all(|p| p[0] == p[1]))
        .collect();
    if patterns.is_empty() {
        // k == 1: every pattern is constant
        return Ok(NormedValue::zeros(kf.out_dim()));
    }
    Ok(sum_over_patterns(kf, s, &patterns))
}

/// Sum over tuples and the `k!` permutation patterns.
pub fn symmetrized_decoupled_sum<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
    max_order: usize,
) -> Result<NormedValue<T>> {
    check_shape(kf, s)?;
    let k = kf.order();
    if k > max_order {
        return Err(Error::BudgetExceeded {
            requested: factorial(k),
            budget: factorial(max_order) as u64,
        });
    }
    if s.copies() < k {
        return Err(Error::invalid(format!("needs {k} columns, sample has {}", s.copies())));
    }
    Ok(sum_over_patterns(kf, s, &permutations(k)))
}

/// Inclusion-exclusion over column subsets:
/// `sum over nonempty S ⊆ {0..k-1} of (-1)^(k-|S|) * subset_mixed_sum(S)`.
///
/// Only permutation patterns survive the cancellation, so this equals
/// [`symmetrized_decoupled_sum`]; it is computed subset by subset so that the
/// equality is a real check.
pub fn inclusion_exclusion_sum<T: Scalar>(
    kf: &KernelFamily<T>,
    s: &SampleMatrix<T>,
) -> Result<NormedValue<T>> {
    let k = kf.order();
    if k > 16 {
        return Err(Error::invalid("inclusion-exclusion limited to k <= 16"));
    }
    if s.copies() < k {
        return Err(Error::invalid(format!("needs {k} columns, sample has {}", s.copies())));
    }
    let mut total = NormedValue::zeros(kf.out_dim());
    for mask in 1u32..(1u32 << k) {
        let cols: Vec<usize> = (0..k).filter(|&c| mask >> c & 1 == 1).collect();
        let part = subset_mixed_sum(kf, s, &cols)?;
        let sign = if (k - cols.len()).is_multiple_of(2) { T::one() } else { -T::one() };
        total.axpy(sign, &part);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{count_distinct_tuples, symmetrize, MAX_PERMUTATION_ORDER};
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    type K = KernelFamily<f64>;
    type S = SampleMatrix<f64>;

    fn c(x: f64) -> NormedValue<f64> {
        NormedValue::scalar(x)
    }

    fn two_col() -> S {
        S::from_scalar_columns(&[&[1.0, -1.0], &[1.0, 1.0]]).unwrap()
    }

    #[test]
    fn pattern_sum_examples() {
        let konst = K::constant(2, 3, c(1.5)).unwrap();
        let s3 = S::from_scalar_columns(&[&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]]).unwrap();
        for p in [vec![0, 0], vec![0, 1], vec![1, 0]] {
            assert_eq!(pattern_sum(&konst, &s3, &CopyPattern(p)).unwrap().first(), 9.0);
        }
        let xy = K::product(2, 2, 1).unwrap();
        let s = two_col();
        assert_eq!(pattern_sum(&xy, &s, &CopyPattern::coupled(2)).unwrap().first(), -2.0);
        assert_eq!(pattern_sum(&xy, &s, &CopyPattern::decoupled(2)).unwrap().first(), 0.0);
    }

    #[test]
    fn pattern_sum_errors() {
        let xy = K::product(2, 2, 1).unwrap();
        let one_col = S::from_scalar_columns(&[&[1.0, -1.0]]).unwrap();
        assert!(pattern_sum(&xy, &one_col, &CopyPattern::decoupled(2)).is_err());
        assert!(pattern_sum(&xy, &one_col, &CopyPattern::coupled(3)).is_err());
        let big = S::from_scalar_columns(&[&[1.0, 1.0, 1.0]]).unwrap();
        assert!(pattern_sum(&xy, &big, &CopyPattern::coupled(2)).is_err(), "rows exceed kernel n");
        let tiny = S::from_scalar_columns(&[&[1.0]]).unwrap();
        assert!(pattern_sum(&K::product(2, 4, 1).unwrap(), &tiny, &CopyPattern::coupled(2)).is_err());
    }

    #[test]
    fn mixed_sum_examples() {
        let xy = K::product(2, 2, 1).unwrap();
        let s = two_col();
        assert_eq!(mixed_sum(&xy, &s, 1).unwrap(), pattern_sum(&xy, &s, &CopyPattern::coupled(2)).unwrap());
        let konst = K::constant(2, 2, c(1.0)).unwrap();
        assert_eq!(mixed_sum(&konst, &s, 2).unwrap().first(), 8.0);
        // patterns (0,0), (0,1), (1,0), (1,1) contribute -2, 0, 0, 2
        let by_hand: f64 = all_words(2, 2)
            .iter()
            .map(|w| pattern_sum(&xy, &s, &CopyPattern(w.to_vec())).unwrap().first())
            .sum();
        assert_eq!(by_hand, 0.0);
        assert_eq!(mixed_sum(&xy, &s, 2).unwrap().first(), 0.0);
        assert!(mixed_sum(&xy, &s, 3).is_err());
        assert!(mixed_sum(&xy, &s, 0).is_err());
    }

    #[test]
    fn not_all_equal_examples() {
        let konst = K::constant(2, 2, c(1.0)).unwrap();
        let s = two_col();
        assert_eq!(not_all_equal_sum(&konst, &s).unwrap().first(), 4.0);
        let xy = K::product(2, 2, 1).unwrap();
        assert_eq!(not_all_equal_sum(&xy, &s).unwrap().first(), 0.0);
    }

    #[test]
    fn symmetrized_examples() {
        let konst = K::constant(2, 2, c(1.0)).unwrap();
        let s = two_col();
        assert_eq!(symmetrized_decoupled_sum(&konst, &s, 7).unwrap().first(), 4.0);
        let xy = K::product(2, 2, 1).unwrap();
        assert_eq!(symmetrized_decoupled_sum(&xy, &s, 7).unwrap().first(), 0.0);
        let first = K::first_argument(1, 2, 1).unwrap();
        assert_eq!(
            symmetrized_decoupled_sum(&first, &s, 7).unwrap(),
            pattern_sum(&first, &s, &CopyPattern(vec![0])).unwrap()
        );
    }

    #[test]
    fn pairwise_matches_sequential_on_integers() {
        let mut acc = PairwiseSum::<f64>::new(1);
        let mut plain = 0.0;
        for i in 0..(3 * PAIRWISE_BLOCK + 17) {
            let x = (i % 13) as f64 - 6.0;
            acc.push(&c(x));
            plain += x;
        }
        assert_eq!(acc.finish().first(), plain);
    }

    #[test]
    fn large_sums_use_tree_reduction() {
        // 9*8*7*6 = 3024 tuples times 16 patterns crosses the block size
        let konst = K::constant(4, 9, c(0.1)).unwrap();
        let s = S::from_columns(vec![vec![c(0.0); 9]; 2]).unwrap();
        let got = mixed_sum(&konst, &s, 2).unwrap().first();
        let terms = count_distinct_tuples(9, 4) as f64 * 16.0;
        assert!((got - 0.1 * terms).abs() < 1e-9);
    }

    #[test]
    fn constant_kernel_counts() {
        let val = 2.5;
        for n in 2..=5 {
            for k in 1..=n.min(3) {
                let kf = K::constant(k, n, c(val)).unwrap();
                let mut r = stream_rng(1, (n * 10 + k) as u64);
                let s = S::random(&DiscreteDistribution::rademacher(), n, k.max(2), &mut r);
                let tuples = count_distinct_tuples(n, k) as f64;
                let pow2 = (1u32 << k) as f64;
                assert_eq!(pattern_sum(&kf, &s, &CopyPattern::coupled(k)).unwrap().first(), tuples * val);
                assert_eq!(mixed_sum(&kf, &s, 2).unwrap().first(), tuples * pow2 * val);
                assert_eq!(not_all_equal_sum(&kf, &s).unwrap().first(), tuples * (pow2 - 2.0).max(0.0) * val);
                if s.copies() >= k {
                    let perms = factorial(k) as f64;
                    assert_eq!(symmetrized_decoupled_sum(&kf, &s, 7).unwrap().first(), tuples * perms * val);
                }
            }
        }
    }

    fn random_instance(seed: u64, k: usize, n: usize, symmetric: bool) -> (K, S) {
        let kf = K::random_coefficient(k, n, 2, seed, symmetric).unwrap();
        let dist = DiscreteDistribution::new(vec![
            (NormedValue::from_f64(&[1.0, 0.0]).unwrap(), 0.25),
            (NormedValue::from_f64(&[-1.0, 2.0]).unwrap(), 0.5),
            (NormedValue::from_f64(&[0.5, -1.5]).unwrap(), 0.25),
        ])
        .unwrap();
        let mut r = stream_rng(seed, 77);
        (kf, S::random(&dist, n, k.max(2), &mut r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn partition_identity(seed in any::<u64>(), k in 2usize..=4, extra in 0usize..=2) {
            let n = k + extra;
            let (kf, s) = random_instance(seed, k, n, false);
            let whole = mixed_sum(&kf, &s, 2).unwrap();
            let a = pattern_sum(&kf, &s, &CopyPattern::coupled(k)).unwrap();
            let b = pattern_sum(&kf, &s, &CopyPattern(vec![1; k])).unwrap();
            let rest = not_all_equal_sum(&kf, &s).unwrap();
            let parts = &(&a + &b) + &rest;
            prop_assert!(whole.max_abs_diff(&parts).unwrap() <= 1e-12);
        }

        #[test]
        fn inclusion_exclusion_identity(seed in any::<u64>(), k in 1usize..=4, extra in 0usize..=1) {
            let n = k + extra;
            let (kf, s) = random_instance(seed, k, n, true);
            let sym = symmetrized_decoupled_sum(&kf, &s, MAX_PERMUTATION_ORDER).unwrap();
            let ie = inclusion_exclusion_sum(&kf, &s).unwrap();
            prop_assert!(sym.max_abs_diff(&ie).unwrap() <= 1e-12);
            let dec = pattern_sum(&kf, &s, &CopyPattern::decoupled(k)).unwrap();
            let scaled = dec.scaled(factorial(k) as f64);
            prop_assert!(sym.max_abs_diff(&scaled).unwrap() <= 1e-12);
        }

        #[test]
        fn inclusion_exclusion_holds_without_symmetry(seed in any::<u64>(), k in 2usize..=3) {
            let (kf, s) = random_instance(seed, k, k + 1, false);
            let sym = symmetrized_decoupled_sum(&kf, &s, MAX_PERMUTATION_ORDER).unwrap();
            let ie = inclusion_exclusion_sum(&kf, &s).unwrap();
            prop_assert!(sym.max_abs_diff(&ie).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn symmetrized_kernel_decoupled_sum() {
        let (kf, s) = random_instance(4, 3, 4, false);
        let sym = symmetrize(&kf, MAX_PERMUTATION_ORDER).unwrap();
        let lhs = pattern_sum(&sym, &s, &CopyPattern::decoupled(3)).unwrap();
        let rhs = symmetrized_decoupled_sum(&sym, &s, 7).unwrap().scaled(1.0 / 6.0);
        assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
    }

    #[test]
    fn works_with_f32() {
        let xy = KernelFamily::<f32>::product(2, 2, 1).unwrap();
        let s = SampleMatrix::<f32>::from_scalar_columns(&[&[1.0, -1.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(pattern_sum(&xy, &s, &CopyPattern::coupled(2)).unwrap().first(), -2.0f32);
    }
}
