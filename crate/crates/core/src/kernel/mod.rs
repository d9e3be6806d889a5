//! Kernel families `f_{i_1...i_k}`, symmetrization, symmetry testing and the
//! inclusion-exclusion coefficient used to isolate permutation patterns.

mod builtin;
pub mod tuples;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::value_space::{DiscreteDistribution, NormedValue};

pub use builtin::KernelClass;
pub use tuples::{
    all_words, count_distinct_tuples, distinct_tuples, factorial, for_each_distinct_tuple,
    is_permutation, permutations, DistinctTuples, IndexTuple, TupleBuf,
};

/// Largest order accepted by operations that loop over all `k!` permutations.
pub const MAX_PERMUTATION_ORDER: usize = 7;

/// Per-coordinate tolerance for kernel identities.
pub const KERNEL_TOLERANCE: f64 = 1e-12;

/// `(index tuple, argument values) -> value`.
pub type KernelFn<T> = dyn Fn(&[usize], &[&NormedValue<T>]) -> NormedValue<T> + Send + Sync;

/// An indexed family of order-`k` functions into `R^out_dim`, defined on
/// injective index tuples over `0..n`.
///
/// Evaluation must be a pure function of its inputs.
#[derive(Clone)]
pub struct KernelFamily<T: Scalar> {
    name: String,
    order: usize,
    n: usize,
    out_dim: usize,
    symmetric_claimed: bool,
    eval: Arc<KernelFn<T>>,
}

impl<T: Scalar> fmt::Debug for KernelFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelFamily")
            .field("name", &self.name)
            .field("order", &self.order)
            .field("n", &self.n)
            .field("out_dim", &self.out_dim)
            .field("symmetric_claimed", &self.symmetric_claimed)
            .finish()
    }
}

impl<T: Scalar> KernelFamily<T> {
    pub fn from_fn<F>(
        name: impl Into<String>,
        order: usize,
        n: usize,
        out_dim: usize,
        symmetric_claimed: bool,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[usize], &[&NormedValue<T>]) -> NormedValue<T> + Send + Sync + 'static,
    {
        if order == 0 {
            return Err(Error::invalid("kernel order must be at least 1"));
        }
        if out_dim == 0 {
            return Err(Error::invalid("kernel output dimension must be positive"));
        }
        Ok(Self {
            name: name.into(),
            order,
            n,
            out_dim,
            symmetric_claimed,
            eval: Arc::new(f),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The number of arguments `k`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Index bound: the family is defined for tuples over `0..n`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn symmetric_claimed(&self) -> bool {
        self.symmetric_claimed
    }

    #[inline]
    pub fn eval(&self, tuple: &[usize], args: &[&NormedValue<T>]) -> NormedValue<T> {
        debug_assert_eq!(tuple.len(), self.order);
        debug_assert_eq!(args.len(), self.order);
        (self.eval)(tuple, args)
    }

    /// Same kernel multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        let inner = self.eval.clone();
        Self {
            name: format!("{}*{s}", self.name),
            eval: Arc::new(move |t, a| inner(t, a).scaled(s)),
            ..self.clone()
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// The kernel `(tuple, args) -> sum over permutations p of f(tuple∘p, args∘p)`.
///
/// The result satisfies the permutation symmetry condition by construction.
pub fn symmetrize<T: Scalar>(kf: &KernelFamily<T>, max_order: usize) -> Result<KernelFamily<T>> {
    let k = kf.order();
    if k > max_order {
        return Err(Error::BudgetExceeded {
            requested: factorial(k),
            budget: factorial(max_order) as u64,
        });
    }
    let perms = permutations(k);
    let base = kf.clone();
    let dim = kf.out_dim();
    KernelFamily::from_fn(
        format!("sym({})", kf.name()),
        k,
        kf.n(),
        dim,
        true,
        move |tuple, args| {
            let mut acc = NormedValue::zeros(dim);
            let mut pt: TupleBuf = SmallVec::from_elem(0, k);
            let mut pa: SmallVec<[&NormedValue<T>; 8]> = SmallVec::from_slice(args);
            for p in &perms {
                for r in 0..k {
                    pt[r] = tuple[p[r]];
                    pa[r] = args[p[r]];
                }
                acc.add_in_place(&base.eval(&pt, &pa));
            }
            acc
        },
    )
}

/// Randomized test of the symmetry condition
/// `f_{i∘p}(x∘p) = f_i(x)` on tuples over `0..kf.n()` with arguments drawn
/// from `dist`. Returns `false` at the first violation beyond
/// [`KERNEL_TOLERANCE`].
pub fn check_symmetry<T: Scalar>(
    kf: &KernelFamily<T>,
    dist: &DiscreteDistribution<T>,
    trials: usize,
    seed: u64,
) -> bool {
    let k = kf.order();
    let n = kf.n();
    if k > n {
        return true;
    }
    let mut rng = rng::stream_rng(seed, 0x05ee_d5e7);
    let mut pool: Vec<usize> = (0..n).collect();
    for _ in 0..trials.max(1) {
        // partial Fisher-Yates for a random injective tuple
        for r in 0..k {
            let j = rng.random_range(r..n);
            pool.swap(r, j);
        }
        let tuple: TupleBuf = pool[..k].iter().copied().collect();
        let args: SmallVec<[&NormedValue<T>; 8]> = (0..k)
            .map(|_| dist.value(dist.atom_for_uniform(rng.random::<f64>())))
            .collect();
        let mut perm: TupleBuf = (0..k).collect();
        for r in (1..k).rev() {
            let j = rng.random_range(0..=r);
            perm.swap(r, j);
        }
        let pt: TupleBuf = perm.iter().map(|&p| tuple[p]).collect();
        let pa: SmallVec<[&NormedValue<T>; 8]> = perm.iter().map(|&p| args[p]).collect();
        let a = kf.eval(&tuple, &args);
        let b = kf.eval(&pt, &pa);
        match a.max_abs_diff(&b) {
            Ok(d) if d.to_f64_lossy() <= KERNEL_TOLERANCE => {}
            _ => return false,
        }
    }
    true
}

/// Inclusion-exclusion coefficient
/// `sum over d in {0,1}^k of (-1)^(k - |d|) d[j_1] ... d[j_k]`
/// for a word `j` over `0..k`. It equals 1 when `j` is a permutation and 0
/// otherwise.
pub fn mazur_orlicz_coefficient(word: &[usize]) -> Result<i64> {
    let k = word.len();
    if k == 0 || k > 62 {
        return Err(Error::invalid("word length must be in 1..=62"));
    }
    if let Some(&bad) = word.iter().find(|&&j| j >= k) {
        return Err(Error::invalid(format!("entry {bad} out of range 0..{k}")));
    }
    let mut total = 0i64;
    for mask in 0u64..(1u64 << k) {
        if word.iter().all(|&j| mask >> j & 1 == 1) {
            let missing = k as u32 - mask.count_ones();
            total += if missing.is_multiple_of(2) { 1 } else { -1 };
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    type K = KernelFamily<f64>;
    type V = NormedValue<f64>;

    fn s(x: f64) -> V {
        V::scalar(x)
    }

    fn probe(kf: &K, tuple: &[usize], args: &[f64]) -> f64 {
        let vals: Vec<V> = args.iter().map(|&x| s(x)).collect();
        let refs: Vec<&V> = vals.iter().collect();
        kf.eval(tuple, &refs).first()
    }

    #[test]
    fn symmetrize_examples() {
        let prod = K::product(2, 3, 1).unwrap();
        let sym = symmetrize(&prod, MAX_PERMUTATION_ORDER).unwrap();
        assert_eq!(probe(&sym, &[0, 1], &[3.0, 5.0]), 30.0);

        let first = K::first_argument(2, 3, 1).unwrap();
        let sym = symmetrize(&first, MAX_PERMUTATION_ORDER).unwrap();
        assert_eq!(probe(&sym, &[0, 1], &[3.0, 5.0]), 8.0);
        assert_eq!(probe(&sym, &[2, 0], &[-1.0, 5.0]), 4.0);
    }

    #[test]
    fn symmetrize_of_symmetric_is_factorial_multiple() {
        let dist = DiscreteDistribution::<f64>::uniform(3).unwrap();
        for k in 1..=4 {
            let f = K::random_coefficient(k, 5, 1, 11, true).unwrap();
            let sym = symmetrize(&f, MAX_PERMUTATION_ORDER).unwrap();
            let kf = factorial(k) as f64;
            let mut r = rng::stream_rng(3, k as u64);
            for t in distinct_tuples(5, k).take(20) {
                let args: Vec<f64> = (0..k)
                    .map(|_| dist.value(dist.atom_for_uniform(r.random())).first())
                    .collect();
                assert_eq!(probe(&sym, t.entries(), &args), kf * probe(&f, t.entries(), &args));
            }
        }
    }

    #[test]
    fn symmetrize_is_idempotent_up_to_factorial() {
        let mut r = rng::stream_rng(5, 0);
        for k in 1..=4 {
            let f = K::random_coefficient(k, 6, 2, 99, false).unwrap();
            let s1 = symmetrize(&f, MAX_PERMUTATION_ORDER).unwrap();
            let s2 = symmetrize(&s1, MAX_PERMUTATION_ORDER).unwrap();
            let kf = factorial(k) as f64;
            for t in distinct_tuples(6, k).step_by(7).take(15) {
                let vals: Vec<V> = (0..k)
                    .map(|_| V::from_f64(&[r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).unwrap())
                    .collect();
                let refs: Vec<&V> = vals.iter().collect();
                let a = s2.eval(t.entries(), &refs);
                let b = s1.eval(t.entries(), &refs).scaled(kf);
                assert!(a.max_abs_diff(&b).unwrap() <= 1e-9, "k={k}");
            }
        }
    }

    #[test]
    fn symmetrize_respects_budget() {
        let f = K::product(8, 8, 1).unwrap();
        assert!(matches!(
            symmetrize(&f, MAX_PERMUTATION_ORDER),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn symmetry_check_examples() {
        let rad = DiscreteDistribution::<f64>::uniform(3).unwrap();
        assert!(check_symmetry(&K::product(2, 4, 1).unwrap(), &rad, 200, 1));
        assert!(!check_symmetry(&K::difference(4, 1).unwrap(), &rad, 200, 1));
        let sym = symmetrize(&K::difference(4, 1).unwrap(), MAX_PERMUTATION_ORDER).unwrap();
        assert!(check_symmetry(&sym, &rad, 200, 1));
        let sym = symmetrize(&K::random_coefficient(3, 5, 1, 4, false).unwrap(), 7).unwrap();
        assert!(check_symmetry(&sym, &rad, 200, 2));
        assert!(!check_symmetry(&K::random_coefficient(3, 5, 1, 4, false).unwrap(), &rad, 500, 2));
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(mazur_orlicz_coefficient(&[0, 1]), Ok(1));
        assert_eq!(mazur_orlicz_coefficient(&[0, 0]), Ok(0));
        assert_eq!(mazur_orlicz_coefficient(&[1, 0, 2]), Ok(1));
        assert!(mazur_orlicz_coefficient(&[0, 2]).is_err());
    }

    #[test]
    fn coefficient_is_permutation_indicator() {
        for k in 1..=6 {
            for w in all_words(k, k) {
                let expect = i64::from(is_permutation(&w));
                assert_eq!(mazur_orlicz_coefficient(&w).unwrap(), expect, "{w:?}");
            }
        }
    }
}
