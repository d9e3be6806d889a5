//! Injective index tuples, permutations and copy patterns.
//!
//! Indices are 0-based throughout: a tuple over `n` rows has entries in
//! `0..n`, all distinct. Iteration is lexicographic.

use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type TupleBuf = SmallVec<[usize; 8]>;

/// An ordered tuple of pairwise distinct indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTuple(TupleBuf);

impl IndexTuple {
    pub fn new(entries: &[usize], n: usize) -> Result<Self> {
        for (i, &e) in entries.iter().enumerate() {
            if e >= n {
                return Err(Error::invalid(format!("index {e} out of range 0..{n}")));
            }
            if entries[..i].contains(&e) {
                return Err(Error::invalid(format!("index {e} repeated in tuple")));
            }
        }
        Ok(Self(entries.iter().copied().collect()))
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
}

/// `n (n-1) ... (n-k+1)`; zero when `k > n`.
pub fn count_distinct_tuples(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    ((n - k + 1)..=n).fold(1u128, |acc, x| acc.saturating_mul(x as u128))
}

pub fn factorial(k: usize) -> u128 {
    count_distinct_tuples(k, k)
}

/// Advances `tuple` to the next injective tuple in lexicographic order.
fn advance(tuple: &mut [usize], used: &mut [bool]) -> bool {
    let n = used.len();
    let k = tuple.len();
    let mut pos = k;
    while pos > 0 {
        pos -= 1;
        used[tuple[pos]] = false;
        let mut cand = tuple[pos] + 1;
        while cand < n && used[cand] {
            cand += 1;
        }
        if cand < n {
            tuple[pos] = cand;
            used[cand] = true;
            let mut fill = 0;
            for slot in tuple.iter_mut().skip(pos + 1) {
                while used[fill] {
                    fill += 1;
                }
                *slot = fill;
                used[fill] = true;
            }
            return true;
        }
    }
    false
}

/// Calls `f` on every injective `k`-tuple over `0..n`, lexicographically.
pub fn for_each_distinct_tuple(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut tuple: TupleBuf = (0..k).collect();
    let mut used = vec![false; n];
    for &t in &tuple {
        used[t] = true;
    }
    loop {
        f(&tuple);
        if !advance(&mut tuple, &mut used) {
            break;
        }
    }
}

/// Iterator over injective tuples; empty when `k > n` or `k == 0`.
#[derive(Clone, Debug)]
pub struct DistinctTuples {
    tuple: TupleBuf,
    used: Vec<bool>,
    done: bool,
}

pub fn distinct_tuples(n: usize, k: usize) -> DistinctTuples {
    let done = k == 0 || k > n;
    let tuple: TupleBuf = if done { TupleBuf::new() } else { (0..k).collect() };
    let mut used = vec![false; n];
    for &t in &tuple {
        used[t] = true;
    }
    DistinctTuples { tuple, used, done }
}

impl Iterator for DistinctTuples {
    type Item = IndexTuple;

    fn next(&mut self) -> Option<IndexTuple> {
        if self.done {
            return None;
        }
        let out = IndexTuple(self.tuple.clone());
        if !advance(&mut self.tuple, &mut self.used) {
            self.done = true;
        }
        Some(out)
    }
}

/// All permutations of `0..k` in lexicographic order; the identity comes first.
pub fn permutations(k: usize) -> Vec<TupleBuf> {
    let mut out = Vec::with_capacity(factorial(k).min(5040) as usize);
    for_each_distinct_tuple(k, k, |p| out.push(p.iter().copied().collect()));
    out
}

/// All `radix^len` words over `0..radix`, last position fastest.
pub fn all_words(radix: usize, len: usize) -> Vec<TupleBuf> {
    if radix == 0 {
        return Vec::new();
    }
    let mut word: TupleBuf = SmallVec::from_elem(0, len);
    let mut out = Vec::new();
    loop {
        out.push(word.clone());
        if !crate::value_space::increment_mixed_radix(&mut word, radix) {
            break;
        }
    }
    out
}

/// True when `word` is a permutation of `0..word.len()`.
pub fn is_permutation(word: &[usize]) -> bool {
    let k = word.len();
    let mut seen = vec![false; k];
    for &w in word {
        if w >= k || seen[w] {
            return false;
        }
        seen[w] = true;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn small_counts() {
        assert_eq!(distinct_tuples(3, 2).count(), 6);
        assert_eq!(distinct_tuples(5, 3).count(), 60);
        let two: Vec<Vec<usize>> = distinct_tuples(2, 2).map(|t| t.entries().to_vec()).collect();
        assert_eq!(two, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(distinct_tuples(2, 3).count(), 0);
        assert_eq!(count_distinct_tuples(2, 3), 0);
    }

    #[test]
    fn counts_match_falling_factorial() {
        for n in 1..=8 {
            for k in 1..=n {
                let all: Vec<IndexTuple> = distinct_tuples(n, k).collect();
                assert_eq!(all.len() as u128, count_distinct_tuples(n, k));
                let unique: HashSet<_> = all.iter().cloned().collect();
                assert_eq!(unique.len(), all.len());
                for t in &all {
                    assert!(IndexTuple::new(t.entries(), n).is_ok());
                }
                assert!(all.windows(2).all(|w| w[0] < w[1]), "not lexicographic");
                let mut via_callback = 0u128;
                for_each_distinct_tuple(n, k, |_| via_callback += 1);
                assert_eq!(via_callback, count_distinct_tuples(n, k));
            }
        }
    }

    #[test]
    fn permutations_of_three() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0].as_slice(), &[0, 1, 2]);
        assert_eq!(p[5].as_slice(), &[2, 1, 0]);
        assert!(p.iter().all(|w| is_permutation(w)));
    }

    #[test]
    fn words_and_permutation_test() {
        let w = all_words(2, 3);
        assert_eq!(w.len(), 8);
        assert_eq!(w[1].as_slice(), &[0, 0, 1]);
        assert!(!is_permutation(&[0, 0]));
        assert!(is_permutation(&[1, 0]));
    }

    #[test]
    fn index_tuple_validation() {
        assert!(IndexTuple::new(&[0, 0], 3).is_err());
        assert!(IndexTuple::new(&[0, 3], 3).is_err());
    }
}
