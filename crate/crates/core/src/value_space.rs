//! Finite-dimensional normed values and finite discrete distributions.
//!
//! A [`NormedValue`] is a point of `R^d`; a [`Norm`] picks one of the
//! absolute-sum, euclidean or maximum norms on it. Kernels map tuples of
//! sample points into `NormedValue`s and every tail probability in the crate
//! is a probability about the norm of such a value.
//!
//! [`DiscreteDistribution`] is the law of one sample coordinate. Exact
//! computations enumerate the product law with [`product_enumerate`], which is
//! capped by an [`EnumerationBudget`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Inline capacity for coordinates; larger dimensions spill to the heap.
const INLINE_DIM: usize = 4;

/// Absolute tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A point of `R^d`, `d >= 1`.
#[derive(Clone, PartialEq)]
pub struct NormedValue<T> {
    coords: SmallVec<[T; INLINE_DIM]>,
}

impl<T: Scalar> NormedValue<T> {
    pub fn new(coords: impl IntoIterator<Item = T>) -> Result<Self> {
        let coords: SmallVec<[T; INLINE_DIM]> = coords.into_iter().collect();
        if coords.is_empty() {
            return Err(Error::invalid("a value needs at least one coordinate"));
        }
        Ok(Self { coords })
    }

    /// One-dimensional value.
    pub fn scalar(x: T) -> Self {
        let mut coords = SmallVec::new();
        coords.push(x);
        Self { coords }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            coords: SmallVec::from_elem(T::zero(), dim),
        }
    }

    pub fn from_f64(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&x| T::of(x)))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    /// First coordinate; the value itself in dimension one.
    #[inline]
    pub fn first(&self) -> T {
        self.coords[0]
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            coords: self.coords.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self += c * other`. Panics on dimension mismatch.
    #[inline]
    pub fn axpy(&mut self, c: T, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in axpy");
        for (a, &b) in self.coords.iter_mut().zip(other.coords.iter()) {
            *a += c * b;
        }
    }

    /// `self += other`. Panics on dimension mismatch.
    #[inline]
    pub fn add_in_place(&mut self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in addition");
        for (a, &b) in self.coords.iter_mut().zip(other.coords.iter()) {
            *a += b;
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            coords: self
                .coords
                .iter()
                .zip(other.coords.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Largest absolute coordinate difference; the identity-check metric.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        Ok(self
            .coords
            .iter()
            .zip(other.coords.iter())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn to_f64(&self) -> NormedValue<f64> {
        NormedValue {
            coords: self.coords.iter().map(|c| c.to_f64_lossy()).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> NormedValue<U> {
        NormedValue {
            coords: self.coords.iter().map(|c| U::of(c.to_f64_lossy())).collect(),
        }
    }
}

impl<T: Scalar> fmt::Debug for NormedValue<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coords.iter()).finish()
    }
}

impl<T: Scalar> Add for &NormedValue<T> {
    type Output = NormedValue<T>;

    /// Panics on dimension mismatch; use [`NormedValue::checked_add`] otherwise.
    fn add(self, rhs: Self) -> NormedValue<T> {
        self.checked_add(rhs).expect("dimension mismatch in addition")
    }
}

impl<T: Scalar> Sub for &NormedValue<T> {
    type Output = NormedValue<T>;

    fn sub(self, rhs: Self) -> NormedValue<T> {
        self.checked_sub(rhs).expect("dimension mismatch in subtraction")
    }
}

impl<T: Scalar> Mul<T> for &NormedValue<T> {
    type Output = NormedValue<T>;

    fn mul(self, rhs: T) -> NormedValue<T> {
        self.scaled(rhs)
    }
}

impl<T: Scalar> Neg for &NormedValue<T> {
    type Output = NormedValue<T>;

    fn neg(self) -> NormedValue<T> {
        self.map(|x| -x)
    }
}

impl<T: Scalar + Serialize> Serialize for NormedValue<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.as_slice().serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for NormedValue<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<T>::deserialize(d)?;
        NormedValue::new(coords).map_err(serde::de::Error::custom)
    }
}

/// The norm placed on the value space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    AbsoluteSum,
    #[default]
    Euclidean,
    Maximum,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::AbsoluteSum, Norm::Euclidean, Norm::Maximum];

    #[inline]
    pub fn eval<T: Scalar>(self, v: &NormedValue<T>) -> T {
        let c = v.coords();
        match self {
            Norm::AbsoluteSum => c.iter().fold(T::zero(), |s, x| s + x.abs()),
            Norm::Euclidean => {
                if c.len() == 1 {
                    c[0].abs()
                } else {
                    // scaled to avoid overflow for large coordinates
                    let m = c.iter().fold(T::zero(), |m, x| m.max(x.abs()));
                    if m.is_zero() {
                        return T::zero();
                    }
                    m * c.iter().fold(T::zero(), |s, &x| s + (x / m) * (x / m)).sqrt()
                }
            }
            Norm::Maximum => c.iter().fold(T::zero(), |m, x| m.max(x.abs())),
        }
    }

    /// The norm of the dual space under the standard pairing.
    pub fn dual(self) -> Norm {
        match self {
            Norm::AbsoluteSum => Norm::Maximum,
            Norm::Euclidean => Norm::Euclidean,
            Norm::Maximum => Norm::AbsoluteSum,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::AbsoluteSum => "absolute-sum",
            Norm::Euclidean => "euclidean",
            Norm::Maximum => "maximum",
        }
    }
}

/// `R^dim` with a chosen norm; rejects values of the wrong dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueSpace {
    pub dim: usize,
    pub norm: Norm,
}

impl ValueSpace {
    pub fn new(dim: usize, norm: Norm) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("value space dimension must be positive"));
        }
        Ok(Self { dim, norm })
    }

    pub fn norm<T: Scalar>(&self, v: &NormedValue<T>) -> Result<T> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        Ok(self.norm.eval(v))
    }
}

/// Cap on the number of items an exhaustive enumeration may visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnumerationBudget(pub u64);

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget(1 << 24)
    }
}

impl EnumerationBudget {
    pub fn check(self, requested: u128) -> Result<()> {
        if requested > self.0 as u128 {
            return Err(Error::BudgetExceeded {
                requested,
                budget: self.0,
            });
        }
        Ok(())
    }
}

/// `base^exp`, saturating at `u128::MAX`.
pub fn saturating_pow(base: usize, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base as u128);
    }
    acc
}

/// One atom of a discrete law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom<T: Scalar> {
    pub value: NormedValue<T>,
    pub prob: f64,
}

/// A finite discrete law on `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteDistribution<T: Scalar> {
    atoms: Vec<Atom<T>>,
}

impl<T: Scalar> DiscreteDistribution<T> {
    /// Validates mass, positivity, distinctness and a common dimension.
    pub fn new(atoms: Vec<(NormedValue<T>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        let dim = atoms[0].0.dim();
        for (i, (v, p)) in atoms.iter().enumerate() {
            if v.dim() != dim {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} has dimension {} but atom 0 has dimension {dim}",
                    v.dim()
                )));
            }
            if !(p.is_finite() && *p > 0.0 && *p <= 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} has probability {p} outside (0, 1]"
                )));
            }
            if atoms[..i].iter().any(|(w, _)| w == v) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} duplicates an earlier atom ({v:?})"
                )));
            }
        }
        let mass = neumaier_sum(atoms.iter().map(|(_, p)| *p));
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        Ok(Self {
            atoms: atoms
                .into_iter()
                .map(|(value, prob)| Atom { value, prob })
                .collect(),
        })
    }

    /// One-dimensional law from `(value, probability)` pairs.
    pub fn from_scalars(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            atoms
                .iter()
                .map(|&(x, p)| (NormedValue::scalar(T::of(x)), p))
                .collect(),
        )
    }

    /// Symmetric Bernoulli law on `{-1, +1}`.
    pub fn rademacher() -> Self {
        Self::from_scalars(&[(-1.0, 0.5), (1.0, 0.5)]).expect("valid")
    }

    /// `m` equiprobable points `j - (m-1)/2`, `j = 0..m`; centred and unit-spaced.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidDistribution("uniform(0) has no atoms".into()));
        }
        let shift = (m as f64 - 1.0) / 2.0;
        let p = 1.0 / m as f64;
        Self::new(
            (0..m)
                .map(|j| (NormedValue::scalar(T::of(j as f64 - shift)), p))
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].value.dim()
    }

    pub fn value(&self, atom: usize) -> &NormedValue<T> {
        &self.atoms[atom].value
    }

    pub fn prob(&self, atom: usize) -> f64 {
        self.atoms[atom].prob
    }

    pub fn mean(&self) -> NormedValue<f64> {
        let mut m = NormedValue::zeros(self.dim());
        for a in &self.atoms {
            m.axpy(a.prob, &a.value.to_f64());
        }
        m
    }

    pub fn to_f64(&self) -> DiscreteDistribution<f64> {
        DiscreteDistribution {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    value: a.value.to_f64(),
                    prob: a.prob,
                })
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> DiscreteDistribution<U> {
        DiscreteDistribution {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    value: a.value.cast(),
                    prob: a.prob,
                })
                .collect(),
        }
    }

    /// Inverse-CDF lookup for a uniform draw in `[0, 1)`.
    pub fn atom_for_uniform(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            acc += a.prob;
            if u < acc {
                return i;
            }
        }
        self.atoms.len() - 1
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for DiscreteDistribution<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let atoms = Vec::<Atom<T>>::deserialize(d)?;
        DiscreteDistribution::new(atoms.into_iter().map(|a| (a.value, a.prob)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// Compensated sum, used wherever many probabilities are accumulated.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// All `|atoms|^count` assignments of atom indices with their product
/// probabilities, in mixed-radix order (last position varies fastest).
#[derive(Clone, Debug)]
pub struct ProductEnumeration<'a, T: Scalar> {
    dist: &'a DiscreteDistribution<T>,
    count: usize,
    total: u64,
    next: u64,
    digits: Vec<usize>,
}

/// Enumerates the product law of `count` independent draws from `dist`.
pub fn product_enumerate<T: Scalar>(
    dist: &DiscreteDistribution<T>,
    count: usize,
    budget: EnumerationBudget,
) -> Result<ProductEnumeration<'_, T>> {
    if count == 0 {
        return Err(Error::invalid("product enumeration needs count >= 1"));
    }
    let total = saturating_pow(dist.len(), count);
    budget.check(total)?;
    Ok(ProductEnumeration {
        dist,
        count,
        total: total as u64,
        next: 0,
        digits: vec![0; count],
    })
}

impl<'a, T: Scalar> ProductEnumeration<'a, T> {
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Assignment with the given mixed-radix index; used to partition ranges.
    pub fn assignment_at(&self, index: u64) -> Vec<usize> {
        let radix = self.dist.len() as u64;
        let mut digits = vec![0; self.count];
        let mut rest = index;
        for d in digits.iter_mut().rev() {
            *d = (rest % radix) as usize;
            rest /= radix;
        }
        digits
    }

    pub fn probability_of(&self, assignment: &[usize]) -> f64 {
        assignment.iter().map(|&a| self.dist.prob(a)).product()
    }
}

impl<'a, T: Scalar> Iterator for ProductEnumeration<'a, T> {
    type Item = (Vec<usize>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let out = self.digits.clone();
        let p = self.probability_of(&out);
        self.next += 1;
        increment_mixed_radix(&mut self.digits, self.dist.len());
        Some((out, p))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

impl<'a, T: Scalar> ExactSizeIterator for ProductEnumeration<'a, T> {}

/// Advances `digits` in base `radix`, last digit fastest. Returns `false` on wrap-around.
pub fn increment_mixed_radix(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}
