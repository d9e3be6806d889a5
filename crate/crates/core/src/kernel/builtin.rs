//! Built-in kernels for the verification corpus.

use serde::{Deserialize, Serialize};

use super::KernelFamily;
use crate::error::{Error, Result};
use crate::rng::hash_words;
use crate::scalar::Scalar;
use crate::value_space::NormedValue;

/// Integer coefficient in `[-3, 3]` attached to an index tuple.
fn coefficient(seed: u64, tuple: &[usize], symmetric: bool) -> i64 {
    let h = if symmetric {
        let mut sorted: smallvec::SmallVec<[usize; 8]> = tuple.iter().copied().collect();
        sorted.sort_unstable();
        hash_words(seed, sorted.iter().map(|&i| i as u64))
    } else {
        hash_words(seed, tuple.iter().map(|&i| i as u64))
    };
    (h % 7) as i64 - 3
}

#[inline]
fn coordinate_product<T: Scalar>(dim: usize, args: &[&NormedValue<T>]) -> NormedValue<T> {
    let mut out = args[0].clone();
    for a in &args[1..] {
        assert_eq!(a.dim(), dim, "argument dimension mismatch");
        out = NormedValue::new(out.coords().iter().zip(a.coords()).map(|(&x, &y)| x * y))
            .expect("non-empty");
    }
    out
}

impl<T: Scalar> KernelFamily<T> {
    /// `f ≡ c`, ignoring indices and arguments.
    pub fn constant(order: usize, n: usize, c: NormedValue<T>) -> Result<Self> {
        let dim = c.dim();
        Self::from_fn(format!("constant{:?}", c), order, n, dim, true, move |_, _| c.clone())
    }

    pub fn zero(order: usize, n: usize, dim: usize) -> Result<Self> {
        Self::constant(order, n, NormedValue::zeros(dim)).map(|k| k.with_name("zero"))
    }

    /// Coordinatewise product of the arguments; arguments live in `R^dim`.
    pub fn product(order: usize, n: usize, dim: usize) -> Result<Self> {
        Self::from_fn("product", order, n, dim, true, move |_, args| {
            coordinate_product(dim, args)
        })
    }

    /// `product + c` in every coordinate.
    pub fn affine_product(order: usize, n: usize, dim: usize, c: f64) -> Result<Self> {
        let shift = T::of(c);
        Self::from_fn(format!("affine({c})"), order, n, dim, true, move |_, args| {
            coordinate_product(dim, args).map(|x| x + shift)
        })
    }

    /// `a_{i_1..i_k} * product` with integer `a` in `[-3, 3]` drawn per tuple.
    ///
    /// With `symmetric` the coefficient depends on the tuple as a set, which
    /// makes the family satisfy the permutation symmetry condition.
    pub fn random_coefficient(
        order: usize,
        n: usize,
        dim: usize,
        seed: u64,
        symmetric: bool,
    ) -> Result<Self> {
        let name = if symmetric { "random-sym" } else { "random-asym" };
        Self::from_fn(name, order, n, dim, symmetric, move |tuple, args| {
            let a = coefficient(seed, tuple, symmetric);
            coordinate_product(dim, args).scaled(T::of(a as f64))
        })
    }

    /// `f(x_1, ..., x_k) = x_1`; not symmetric for `k >= 2`.
    pub fn first_argument(order: usize, n: usize, dim: usize) -> Result<Self> {
        Self::from_fn("first-argument", order, n, dim, order == 1, move |_, args| {
            args[0].clone()
        })
    }

    /// `f(x, y) = x - y`; antisymmetric.
    pub fn difference(n: usize, dim: usize) -> Result<Self> {
        Self::from_fn("difference", 2, n, dim, false, move |_, args| args[0] - args[1])
    }

    /// `R^2`-valued `(product, sum)` of one-dimensional arguments.
    pub fn product_and_sum(order: usize, n: usize) -> Result<Self> {
        Self::from_fn("product-and-sum", order, n, 2, true, |_, args| {
            let p = args.iter().fold(T::one(), |acc, a| acc * a.first());
            let s = args.iter().fold(T::zero(), |acc, a| acc + a.first());
            NormedValue::new([p, s]).expect("two coordinates")
        })
    }
}

/// Serializable description of a built-in kernel, instantiated per `(k, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "class", deny_unknown_fields)]
pub enum KernelClass {
    Zero,
    Constant { value: f64 },
    Product,
    Affine { shift: f64 },
    RandomSymmetric,
    RandomAsymmetric,
    FirstArgument,
    Difference,
    ProductAndSum,
}

impl KernelClass {
    /// Builds the kernel for arguments in `R^arg_dim`.
    pub fn build<T: Scalar>(
        &self,
        order: usize,
        n: usize,
        arg_dim: usize,
        seed: u64,
    ) -> Result<KernelFamily<T>> {
        match self {
            KernelClass::Zero => KernelFamily::zero(order, n, arg_dim),
            KernelClass::Constant { value } => {
                KernelFamily::constant(order, n, NormedValue::from_f64(&vec![*value; arg_dim])?)
            }
            KernelClass::Product => KernelFamily::product(order, n, arg_dim),
            KernelClass::Affine { shift } => KernelFamily::affine_product(order, n, arg_dim, *shift),
            KernelClass::RandomSymmetric => {
                KernelFamily::random_coefficient(order, n, arg_dim, seed, true)
            }
            KernelClass::RandomAsymmetric => {
                KernelFamily::random_coefficient(order, n, arg_dim, seed, false)
            }
            KernelClass::FirstArgument => KernelFamily::first_argument(order, n, arg_dim),
            KernelClass::Difference => {
                if order != 2 {
                    return Err(Error::invalid("difference kernel has order 2"));
                }
                KernelFamily::difference(n, arg_dim)
            }
            KernelClass::ProductAndSum => {
                if arg_dim != 1 {
                    return Err(Error::invalid("product-and-sum takes scalar arguments"));
                }
                KernelFamily::product_and_sum(order, n)
            }
        }
    }

    /// Whether instances of this class satisfy the symmetry condition.
    pub fn is_symmetric(&self, order: usize) -> bool {
        match self {
            KernelClass::RandomAsymmetric | KernelClass::Difference => false,
            KernelClass::FirstArgument => order == 1,
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        match self {
            KernelClass::Zero => "zero".into(),
            KernelClass::Constant { value } => format!("constant({value})"),
            KernelClass::Product => "product".into(),
            KernelClass::Affine { shift } => format!("affine({shift})"),
            KernelClass::RandomSymmetric => "random-sym".into(),
            KernelClass::RandomAsymmetric => "random-asym".into(),
            KernelClass::FirstArgument => "first-argument".into(),
            KernelClass::Difference => "difference".into(),
            KernelClass::ProductAndSum => "product-and-sum".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_in_range_and_deterministic() {
        for t in crate::kernel::distinct_tuples(6, 3) {
            let a = coefficient(9, t.entries(), false);
            assert!((-3..=3).contains(&a));
            assert_eq!(a, coefficient(9, t.entries(), false));
            let mut rev = t.entries().to_vec();
            rev.reverse();
            assert_eq!(coefficient(9, t.entries(), true), coefficient(9, &rev, true));
        }
    }

    #[test]
    fn class_serde_shape() {
        let c: KernelClass = serde_json::from_str(r#"{"class":"affine","shift":1.0}"#).unwrap();
        assert_eq!(c, KernelClass::Affine { shift: 1.0 });
        assert!(serde_json::from_str::<KernelClass>(r#"{"class":"nope"}"#).is_err());
    }

    #[test]
    fn product_and_sum_values() {
        let k = KernelFamily::<f64>::product_and_sum(3, 3).unwrap();
        let a = [NormedValue::scalar(2.0), NormedValue::scalar(-1.0), NormedValue::scalar(3.0)];
        let refs: Vec<_> = a.iter().collect();
        assert_eq!(k.eval(&[0, 1, 2], &refs).coords(), &[-6.0, 4.0]);
    }
}
