use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, MAX_PERMUTATION_ORDER};
use crate::scalar::Scalar;
use crate::ustat::{self, CopyPattern, SampleMatrix};
use crate::value_space::{Norm, NormedValue};

/// Which sum over the sample matrix the statistic is.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Mode {
    /// All arguments from copy 0.
    Coupled,
    /// Argument `r` from copy `pattern[r]`; `(0..k)` is fully decoupled.
    Pattern { pattern: CopyPattern },
    /// All `l^k` patterns over copies `0..l`.
    Mixed { l: usize },
    /// Non-constant patterns over two copies.
    NotAllEqual,
    /// The `k!` permutation patterns over `k` copies.
    Symmetrized,
}

impl Mode {
    pub fn decoupled(k: usize) -> Self {
        Mode::Pattern {
            pattern: CopyPattern::decoupled(k),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Mode::Coupled => "coupled".into(),
            Mode::Pattern { pattern } => format!("pattern{:?}", pattern.entries()),
            Mode::Mixed { l } => format!("mixed(l={l})"),
            Mode::NotAllEqual => "not-all-equal".into(),
            Mode::Symmetrized => "symmetrized".into(),
        }
    }
}

/// A real statistic `||S(X)||` of the sample matrix.
#[derive(Clone, Debug)]
pub struct StatisticSpec<T: Scalar> {
    pub kernel: KernelFamily<T>,
    pub n: usize,
    pub mode: Mode,
    pub norm: Norm,
}

impl<T: Scalar> StatisticSpec<T> {
    pub fn new(kernel: KernelFamily<T>, n: usize, mode: Mode, norm: Norm) -> Result<Self> {
        let spec = Self { kernel, n, mode, norm };
        spec.validate()?;
        Ok(spec)
    }

    pub fn order(&self) -> usize {
        self.kernel.order()
    }

    fn validate(&self) -> Result<()> {
        let k = self.order();
        if k > self.n {
            return Err(Error::invalid(format!("order k={k} exceeds n={}", self.n)));
        }
        if self.n > self.kernel.n() {
            return Err(Error::invalid(format!(
                "n={} exceeds the kernel index bound {}",
                self.n,
                self.kernel.n()
            )));
        }
        match &self.mode {
            Mode::Pattern { pattern } if pattern.len() != k => Err(Error::invalid(format!(
                "pattern length {} does not match order {k}",
                pattern.len()
            ))),
            Mode::Mixed { l: 0 } => Err(Error::invalid("mixed mode needs l >= 1")),
            Mode::Symmetrized if k > MAX_PERMUTATION_ORDER => Err(Error::invalid(format!(
                "symmetrized mode limited to k <= {MAX_PERMUTATION_ORDER}"
            ))),
            _ => Ok(()),
        }
    }

    /// Independent copies of the sequence the statistic reads.
    pub fn copies_needed(&self) -> usize {
        match &self.mode {
            Mode::Coupled => 1,
            Mode::Pattern { pattern } => pattern.copies_needed().max(1),
            Mode::Mixed { l } => *l,
            Mode::NotAllEqual => 2,
            Mode::Symmetrized => self.order(),
        }
    }

    pub fn evaluate(&self, s: &SampleMatrix<T>) -> Result<NormedValue<T>> {
        let kf = &self.kernel;
        match &self.mode {
            Mode::Coupled => ustat::pattern_sum(kf, s, &CopyPattern::coupled(self.order())),
            Mode::Pattern { pattern } => ustat::pattern_sum(kf, s, pattern),
            Mode::Mixed { l } => ustat::mixed_sum(kf, s, *l),
            Mode::NotAllEqual => ustat::not_all_equal_sum(kf, s),
            Mode::Symmetrized => ustat::symmetrized_decoupled_sum(kf, s, MAX_PERMUTATION_ORDER),
        }
    }

    pub fn norm_of(&self, s: &SampleMatrix<T>) -> Result<f64> {
        Ok(self.norm.eval(&self.evaluate(s)?).to_f64_lossy())
    }

    /// Kernel evaluations per realization, for cost estimates.
    pub fn evaluations_per_sample(&self) -> u128 {
        let k = self.order();
        let tuples = crate::kernel::count_distinct_tuples(self.n, k);
        let patterns = match &self.mode {
            Mode::Coupled | Mode::Pattern { .. } => 1,
            Mode::Mixed { l } => crate::value_space::saturating_pow(*l, k),
            Mode::NotAllEqual => crate::value_space::saturating_pow(2, k).saturating_sub(2),
            Mode::Symmetrized => crate::kernel::factorial(k),
        };
        tuples.saturating_mul(patterns)
    }

    pub fn describe(&self) -> String {
        format!(
            "{} k={} n={} {} {}",
            self.kernel.name(),
            self.order(),
            self.n,
            self.mode.label(),
            self.norm.name()
        )
    }
}
