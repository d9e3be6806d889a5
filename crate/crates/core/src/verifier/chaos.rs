use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::for_each_distinct_tuple;
use crate::prob::ScalarLaw;
use crate::rng::stream_rng;
use crate::value_space::{increment_mixed_radix, saturating_pow, EnumerationBudget, NormedValue};

/// The independent variables a chaos is built from, one vector per row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ChaosVariables {
    /// `ε_i = ±1`; every term uses column 0.
    Rademacher,
    /// `δ_ij`, the indicator that row `i` selects column `j` out of `l`.
    Selector { l: usize },
    /// `δ_ij - 1/l`.
    CenteredSelector { l: usize },
}

impl ChaosVariables {
    /// Outcomes per row.
    pub fn radix(self) -> usize {
        match self {
            ChaosVariables::Rademacher => 2,
            ChaosVariables::Selector { l } | ChaosVariables::CenteredSelector { l } => l,
        }
    }

    fn columns(self) -> usize {
        match self {
            ChaosVariables::Rademacher => 1,
            other => other.radix(),
        }
    }

    fn value(self, choice: usize, col: usize) -> f64 {
        match self {
            ChaosVariables::Rademacher => 1.0 - 2.0 * choice as f64,
            ChaosVariables::Selector { .. } => f64::from(u8::from(choice == col)),
            ChaosVariables::CenteredSelector { l } => f64::from(u8::from(choice == col)) - 1.0 / l as f64,
        }
    }

    pub fn label(self) -> String {
        match self {
            ChaosVariables::Rademacher => "rademacher".into(),
            ChaosVariables::Selector { l } => format!("selector(l={l})"),
            ChaosVariables::CenteredSelector { l } => format!("centered-selector(l={l})"),
        }
    }
}

/// `coef * prod_r v(rows[r], cols[r])` over distinct rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosTerm {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub coef: NormedValue<f64>,
}

/// `x + sum of terms`, a polynomial of degree at most `degree()` in
/// independent row variables, tetrahedral (no row repeats inside a term).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chaos {
    pub n: usize,
    pub variables: ChaosVariables,
    pub x: NormedValue<f64>,
    pub terms: Vec<ChaosTerm>,
}

impl Chaos {
    pub fn new(n: usize, variables: ChaosVariables, x: NormedValue<f64>, terms: Vec<ChaosTerm>) -> Result<Self> {
        if n == 0 || n > 63 {
            return Err(Error::invalid(format!("chaos needs 1 <= n <= 63 rows, got {n}")));
        }
        if variables.radix() == 0 {
            return Err(Error::invalid("selector width must be at least 1"));
        }
        for t in &terms {
            if t.rows.is_empty() || t.rows.len() != t.cols.len() {
                return Err(Error::invalid("chaos term needs matching, non-empty rows and cols"));
            }
            if t.coef.dim() != x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: x.dim(),
                    got: t.coef.dim(),
                });
            }
            for (r, &i) in t.rows.iter().enumerate() {
                if i >= n || t.rows[..r].contains(&i) {
                    return Err(Error::invalid(format!("term rows {:?} must be distinct and < {n}", t.rows)));
                }
            }
            if t.cols.iter().any(|&c| c >= variables.columns()) {
                return Err(Error::invalid(format!("term cols {:?} out of range", t.cols)));
            }
        }
        Ok(Self { n, variables, x, terms })
    }

    /// `ε_1 + ... + ε_n`.
    pub fn sum_of_signs(n: usize) -> Result<Self> {
        let terms = (0..n)
            .map(|i| ChaosTerm {
                rows: vec![i],
                cols: vec![0],
                coef: NormedValue::scalar(1.0),
            })
            .collect();
        Self::new(n, ChaosVariables::Rademacher, NormedValue::scalar(0.0), terms)
    }

    /// Random chaos with integer coefficients in `[-3, 3]`: every ordered
    /// tuple of distinct rows of length `1..=degree` (and every column
    /// choice) enters with probability `density`. The constant `x` is
    /// zero when `with_constant` is false.
    pub fn random(
        n: usize,
        degree: usize,
        dim: usize,
        variables: ChaosVariables,
        density: f64,
        with_constant: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream_rng(seed, 0);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> NormedValue<f64> {
            NormedValue::new((0..dim).map(|_| rng.random_range(-3i32..=3) as f64)).expect("dim >= 1")
        };
        let x = if with_constant {
            draw(&mut rng)
        } else {
            NormedValue::zeros(dim)
        };
        let cols = variables.columns();
        let mut terms = Vec::new();
        for r in 1..=degree.min(n) {
            for_each_distinct_tuple(n, r, |rows| {
                let mut c = vec![0usize; r];
                loop {
                    if rng.random::<f64>() < density {
                        let coef = draw(&mut rng);
                        if !coef.is_zero() {
                            terms.push(ChaosTerm {
                                rows: rows.to_vec(),
                                cols: c.clone(),
                                coef,
                            });
                        }
                    }
                    if !increment_mixed_radix(&mut c, cols) {
                        break;
                    }
                }
            });
        }
        Self::new(n, variables, x, terms)
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.rows.len()).max().unwrap_or(0)
    }

    /// Number of equiprobable outcomes of the row variables.
    pub fn realizations(&self) -> u128 {
        saturating_pow(self.variables.radix(), self.n)
    }

    /// Value of the non-constant part for row outcomes `choices`.
    pub fn chaos_at(&self, choices: &[usize]) -> NormedValue<f64> {
        let mut acc = NormedValue::zeros(self.dim());
        for t in &self.terms {
            let w: f64 = t
                .rows
                .iter()
                .zip(&t.cols)
                .map(|(&i, &j)| self.variables.value(choices[i], j))
                .product();
            if w != 0.0 {
                acc.axpy(w, &t.coef);
            }
        }
        acc
    }

    /// Calls `f(x + chaos, probability)` for every outcome.
    pub fn for_each_outcome(&self, budget: EnumerationBudget, mut f: impl FnMut(&NormedValue<f64>, f64)) -> Result<()> {
        let total = self.realizations();
        budget.check(total)?;
        let p = 1.0 / total as f64;
        let mut choices = vec![0usize; self.n];
        loop {
            let mut v = self.chaos_at(&choices);
            v.add_in_place(&self.x);
            f(&v, p);
            if !increment_mixed_radix(&mut choices, self.variables.radix()) {
                break;
            }
        }
        Ok(())
    }

    /// Law of `x + chaos` for one-dimensional coefficients.
    pub fn scalar_law(&self, budget: EnumerationBudget) -> Result<ScalarLaw> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim(),
            });
        }
        let mut outcomes = Vec::new();
        self.for_each_outcome(budget, |v, p| outcomes.push((v.first(), p)))?;
        ScalarLaw::from_outcomes(outcomes)
    }

    pub fn describe(&self) -> String {
        format!(
            "{} chaos n={} degree={} terms={} dim={}",
            self.variables.label(),
            self.n,
            self.degree(),
            self.terms.len(),
            self.dim()
        )
    }
}
