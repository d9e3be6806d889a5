//! Pass/fail checks for the tail inequalities, the coupling identities and the
//! constant searches, plus the corpus driver that runs them in bulk.

mod chaos;
mod constants;
mod corpus;
mod identities;
mod inequalities;

use serde::{Deserialize, Serialize};

pub use chaos::{Chaos, ChaosTerm, ChaosVariables};
pub use constants::{
    is_feasible, search_constant, search_constant_unchecked, ConstantSearchResult, Direction, SearchSettings,
    BRACKET_TOP, DEFAULT_BISECTION_TOLERANCE,
};
pub use corpus::{
    run_corpus, CheckName, CheckResult, CheckSummary, ChaosSuite, CorpusReport, CorpusSpec, CorpusSummary,
    Detail, DistributionSpec, EmpiricalConstant, Family, Instance, RunSettings, Size, Status, Tolerances,
};
pub use identities::{
    coupling_law_identity, expansion_identity, mazur_orlicz_identity, sampled_matrix, selector_conditional_identity,
    sign_conditional_identity, IdentityOutcome,
};
pub use inequalities::{
    random_law, random_mean_zero_law, rademacher_moment_bound, selector_moment_bound, verify_lemma1,
    verify_lemma1_statistic, verify_lemma2, verify_moment_comparison, verify_prop1, LEMMA1_FACTOR,
};

/// Absolute slack allowed when comparing two probabilities.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// Relative slack allowed when comparing two moments.
pub const MOMENT_TOLERANCE: f64 = 1e-12;

/// Direction of the comparison in an [`InequalityReport`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    AtLeast,
    /// `lhs > 0`; `rhs` is unused and set to 0.
    Positive,
}

/// One threshold of an inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub t: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ThresholdRow {
    /// Probability comparison with [`PROB_TOLERANCE`].
    pub fn probability(t: Option<f64>, lhs: f64, rhs: f64, relation: Relation) -> Self {
        let holds = match relation {
            Relation::AtMost => lhs <= rhs + PROB_TOLERANCE,
            Relation::AtLeast => lhs + PROB_TOLERANCE >= rhs,
            Relation::Positive => lhs > 0.0,
        };
        Self { t, lhs, rhs, holds }
    }

    /// `lhs <= rhs` up to [`MOMENT_TOLERANCE`] relative.
    pub fn moment(lhs: f64, rhs: f64) -> Self {
        Self {
            t: None,
            lhs,
            rhs,
            holds: lhs <= rhs * (1.0 + MOMENT_TOLERANCE),
        }
    }
}

/// Outcome of checking one inequality on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub instance: String,
    pub relation: Relation,
    pub rows: Vec<ThresholdRow>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, instance: impl Into<String>, relation: Relation, rows: Vec<ThresholdRow>) -> Self {
        let pass = rows.iter().all(|r| r.holds);
        Self {
            name: name.into(),
            instance: instance.into(),
            relation,
            rows,
            pass,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Smallest `rhs - lhs` (or `lhs - rhs` for lower bounds) over the rows.
    pub fn margin(&self) -> Option<f64> {
        self.rows
            .iter()
            .map(|r| match self.relation {
                Relation::AtMost => r.rhs - r.lhs,
                Relation::AtLeast | Relation::Positive => r.lhs - r.rhs,
            })
            .min_by(f64::total_cmp)
    }
}
