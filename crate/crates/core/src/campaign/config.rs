use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::MIN_TRIALS;
use crate::value_space::EnumerationBudget;
use crate::verifier::{ChaosSuite, CheckName, CorpusSpec, RunSettings, Tolerances};

/// Resource caps for a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    /// Realizations enumerated by any single exact computation.
    pub enumeration: u64,
    /// Realizations times kernel evaluations for one exact law.
    pub work: u64,
    pub mc_trials: u64,
    /// Outcomes enumerated by one coupling-law comparison.
    pub coupling_law: u64,
    pub symmetry_trials: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        let s = RunSettings::default();
        Self {
            enumeration: s.budget.0,
            work: s.work_budget.0,
            mc_trials: s.mc_trials,
            coupling_law: s.coupling_cap,
            symmetry_trials: s.symmetry_trials,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// JSON report; stdout when absent.
    pub report: Option<PathBuf>,
    /// Flat CSV export.
    pub table: Option<PathBuf>,
}

fn all_checks() -> Vec<CheckName> {
    CheckName::ALL.to_vec()
}

/// A verification campaign as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "all_checks")]
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusSpec::default(),
            budgets: Budgets::default(),
            tolerances: Tolerances::default(),
            checks: all_checks(),
            output: OutputSpec::default(),
        }
    }
}

/// Deserializes `text`, reporting the offending field path on failure.
pub fn from_json_with_path<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })
}

/// Parses and validates a config; absent fields take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = from_json_with_path(text)?;
    config.validate()?;
    Ok(config)
}

fn positive(path: &str, v: u64) -> Result<()> {
    if v == 0 {
        return Err(Error::config(path, "must be positive"));
    }
    Ok(())
}

fn check_suite(path: &str, s: &ChaosSuite) -> Result<()> {
    if s.instances == 0 {
        return Ok(());
    }
    if s.max_degree == 0 {
        return Err(Error::config(format!("{path}.max_degree"), "must be positive"));
    }
    if s.max_n < s.max_degree || s.max_n > 63 {
        return Err(Error::config(
            format!("{path}.max_n"),
            format!("must lie in {}..=63, got {}", s.max_degree, s.max_n),
        ));
    }
    if !(0.0..=1.0).contains(&s.density) {
        return Err(Error::config(format!("{path}.density"), "must lie in [0, 1]"));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (fi, fam) in self.corpus.families.iter().enumerate() {
            for (si, size) in fam.sizes.iter().enumerate() {
                let path = format!("corpus.families[{fi}].sizes[{si}]");
                if size.k == 0 || size.k > size.n {
                    return Err(Error::config(
                        path,
                        format!("pair (n = {}, k = {}) needs 1 <= k <= n", size.n, size.k),
                    ));
                }
            }
            if fam.l_max == 0 {
                return Err(Error::config(format!("corpus.families[{fi}].l_max"), "must be positive"));
            }
            for (di, d) in fam.distributions.iter().enumerate() {
                d.build()
                    .map_err(|e| Error::config(format!("corpus.families[{fi}].distributions[{di}]"), e.to_string()))?;
            }
        }
        check_suite("corpus.lemma2", &self.corpus.lemma2)?;
        check_suite("corpus.moments", &self.corpus.moments)?;
        positive("budgets.enumeration", self.budgets.enumeration)?;
        positive("budgets.work", self.budgets.work)?;
        positive("budgets.coupling_law", self.budgets.coupling_law)?;
        positive("budgets.symmetry_trials", self.budgets.symmetry_trials as u64)?;
        if self.budgets.mc_trials < MIN_TRIALS {
            return Err(Error::config(
                "budgets.mc_trials",
                format!("at least {MIN_TRIALS} trials required"),
            ));
        }
        let t = &self.tolerances;
        if t.identity.is_nan() || t.identity < 0.0 {
            return Err(Error::config("tolerances.identity", "must be nonnegative"));
        }
        if !(t.bisection > 0.0 && t.bisection < 1.0) {
            return Err(Error::config("tolerances.bisection", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&t.mc_coverage) {
            return Err(Error::config("tolerances.mc_coverage", "must lie in [0, 1]"));
        }
        if t.moment_bound.is_some_and(|b| b.is_nan() || b < 1.0) {
            return Err(Error::config("tolerances.moment_bound", "must be at least 1"));
        }
        positive("tolerances.kappa_grid", t.kappa_grid as u64)?;
        Ok(())
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            seed: self.seed,
            budget: EnumerationBudget(self.budgets.enumeration),
            work_budget: EnumerationBudget(self.budgets.work),
            coupling_cap: self.budgets.coupling_law,
            mc_trials: self.budgets.mc_trials,
            symmetry_trials: self.budgets.symmetry_trials,
            tolerances: self.tolerances,
            checks: self.checks.clone(),
        }
    }
}
