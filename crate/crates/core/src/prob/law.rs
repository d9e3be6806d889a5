use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value_space::{neumaier_sum, MASS_TOLERANCE};

/// Relative gap below which two computed outcomes count as the same atom.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// A finite law on the real line given by sorted `(value, probability)` atoms.
pub trait FiniteLaw {
    fn atoms(&self) -> &[(f64, f64)];

    /// `(E|X|^p)^(1/p)`.
    fn moment(&self, p: f64) -> f64 {
        assert!(p > 0.0, "moment order must be positive");
        let m = neumaier_sum(self.atoms().iter().map(|&(v, q)| q * v.abs().powf(p)));
        m.max(0.0).powf(1.0 / p)
    }

    fn mean(&self) -> f64 {
        neumaier_sum(self.atoms().iter().map(|&(v, q)| q * v))
    }
}

/// Sorts, merges near-equal values and validates the total mass.
fn normalize_atoms(mut outcomes: Vec<(f64, f64)>) -> Result<Vec<(f64, f64)>> {
    if outcomes.is_empty() {
        return Err(Error::InvalidDistribution("law has no outcomes".into()));
    }
    if let Some(&(v, p)) = outcomes.iter().find(|(v, p)| !v.is_finite() || !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!("bad outcome ({v}, {p})")));
    }
    outcomes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, Vec<f64>)> = Vec::new();
    for (v, p) in outcomes {
        match merged.last_mut() {
            Some((rep, ps)) if (v - *rep).abs() <= MERGE_TOLERANCE * rep.abs().max(1.0) => ps.push(p),
            _ => merged.push((v, vec![p])),
        }
    }
    let atoms: Vec<(f64, f64)> = merged
        .into_iter()
        .map(|(v, ps)| (v, neumaier_sum(ps)))
        .filter(|&(_, p)| p > 0.0)
        .collect();
    let mass = neumaier_sum(atoms.iter().map(|a| a.1));
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("outcome probabilities sum to {mass}")));
    }
    Ok(atoms)
}

/// Law of a norm: nonnegative, strictly increasing support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormLawRepr")]
pub struct NormLaw {
    support: Vec<(f64, f64)>,
    #[serde(skip)]
    tails: Vec<f64>,
}

#[derive(Deserialize)]
struct NormLawRepr {
    support: Vec<(f64, f64)>,
}

impl TryFrom<NormLawRepr> for NormLaw {
    type Error = Error;

    fn try_from(r: NormLawRepr) -> Result<Self> {
        Self::from_outcomes(r.support)
    }
}

impl NormLaw {
    /// Builds the law from possibly repeated `(norm value, probability)` outcomes.
    pub fn from_outcomes(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(v, _)) = outcomes.iter().find(|(v, _)| *v < 0.0) {
            return Err(Error::InvalidDistribution(format!("negative norm value {v}")));
        }
        let support = normalize_atoms(outcomes)?;
        let mut tails = vec![0.0; support.len()];
        let mut acc = 0.0;
        for i in (0..support.len()).rev() {
            acc += support[i].1;
            tails[i] = acc.min(1.0);
        }
        tails[0] = 1.0;
        Ok(Self { support, tails })
    }

    /// Point mass.
    pub fn dirac(value: f64) -> Result<Self> {
        Self::from_outcomes(vec![(value, 1.0)])
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.support.iter().map(|a| a.0)
    }

    pub fn min(&self) -> f64 {
        self.support[0].0
    }

    pub fn max(&self) -> f64 {
        self.support[self.support.len() - 1].0
    }

    /// `P(X >= t)`; nonincreasing in `t`, equal to 1 for `t <= min`.
    pub fn tail(&self, t: f64) -> f64 {
        let idx = self.support.partition_point(|&(v, _)| v < t);
        self.tails.get(idx).copied().unwrap_or(0.0)
    }

    /// Tail at a computed threshold: values within [`MERGE_TOLERANCE`]
    /// (relative) below `t` count as reaching it, so that `t` obtained by
    /// rescaling an atom does not drop that atom to rounding.
    pub fn tail_at(&self, t: f64) -> f64 {
        self.tail(t * (1.0 - MERGE_TOLERANCE))
    }

    /// Law of `s * X` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if s <= 0.0 {
            return Err(Error::invalid("scale must be positive"));
        }
        Self::from_outcomes(self.support.iter().map(|&(v, p)| (v * s, p)).collect())
    }
}

impl FiniteLaw for NormLaw {
    fn atoms(&self) -> &[(f64, f64)] {
        &self.support
    }
}

/// A finite law on the real line with signed values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormLawRepr")]
pub struct ScalarLaw {
    support: Vec<(f64, f64)>,
}

impl TryFrom<NormLawRepr> for ScalarLaw {
    type Error = Error;

    fn try_from(r: NormLawRepr) -> Result<Self> {
        Self::from_outcomes(r.support)
    }
}

impl ScalarLaw {
    pub fn from_outcomes(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self {
            support: normalize_atoms(outcomes)?,
        })
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    /// Law of `|X|`.
    pub fn abs(&self) -> NormLaw {
        NormLaw::from_outcomes(self.support.iter().map(|&(v, p)| (v.abs(), p)).collect())
            .expect("absolute values of a valid law")
    }

    /// `P(X >= t)`.
    pub fn upper_tail(&self, t: f64) -> f64 {
        neumaier_sum(self.support.iter().filter(|a| a.0 >= t).map(|a| a.1))
    }
}

impl FiniteLaw for ScalarLaw {
    fn atoms(&self) -> &[(f64, f64)] {
        &self.support
    }
}
