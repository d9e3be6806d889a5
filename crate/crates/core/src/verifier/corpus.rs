use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chaos::{Chaos, ChaosVariables};
use super::constants::{search_constant, search_constant_unchecked, ConstantSearchResult, Direction, SearchSettings};
use super::identities::{
    coupling_law_identity, expansion_identity, mazur_orlicz_identity, selector_conditional_identity,
    sign_conditional_identity, IdentityOutcome,
};
use super::inequalities::{
    random_law, random_mean_zero_law, verify_lemma1, verify_lemma1_statistic, verify_lemma2, verify_moment_comparison,
    verify_prop1,
};
use super::{InequalityReport, Relation, ThresholdRow};
use crate::error::{Error, Result};
use crate::kernel::{all_words, is_permutation, mazur_orlicz_coefficient, KernelClass, KernelFamily};
use crate::prob::{exact_law, grid_from_laws, mc_tail, KappaEstimate, Mode, StatisticSpec, TailEstimate};
use crate::randomization::Coupling;
use crate::rng::{derive_seed, stream_rng};
use crate::value_space::{DiscreteDistribution, EnumerationBudget, Norm, NormedValue};

/// Named checks, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckName {
    Expansion,
    SignConditional,
    SelectorConditional,
    MazurOrlicz,
    CouplingLaw,
    Lemma1,
    Prop1,
    Lemma2,
    Moments,
    Theorem1Upper,
    Theorem1Lower,
    Lemma3,
    McTail,
}

impl CheckName {
    pub const ALL: [CheckName; 13] = [
        CheckName::Expansion,
        CheckName::SignConditional,
        CheckName::SelectorConditional,
        CheckName::MazurOrlicz,
        CheckName::CouplingLaw,
        CheckName::Lemma1,
        CheckName::Prop1,
        CheckName::Lemma2,
        CheckName::Moments,
        CheckName::Theorem1Upper,
        CheckName::Theorem1Lower,
        CheckName::Lemma3,
        CheckName::McTail,
    ];

    pub const IDENTITIES: [CheckName; 5] = [
        CheckName::Expansion,
        CheckName::SignConditional,
        CheckName::SelectorConditional,
        CheckName::MazurOrlicz,
        CheckName::CouplingLaw,
    ];

    pub const CONSTANTS: [CheckName; 3] = [CheckName::Theorem1Upper, CheckName::Theorem1Lower, CheckName::Lemma3];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Expansion => "expansion",
            CheckName::SignConditional => "sign-conditional",
            CheckName::SelectorConditional => "selector-conditional",
            CheckName::MazurOrlicz => "mazur-orlicz",
            CheckName::CouplingLaw => "coupling-law",
            CheckName::Lemma1 => "lemma1",
            CheckName::Prop1 => "prop1",
            CheckName::Lemma2 => "lemma2",
            CheckName::Moments => "moments",
            CheckName::Theorem1Upper => "theorem1-upper",
            CheckName::Theorem1Lower => "theorem1-lower",
            CheckName::Lemma3 => "lemma3",
            CheckName::McTail => "mc-tail",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown check `{s}`")))
    }
}

/// A named sample distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum DistributionSpec {
    Rademacher,
    /// Equal mass on `m` centred integer-spaced points.
    Uniform { m: usize },
    /// Explicit atoms: `values[i]` (a coordinate vector) with mass `probs[i]`.
    Atoms { values: Vec<Vec<f64>>, probs: Vec<f64> },
}

impl DistributionSpec {
    pub fn build(&self) -> Result<DiscreteDistribution<f64>> {
        match self {
            DistributionSpec::Rademacher => Ok(DiscreteDistribution::rademacher()),
            DistributionSpec::Uniform { m } => DiscreteDistribution::uniform(*m),
            DistributionSpec::Atoms { values, probs } => {
                if values.len() != probs.len() {
                    return Err(Error::InvalidDistribution("values and probs differ in length".into()));
                }
                DiscreteDistribution::new(
                    values
                        .iter()
                        .zip(probs)
                        .map(|(v, &p)| Ok((NormedValue::from_f64(v)?, p)))
                        .collect::<Result<_>>()?,
                )
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DistributionSpec::Rademacher => "rademacher".into(),
            DistributionSpec::Uniform { m } => format!("uniform({m})"),
            DistributionSpec::Atoms { values, .. } => format!("atoms({})", values.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Size {
    pub n: usize,
    pub k: usize,
}

/// Every kernel class crossed with every distribution and size. Classes
/// that cannot be built for a size (e.g. a two-argument kernel at `k = 3`)
/// are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub kernels: Vec<KernelClass>,
    pub distributions: Vec<DistributionSpec>,
    pub sizes: Vec<Size>,
    /// Largest number of copies for selector checks and the mixed-sum constant.
    #[serde(default = "default_l_max")]
    pub l_max: usize,
}

fn default_l_max() -> usize {
    3
}

/// Random chaos instances: degree cycles through `1..=max_degree`, rows
/// through `degree..=max_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosSuite {
    pub instances: usize,
    pub max_degree: usize,
    pub max_n: usize,
    pub density: f64,
}

impl Default for ChaosSuite {
    fn default() -> Self {
        Self {
            instances: 30,
            max_degree: 3,
            max_n: 10,
            density: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub families: Vec<Family>,
    /// Random laws for the symmetrization and anticoncentration checks.
    pub random_laws: usize,
    /// Shift vectors per law in the anticoncentration check.
    pub prop1_shifts: usize,
    pub lemma2: ChaosSuite,
    pub moments: ChaosSuite,
    /// Leading corpus instances that get a Monte Carlo comparison.
    pub mc_instances: usize,
    pub norm: Norm,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        use KernelClass::*;
        Self {
            families: vec![
                Family {
                    kernels: vec![
                        Product,
                        RandomSymmetric,
                        RandomAsymmetric,
                        Affine { shift: 1.0 },
                        Zero,
                        Difference,
                        FirstArgument,
                    ],
                    distributions: vec![DistributionSpec::Rademacher],
                    sizes: [(2, 2), (3, 2), (4, 2), (5, 2), (3, 3), (4, 3)]
                        .map(|(n, k)| Size { n, k })
                        .to_vec(),
                    l_max: 3,
                },
                Family {
                    kernels: vec![Product, RandomSymmetric, RandomAsymmetric, ProductAndSum],
                    distributions: vec![DistributionSpec::Uniform { m: 3 }],
                    sizes: [(2, 2), (3, 2), (4, 2), (3, 3)].map(|(n, k)| Size { n, k }).to_vec(),
                    l_max: 3,
                },
            ],
            random_laws: 100,
            prop1_shifts: 20,
            lemma2: ChaosSuite {
                max_n: 10,
                ..ChaosSuite::default()
            },
            moments: ChaosSuite {
                max_n: 8,
                ..ChaosSuite::default()
            },
            mc_instances: 12,
            norm: Norm::Euclidean,
        }
    }
}

impl CorpusSpec {
    /// No instances and no random suites.
    pub fn empty() -> Self {
        Self {
            families: vec![],
            random_laws: 0,
            prop1_shifts: 0,
            lemma2: ChaosSuite {
                instances: 0,
                ..ChaosSuite::default()
            },
            moments: ChaosSuite {
                instances: 0,
                ..ChaosSuite::default()
            },
            mc_instances: 0,
            norm: Norm::Euclidean,
        }
    }
}

/// Comparison tolerances; all default to the documented contract values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub identity: f64,
    pub bisection: f64,
    /// Least fraction of Monte Carlo intervals that must cover the exact tail.
    pub mc_coverage: f64,
    /// Overrides the hypercontractivity bound in the moment check.
    pub moment_bound: Option<f64>,
    pub kappa_grid: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-12,
            bisection: super::DEFAULT_BISECTION_TOLERANCE,
            mc_coverage: 0.95,
            moment_bound: None,
            kappa_grid: crate::prob::DEFAULT_KAPPA_GRID,
        }
    }
}

/// Run-wide knobs besides the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub budget: EnumerationBudget,
    pub work_budget: EnumerationBudget,
    pub coupling_cap: u64,
    pub mc_trials: u64,
    pub symmetry_trials: usize,
    pub tolerances: Tolerances,
    pub checks: Vec<CheckName>,
}

impl Default for RunSettings {
    fn default() -> Self {
        let search = SearchSettings::default();
        Self {
            seed: 0,
            budget: search.budget,
            work_budget: search.work_budget,
            coupling_cap: 1 << 20,
            mc_trials: 20_000,
            symmetry_trials: search.symmetry_trials,
            tolerances: Tolerances::default(),
            checks: CheckName::ALL.to_vec(),
        }
    }
}

/// One concrete `(kernel, distribution, n, k)` case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub kernel: KernelClass,
    pub distribution: DistributionSpec,
    pub n: usize,
    pub k: usize,
    pub l_max: usize,
    pub seed: u64,
}

impl Instance {
    pub fn describe(&self) -> String {
        format!(
            "{} / {} n={} k={}",
            self.kernel.label(),
            self.distribution.label(),
            self.n,
            self.k
        )
    }

    fn build(&self) -> Result<(KernelFamily<f64>, DiscreteDistribution<f64>)> {
        let dist = self.distribution.build()?;
        let kf = self.kernel.build(self.k, self.n, dist.dim(), self.seed)?;
        Ok((kf, dist))
    }
}

/// Expands the families into instances; ids are positional.
pub fn instances(corpus: &CorpusSpec, seed: u64) -> Vec<Instance> {
    let mut out = Vec::new();
    for fam in &corpus.families {
        for size in &fam.sizes {
            for kernel in &fam.kernels {
                for dist in &fam.distributions {
                    let idx = out.len() as u64;
                    let inst = Instance {
                        id: format!("inst-{idx:03}"),
                        kernel: kernel.clone(),
                        distribution: dist.clone(),
                        n: size.n,
                        k: size.k,
                        l_max: fam.l_max,
                        seed: derive_seed(seed, "instance", idx),
                    };
                    if inst.build().is_ok() {
                        out.push(inst);
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// Outside the scope of the check (not a failure).
    Skipped,
    /// Exceeded an enumeration or work budget.
    Budget,
    /// Failed a precondition such as kernel symmetry.
    Rejected,
    /// Unexpected error; counts as a failure.
    Error,
    /// Exploratory or per-instance data that does not carry a verdict.
    Recorded,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Status::Fail | Status::Error)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Detail {
    None,
    Identity(IdentityOutcome),
    Inequality(InequalityReport),
    Constant(ConstantSearchResult),
    Anticoncentration { kappa: KappaEstimate, report: InequalityReport },
    MonteCarlo { exact: Vec<f64>, estimates: Vec<TailEstimate> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: CheckName,
    pub instance_id: String,
    pub description: String,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub detail: Detail,
}

impl CheckResult {
    fn new(check: CheckName, id: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            check,
            instance_id: id.into(),
            description: description.into(),
            n: None,
            k: None,
            l: None,
            status: Status::Recorded,
            note: None,
            detail: Detail::None,
        }
    }

    fn sized(mut self, n: usize, k: usize, l: Option<usize>) -> Self {
        self.n = Some(n);
        self.k = Some(k);
        self.l = l;
        self
    }

    fn with(mut self, status: Status, detail: Detail) -> Self {
        self.status = status;
        self.detail = detail;
        self
    }

    fn noted(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Records an error as the outcome.
    fn failed(mut self, e: &Error) -> Self {
        self.status = match e {
            Error::BudgetExceeded { .. } => Status::Budget,
            Error::AsymmetricKernel(_) => Status::Rejected,
            _ => Status::Error,
        };
        self.note = Some(e.to_string());
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: Option<CheckName>,
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
    pub budget: usize,
    pub rejected: usize,
    pub error: usize,
    pub recorded: usize,
}

impl CheckSummary {
    fn add(&mut self, s: Status) {
        match s {
            Status::Pass => self.pass += 1,
            Status::Fail => self.fail += 1,
            Status::Skipped => self.skipped += 1,
            Status::Budget => self.budget += 1,
            Status::Rejected => self.rejected += 1,
            Status::Error => self.error += 1,
            Status::Recorded => self.recorded += 1,
        }
    }
}

/// Extreme value of a measured quantity over the corpus at fixed `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstant {
    pub quantity: String,
    pub k: usize,
    pub value: f64,
    pub instance_id: String,
    pub instances: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub checks: Vec<CheckSummary>,
    pub empirical_constants: Vec<EmpiricalConstant>,
    pub mc_coverage: Option<f64>,
    pub failures: Vec<String>,
    pub all_pass: bool,
    pub budget_exceeded: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub instances: Vec<Instance>,
    pub results: Vec<CheckResult>,
    pub summary: CorpusSummary,
    /// Wall-clock milliseconds per check; not part of the numerical content.
    #[serde(skip)]
    pub timings_ms: BTreeMap<String, f64>,
}

enum Job<'a> {
    Coefficients,
    Instance(CheckName, &'a Instance),
    CouplingLaw { id: String, dist: DistributionSpec, n: usize, l_max: usize },
    Law(CheckName, usize),
    Chaos(CheckName, usize),
}

struct Ctx<'a> {
    corpus: &'a CorpusSpec,
    settings: &'a RunSettings,
}

impl Ctx<'_> {
    fn search(&self, seed: u64) -> SearchSettings {
        SearchSettings {
            tolerance: self.settings.tolerances.bisection,
            budget: self.settings.budget,
            work_budget: self.settings.work_budget,
            symmetry_trials: self.settings.symmetry_trials,
            seed,
        }
    }

    fn norm(&self) -> Norm {
        self.corpus.norm
    }

    fn tol(&self) -> f64 {
        self.settings.tolerances.identity
    }

    fn budget(&self) -> EnumerationBudget {
        self.settings.budget
    }
}

fn identity_result(base: CheckResult, r: Result<IdentityOutcome>) -> CheckResult {
    match r {
        Ok(o) => base.with(Status::from_bool(o.holds), Detail::Identity(o)),
        Err(e) => base.failed(&e),
    }
}

fn coefficient_check() -> CheckResult {
    let mut checked = 0u64;
    let mut bad = 0u64;
    for k in 1..=6 {
        for w in all_words(k, k) {
            checked += 1;
            let expected = i64::from(is_permutation(&w));
            if mazur_orlicz_coefficient(&w) != Ok(expected) {
                bad += 1;
            }
        }
    }
    let outcome = IdentityOutcome {
        max_residual: bad as f64,
        comparisons: checked,
        tolerance: 0.0,
        holds: bad == 0,
    };
    CheckResult::new(CheckName::MazurOrlicz, "coefficients", "inclusion-exclusion coefficients, all words, k <= 6")
        .with(Status::from_bool(bad == 0), Detail::Identity(outcome))
}

fn run_instance(ctx: &Ctx, check: CheckName, inst: &Instance) -> Vec<CheckResult> {
    let base = || CheckResult::new(check, inst.id.clone(), inst.describe()).sized(inst.n, inst.k, None);
    let (kf, dist) = match inst.build() {
        Ok(x) => x,
        Err(e) => return vec![base().failed(&e)],
    };
    let (n, k, seed, norm, tol, budget) = (inst.n, inst.k, inst.seed, ctx.norm(), ctx.tol(), ctx.budget());
    let symmetric = inst.kernel.is_symmetric(k);
    match check {
        CheckName::Expansion => vec![identity_result(base(), expansion_identity(&kf, &dist, n, seed, norm, tol, budget))],
        CheckName::SignConditional => {
            vec![identity_result(base(), sign_conditional_identity(&kf, &dist, n, seed, norm, tol, budget))]
        }
        CheckName::SelectorConditional => (1..=inst.l_max)
            .map(|l| {
                let b = base().sized(n, k, Some(l));
                identity_result(b, selector_conditional_identity(&kf, &dist, n, l, seed, norm, tol, budget))
            })
            .collect(),
        CheckName::MazurOrlicz => {
            if k > 4 {
                return vec![base().with(Status::Skipped, Detail::None).noted("expansion identity checked for k <= 4")];
            }
            vec![identity_result(base(), mazur_orlicz_identity(&kf, &dist, n, seed, norm, tol, symmetric))]
        }
        CheckName::Lemma1 => {
            let r = StatisticSpec::new(kf, n, Mode::Coupled, norm)
                .and_then(|spec| verify_lemma1_statistic(&spec, &dist, budget));
            vec![inequality_result(base(), r)]
        }
        CheckName::Theorem1Upper => vec![constant_result(base(), search_constant(&kf, &dist, n, Direction::Upper, norm, &ctx.search(seed)))],
        CheckName::Theorem1Lower => {
            let settings = ctx.search(seed);
            let gated = search_constant(&kf, &dist, n, Direction::Lower, norm, &settings);
            match gated {
                Err(e @ Error::AsymmetricKernel(_)) => {
                    let rejected = base().failed(&e);
                    let mut explore = CheckResult::new(check, format!("{}-exploratory", inst.id), inst.describe()).sized(n, k, None);
                    explore = match search_constant_unchecked(&kf, &dist, n, Direction::Lower, norm, &settings) {
                        Ok(r) => explore.with(Status::Recorded, Detail::Constant(r)),
                        Err(e) => explore.failed(&e),
                    }
                    .noted("asymmetric kernel, exploratory search without the symmetry gate");
                    if explore.status != Status::Budget {
                        explore.status = Status::Recorded;
                    }
                    vec![rejected, explore]
                }
                other => vec![constant_result(base(), other)],
            }
        }
        CheckName::Lemma3 => {
            if !symmetric {
                return vec![base().with(Status::Skipped, Detail::None).noted("mixed-sum constant checked on symmetric kernels")];
            }
            (1..=inst.l_max.min(k))
                .map(|l| {
                    let b = base().sized(n, k, Some(l));
                    constant_result(b, search_constant(&kf, &dist, n, Direction::Lemma3 { l }, norm, &ctx.search(seed)))
                })
                .collect()
        }
        CheckName::McTail => vec![mc_result(ctx, base(), &kf, &dist, inst)],
        CheckName::CouplingLaw | CheckName::Prop1 | CheckName::Lemma2 | CheckName::Moments => vec![],
    }
}

fn inequality_result(base: CheckResult, r: Result<InequalityReport>) -> CheckResult {
    match r {
        Ok(rep) => {
            let status = Status::from_bool(rep.pass);
            base.with(status, Detail::Inequality(rep))
        }
        Err(e) => base.failed(&e),
    }
}

fn constant_result(base: CheckResult, r: Result<ConstantSearchResult>) -> CheckResult {
    match r {
        Ok(c) => base.with(Status::from_bool(c.feasible), Detail::Constant(c)),
        Err(e) => base.failed(&e),
    }
}

fn mc_result(
    ctx: &Ctx,
    base: CheckResult,
    kf: &KernelFamily<f64>,
    dist: &DiscreteDistribution<f64>,
    inst: &Instance,
) -> CheckResult {
    let run = || -> Result<Detail> {
        let spec = StatisticSpec::new(kf.clone(), inst.n, Mode::Coupled, ctx.norm())?;
        let law = exact_law(&spec, dist, ctx.budget())?;
        let grid = grid_from_laws(&[&law]);
        let estimates = mc_tail(&spec, dist, &grid, ctx.settings.mc_trials, derive_seed(inst.seed, "mc", 0))?;
        Ok(Detail::MonteCarlo {
            exact: grid.iter().map(|&t| law.tail(t)).collect(),
            estimates,
        })
    };
    match run() {
        Ok(d) => base.with(Status::Recorded, d),
        Err(e) => base.failed(&e),
    }
}

fn run_coupling_law(ctx: &Ctx, id: &str, spec: &DistributionSpec, n: usize, l_max: usize) -> Vec<CheckResult> {
    let dist = match spec.build() {
        Ok(d) => d,
        Err(e) => return vec![CheckResult::new(CheckName::CouplingLaw, id, spec.label()).failed(&e)],
    };
    let mut couplings = vec![Coupling::Sign];
    couplings.extend((1..=l_max).map(|l| Coupling::Selector { l }));
    couplings
        .into_iter()
        .map(|c| {
            let (label, l) = match c {
                Coupling::Sign => ("sign".to_string(), None),
                Coupling::Selector { l } => (format!("selector(l={l})"), Some(l)),
            };
            let mut base = CheckResult::new(CheckName::CouplingLaw, id, format!("{} n={n} {label}", spec.label()));
            base.n = Some(n);
            base.l = l;
            match coupling_law_identity(&dist, n, c, ctx.tol(), ctx.settings.coupling_cap) {
                Ok(Some(o)) => base.with(Status::from_bool(o.holds), Detail::Identity(o)),
                Ok(None) => base.with(Status::Skipped, Detail::None).noted("more outcomes than the coupling-law cap"),
                Err(e) => base.failed(&e),
            }
        })
        .collect()
}

fn run_law(ctx: &Ctx, check: CheckName, idx: usize) -> CheckResult {
    let seed = derive_seed(ctx.settings.seed, check.as_str(), idx as u64);
    let id = format!("law-{idx:03}");
    match check {
        CheckName::Lemma1 => {
            let dim = 1 + idx % 2;
            let base = CheckResult::new(check, id, format!("random law on R^{dim}"));
            inequality_result(base, random_law(dim, seed).and_then(|x| verify_lemma1(&x, ctx.norm(), ctx.budget())))
        }
        _ => {
            let base = CheckResult::new(check, id, "random mean-zero law on R");
            let run = || -> Result<Detail> {
                let y = random_mean_zero_law(1, seed)?;
                let mut rng = stream_rng(seed, 3);
                let mut rows: Vec<ThresholdRow> = Vec::new();
                let mut kappa = None;
                for j in 0..ctx.corpus.prop1_shifts {
                    let a = if j == 0 { 0.0 } else { rng.random_range(-4.0..4.0) };
                    let (rep, k) = verify_prop1(&NormedValue::scalar(a), &y, ctx.norm(), ctx.settings.tolerances.kappa_grid)?;
                    rows.extend(rep.rows);
                    kappa = Some(k);
                }
                let kappa = kappa.ok_or_else(|| Error::invalid("no shifts configured"))?;
                let report = InequalityReport::new("prop1", format!("{}-atom law", y.len()), Relation::AtLeast, rows);
                Ok(Detail::Anticoncentration { kappa, report })
            };
            match run() {
                Ok(d @ Detail::Anticoncentration { .. }) => {
                    let pass = matches!(&d, Detail::Anticoncentration { report, .. } if report.pass);
                    base.with(Status::from_bool(pass), d)
                }
                Ok(_) => unreachable!(),
                Err(e) => base.failed(&e),
            }
        }
    }
}

/// Parameters of chaos instance `idx` of a suite.
fn chaos_instance(suite: &ChaosSuite, check: CheckName, idx: usize, seed: u64) -> Result<Chaos> {
    let degree = 1 + idx % suite.max_degree.max(1);
    let round = idx / suite.max_degree.max(1);
    match check {
        CheckName::Lemma2 => {
            let n = degree + round % (suite.max_n.saturating_sub(degree) + 1);
            let dim = 1 + round % 2;
            Chaos::random(n, degree, dim, ChaosVariables::Rademacher, suite.density, true, seed)
        }
        _ => {
            let variables = match round % 3 {
                0 => ChaosVariables::Rademacher,
                1 => ChaosVariables::CenteredSelector { l: 2 + round % 2 },
                _ => ChaosVariables::Selector { l: 2 + round % 2 },
            };
            let max_n = match variables {
                ChaosVariables::Rademacher => suite.max_n,
                _ => suite.max_n.min(6),
            };
            let n = (degree + round % (max_n.saturating_sub(degree) + 1)).max(degree);
            Chaos::random(n, degree, 1, variables, suite.density, true, seed)
        }
    }
}

fn run_chaos(ctx: &Ctx, check: CheckName, idx: usize) -> CheckResult {
    let seed = derive_seed(ctx.settings.seed, check.as_str(), idx as u64);
    let suite = if check == CheckName::Lemma2 { &ctx.corpus.lemma2 } else { &ctx.corpus.moments };
    let id = format!("chaos-{idx:03}");
    let chaos = match chaos_instance(suite, check, idx, seed) {
        Ok(c) => c,
        Err(e) => return CheckResult::new(check, id, "chaos").failed(&e),
    };
    let base = CheckResult::new(check, id, chaos.describe()).sized(chaos.n, chaos.degree(), match chaos.variables {
        ChaosVariables::Rademacher => None,
        ChaosVariables::Selector { l } | ChaosVariables::CenteredSelector { l } => Some(l),
    });
    if check == CheckName::Lemma2 {
        return inequality_result(base, verify_lemma2(&chaos, ctx.norm(), ctx.budget()).map(|(_, r)| r));
    }
    match verify_moment_comparison(&chaos, ctx.settings.tolerances.moment_bound.map(|b| b.powi(chaos.degree() as i32)), ctx.budget()) {
        Ok(r) if r.rows.is_empty() => {
            let note = r.note.clone().unwrap_or_default();
            base.with(Status::Skipped, Detail::Inequality(r)).noted(note)
        }
        other => inequality_result(base, other),
    }
}

fn build_jobs<'a>(corpus: &CorpusSpec, settings: &RunSettings, insts: &'a [Instance]) -> Vec<Job<'a>> {
    let mut jobs = Vec::new();
    for &check in &CheckName::ALL {
        if !settings.checks.contains(&check) {
            continue;
        }
        match check {
            CheckName::MazurOrlicz => {
                jobs.push(Job::Coefficients);
                jobs.extend(insts.iter().map(|i| Job::Instance(check, i)));
            }
            CheckName::CouplingLaw => {
                let mut seen: Vec<(DistributionSpec, usize)> = Vec::new();
                for fam in &corpus.families {
                    for d in &fam.distributions {
                        for s in &fam.sizes {
                            if !seen.iter().any(|(sd, sn)| sd == d && *sn == s.n) {
                                seen.push((d.clone(), s.n));
                                jobs.push(Job::CouplingLaw {
                                    id: format!("law-{}-n{}", d.label(), s.n),
                                    dist: d.clone(),
                                    n: s.n,
                                    l_max: fam.l_max,
                                });
                            }
                        }
                    }
                }
            }
            CheckName::Lemma1 => {
                jobs.extend((0..corpus.random_laws).map(|i| Job::Law(check, i)));
                jobs.extend(insts.iter().map(|i| Job::Instance(check, i)));
            }
            CheckName::Prop1 => {
                if corpus.prop1_shifts > 0 {
                    jobs.extend((0..corpus.random_laws).map(|i| Job::Law(check, i)));
                }
            }
            CheckName::Lemma2 => jobs.extend((0..corpus.lemma2.instances).map(|i| Job::Chaos(check, i))),
            CheckName::Moments => jobs.extend((0..corpus.moments.instances).map(|i| Job::Chaos(check, i))),
            CheckName::McTail => jobs.extend(insts.iter().take(corpus.mc_instances).map(|i| Job::Instance(check, i))),
            _ => jobs.extend(insts.iter().map(|i| Job::Instance(check, i))),
        }
    }
    jobs
}

fn job_check(job: &Job) -> CheckName {
    match job {
        Job::Coefficients => CheckName::MazurOrlicz,
        Job::Instance(c, _) | Job::Law(c, _) | Job::Chaos(c, _) => *c,
        Job::CouplingLaw { .. } => CheckName::CouplingLaw,
    }
}

/// Monte Carlo coverage over all `(instance, t)` pairs, as one verdict.
fn mc_aggregate(results: &[CheckResult], required: f64) -> Option<(CheckResult, f64)> {
    let mut covered = 0usize;
    let mut total = 0usize;
    let mut any = false;
    for r in results {
        if let Detail::MonteCarlo { exact, estimates } = &r.detail {
            any = true;
            for (p, e) in exact.iter().zip(estimates) {
                total += 1;
                covered += usize::from(e.covers(*p));
            }
        }
    }
    if !any {
        return None;
    }
    let coverage = if total == 0 { 1.0 } else { covered as f64 / total as f64 };
    let row = ThresholdRow::probability(None, coverage, required, Relation::AtLeast);
    let report = InequalityReport::new("mc-coverage", format!("{covered} of {total} intervals cover the exact tail"), Relation::AtLeast, vec![row]);
    let status = Status::from_bool(report.pass);
    let result = CheckResult::new(CheckName::McTail, "aggregate", "99% interval coverage of exact tails").with(status, Detail::Inequality(report));
    Some((result, coverage))
}

fn empirical_constants(results: &[CheckResult]) -> Vec<EmpiricalConstant> {
    // (quantity, k) -> (value, instance, count), max unless the quantity is a probability
    let mut acc: BTreeMap<(String, usize), (f64, String, usize)> = BTreeMap::new();
    let mut push = |q: String, k: usize, v: f64, id: &str, take_max: bool| {
        let e = acc.entry((q, k)).or_insert((v, id.to_string(), 0));
        e.2 += 1;
        if (take_max && v > e.0) || (!take_max && v < e.0) {
            e.0 = v;
            e.1 = id.to_string();
        }
    };
    for r in results.iter().filter(|r| r.status == Status::Pass) {
        let Some(k) = r.k else { continue };
        match &r.detail {
            Detail::Constant(c) => {
                let q = match c.direction {
                    Direction::Upper => "theorem1-upper c_min".to_string(),
                    Direction::Lower => "theorem1-lower c_min".to_string(),
                    Direction::Lemma3 { l } => format!("lemma3 c_min (l={l})"),
                };
                push(q, k, c.c_min, &r.instance_id, true);
            }
            Detail::Inequality(rep) if r.check == CheckName::Lemma2 => {
                push("lemma2 min probability".into(), k, rep.rows[0].lhs, &r.instance_id, false);
            }
            Detail::Inequality(rep) if r.check == CheckName::Moments && !rep.rows.is_empty() => {
                let kind = if r.l.is_some() { "selector" } else { "rademacher" };
                push(format!("moments max L4/L2 ratio ({kind})"), k, rep.rows[0].lhs, &r.instance_id, true);
            }
            _ => {}
        }
    }
    acc.into_iter()
        .map(|((quantity, k), (value, instance_id, instances))| EmpiricalConstant {
            quantity,
            k,
            value,
            instance_id,
            instances,
        })
        .collect()
}

fn summarize(results: &[CheckResult], mc_coverage: Option<f64>) -> CorpusSummary {
    let mut by_check: BTreeMap<CheckName, CheckSummary> = BTreeMap::new();
    let mut failures = Vec::new();
    for r in results {
        let s = by_check.entry(r.check).or_insert_with(|| CheckSummary {
            check: Some(r.check),
            ..CheckSummary::default()
        });
        s.add(r.status);
        if r.status.is_failure() {
            failures.push(format!("{} {}", r.check, r.instance_id));
        }
    }
    let budget_exceeded = results.iter().any(|r| r.status == Status::Budget);
    CorpusSummary {
        checks: by_check.into_values().collect(),
        empirical_constants: empirical_constants(results),
        mc_coverage,
        all_pass: failures.is_empty(),
        failures,
        budget_exceeded,
    }
}

/// Runs every selected check over the corpus. Instance failures are recorded
/// in the report, never returned as errors. Output order depends only on the
/// inputs.
pub fn run_corpus(corpus: &CorpusSpec, settings: &RunSettings) -> CorpusReport {
    let insts = instances(corpus, settings.seed);
    let ctx = Ctx { corpus, settings };
    let jobs = build_jobs(corpus, settings, &insts);
    let outputs: Vec<(CheckName, Vec<CheckResult>, f64)> = jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let out = match job {
                Job::Coefficients => vec![coefficient_check()],
                Job::Instance(check, inst) => run_instance(&ctx, *check, inst),
                Job::CouplingLaw { id, dist, n, l_max } => run_coupling_law(&ctx, id, dist, *n, *l_max),
                Job::Law(check, idx) => vec![run_law(&ctx, *check, *idx)],
                Job::Chaos(check, idx) => vec![run_chaos(&ctx, *check, *idx)],
            };
            (job_check(job), out, start.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let mut timings_ms: BTreeMap<String, f64> = BTreeMap::new();
    let mut results = Vec::new();
    for (check, out, ms) in outputs {
        *timings_ms.entry(check.to_string()).or_insert(0.0) += ms;
        results.extend(out);
    }
    let mut mc_coverage = None;
    if let Some((agg, cov)) = mc_aggregate(&results, settings.tolerances.mc_coverage) {
        results.push(agg);
        mc_coverage = Some(cov);
    }
    let summary = summarize(&results, mc_coverage);
    CorpusReport {
        instances: insts,
        results,
        summary,
        timings_ms,
    }
}
