//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! nonzero if any fails. Run with `cargo test --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use ustat_decoupling::kernel::{all_words, mazur_orlicz_coefficient, KernelClass};
use ustat_decoupling::prob::{exact_law, grid_from_laws, kappa, mc_tail, Mode, StatisticSpec};
use ustat_decoupling::randomization::Coupling;
use ustat_decoupling::value_space::{EnumerationBudget, Norm, NormedValue};
use ustat_decoupling::verifier::{
    coupling_law_identity, expansion_identity, mazur_orlicz_identity, random_law, random_mean_zero_law,
    rademacher_moment_bound, run_corpus, search_constant, selector_conditional_identity,
    sign_conditional_identity, verify_lemma1, verify_lemma2, verify_moment_comparison, verify_prop1, Chaos,
    ChaosVariables, CheckName, CorpusSpec, Detail, Direction, RunSettings, SearchSettings, Status, BRACKET_TOP,
};
use ustat_decoupling::{Distribution, Kernel};

const TOL: f64 = 1e-12;
const NORM: Norm = Norm::Euclidean;

type Verdict = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Verdict);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn budget() -> EnumerationBudget {
    EnumerationBudget::default()
}

/// Random kernels for the identity criteria: k in {2, 3}, n in 3..=6, two
/// atom laws, symmetric and asymmetric coefficients.
fn identity_corpus() -> Vec<(Kernel, Distribution, usize, u64)> {
    let rad = Distribution::rademacher();
    let u3 = Distribution::uniform(3).unwrap();
    let mut out = Vec::new();
    let mut seed = 0u64;
    for k in [2, 3] {
        for n in 3..=6 {
            for dist in [&rad, &u3] {
                for symmetric in [true, false] {
                    for _ in 0..2 {
                        seed += 1;
                        out.push((Kernel::random_coefficient(k, n, 1, seed, symmetric).unwrap(), dist.clone(), n, seed));
                    }
                }
            }
        }
    }
    out
}

fn c1_expansion() -> Verdict {
    let corpus = identity_corpus();
    let mut worst = 0.0f64;
    let mut comparisons = 0;
    for (kf, dist, n, seed) in &corpus {
        let o = expansion_identity(kf, dist, *n, *seed, NORM, TOL, budget()).map_err(err)?;
        ensure(o.holds, || format!("{} n={n} seed={seed}: residual {:e}", kf.name(), o.max_residual))?;
        worst = worst.max(o.max_residual);
        comparisons += o.comparisons;
    }
    ensure(corpus.len() >= 50, || format!("only {} instances", corpus.len()))?;
    Ok(format!("{} instances, {comparisons} comparisons, max residual {worst:e}", corpus.len()))
}

fn c2_conditional() -> Verdict {
    let corpus = identity_corpus();
    let mut worst = 0.0f64;
    for (kf, dist, n, seed) in &corpus {
        let o = sign_conditional_identity(kf, dist, *n, *seed, NORM, TOL, budget()).map_err(err)?;
        ensure(o.holds, || format!("sign {} n={n}: residual {:e}", kf.name(), o.max_residual))?;
        worst = worst.max(o.max_residual);
        for l in 1..=3 {
            let o = selector_conditional_identity(kf, dist, *n, l, *seed, NORM, TOL, budget()).map_err(err)?;
            ensure(o.holds, || format!("selector l={l} {} n={n}: residual {:e}", kf.name(), o.max_residual))?;
            worst = worst.max(o.max_residual);
        }
    }
    Ok(format!("{} instances, l in 1..=3, max residual {worst:e}", corpus.len()))
}

/// Sum over column subsets containing every column the word uses, with sign
/// `(-1)^(k - |subset|)`.
fn inclusion_exclusion_coefficient(word: &[usize]) -> i64 {
    let k = word.len();
    let used: u32 = word.iter().fold(0, |m, &c| m | (1 << c));
    (0u32..(1 << k))
        .filter(|s| s & used == used)
        .map(|s| if (k as u32 - s.count_ones()).is_multiple_of(2) { 1 } else { -1 })
        .sum()
}

fn c3_mazur_orlicz() -> Verdict {
    let mut words = 0;
    for k in 1..=6 {
        for w in all_words(k, k) {
            words += 1;
            let expected = inclusion_exclusion_coefficient(&w);
            let got = mazur_orlicz_coefficient(&w).map_err(err)?;
            ensure(got == expected, || format!("word {w:?}: got {got}, expected {expected}"))?;
        }
    }
    let u3 = Distribution::uniform(3).unwrap();
    let mut worst = 0.0f64;
    let mut instances = 0;
    for k in 2..=4 {
        for n in k..=6 {
            for seed in 0..3 {
                let kf = Kernel::random_coefficient(k, n, 1, seed, true).unwrap();
                let o = mazur_orlicz_identity(&kf, &u3, n, seed, NORM, TOL, true).map_err(err)?;
                ensure(o.holds, || format!("k={k} n={n} seed={seed}: residual {:e}", o.max_residual))?;
                worst = worst.max(o.max_residual);
                instances += 1;
            }
        }
    }
    Ok(format!("{words} words (k <= 6), {instances} symmetric instances (k <= 4), max residual {worst:e}"))
}

fn c4_coupling_law() -> Verdict {
    let cap = 1u64 << 20;
    let dists = [
        ("rademacher", Distribution::rademacher()),
        ("uniform(3)", Distribution::uniform(3).unwrap()),
        ("skewed", Distribution::from_scalars(&[(-1.0, 0.25), (0.5, 0.5), (3.0, 0.25)]).unwrap()),
    ];
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (name, dist) in &dists {
        for n in 1..=6 {
            for coupling in [Coupling::Sign, Coupling::Selector { l: 1 }, Coupling::Selector { l: 2 }, Coupling::Selector { l: 3 }] {
                if let Some(o) = coupling_law_identity(dist, n, coupling, TOL, cap).map_err(err)? {
                    ensure(o.holds, || format!("{name} n={n} {coupling:?}: tv {:e}", o.max_residual))?;
                    worst = worst.max(o.max_residual);
                    checked += 1;
                }
            }
        }
    }
    ensure(checked >= 20, || format!("only {checked} instances fit the cap"))?;
    Ok(format!("{checked} instances within 2^20 outcomes, max total variation {worst:e}"))
}

fn c5_lemma1() -> Verdict {
    let mut rows = 0;
    for i in 0..100u64 {
        let dim = 1 + (i % 2) as usize;
        let x = random_law(dim, 1000 + i).map_err(err)?;
        let r = verify_lemma1(&x, NORM, budget()).map_err(err)?;
        ensure(r.pass, || format!("law {i} (dim {dim}) fails: {:?}", r.rows.iter().find(|x| !x.holds)))?;
        rows += r.rows.len();
    }
    Ok(format!("100 laws (1-D and 2-D), {rows} thresholds, zero failures"))
}

fn c6_prop1() -> Verdict {
    let rad = Distribution::rademacher();
    let k = kappa(&rad, NORM, 1024).map_err(err)?;
    ensure(k.exact && k.value == 1.0, || format!("kappa(rademacher) = {} (exact: {})", k.value, k.exact))?;
    let mut checks = 0;
    for i in 0..100u64 {
        let y = random_mean_zero_law(1, 2000 + i).map_err(err)?;
        for j in 0..20 {
            let a = if j == 0 { 0.0 } else { (j as f64 - 10.0) * 0.37 + i as f64 * 1e-3 };
            let (r, kp) = verify_prop1(&NormedValue::scalar(a), &y, NORM, 1024).map_err(err)?;
            ensure(kp.exact, || "1-D kappa must be exact".into())?;
            ensure(r.pass, || format!("law {i}, a = {a}: {:?}", r.rows))?;
            checks += 1;
        }
    }
    Ok(format!("kappa(rademacher) = 1 exactly, {checks} (law, a) pairs pass"))
}

fn c7_lemma2() -> Verdict {
    let mut min_p = f64::INFINITY;
    let mut instances = 0;
    for degree in 1..=3 {
        for n in degree..=12 {
            for (dim, seed) in [(1, 0u64), (2, 1)] {
                let chaos = Chaos::random(n, degree, dim, ChaosVariables::Rademacher, 0.5, seed == 0, 77 * n as u64 + seed)
                    .map_err(err)?;
                let (p, r) = verify_lemma2(&chaos, NORM, budget()).map_err(err)?;
                ensure(r.pass && p > 0.0, || format!("{}: probability {p}", chaos.describe()))?;
                min_p = min_p.min(p);
                instances += 1;
            }
        }
        let signs = Chaos::sum_of_signs(12).map_err(err)?;
        let (p, _) = verify_lemma2(&signs, NORM, budget()).map_err(err)?;
        ensure(p > 0.0, || "sum of signs".into())?;
        min_p = min_p.min(p);
        instances += 1;
    }
    Ok(format!("{instances} chaoses (degree <= 3, n <= 12), corpus min probability {min_p}"))
}

fn c8_moments() -> Verdict {
    let mut instances = 0;
    let mut worst_ratio_over_bound = 0.0f64;
    for degree in 1..=3 {
        for n in degree..=10 {
            for seed in 0..2u64 {
                let chaos = Chaos::random(n, degree, 1, ChaosVariables::Rademacher, 0.6, false, 31 * n as u64 + seed)
                    .map_err(err)?;
                if chaos.terms.is_empty() {
                    continue;
                }
                let d = chaos.degree();
                let r = verify_moment_comparison(&chaos, None, budget()).map_err(err)?;
                ensure(r.pass, || format!("{}: {:?}", chaos.describe(), r.rows))?;
                let ratio = r.rows[0].lhs;
                ensure(r.rows[0].rhs == rademacher_moment_bound(d), || "bound is not 3^(k/2)".into())?;
                ensure(ratio <= 3f64.powf(d as f64 / 2.0), || format!("ratio {ratio}"))?;
                ensure(r.rows.len() == 2 && r.rows[1].holds, || "implication row missing or failing".into())?;
                worst_ratio_over_bound = worst_ratio_over_bound.max(ratio / r.rows[0].rhs);
                instances += 1;
            }
        }
    }
    for l in [2, 3] {
        for degree in 1..=2 {
            for n in degree..=5 {
                let chaos = Chaos::random(n, degree, 1, ChaosVariables::CenteredSelector { l }, 0.6, false, 5 * n as u64 + l as u64)
                    .map_err(err)?;
                let r = verify_moment_comparison(&chaos, None, budget()).map_err(err)?;
                ensure(r.pass, || format!("{}: {:?}", chaos.describe(), r.rows))?;
                instances += 1;
            }
        }
    }
    Ok(format!("{instances} chaoses, worst ratio / bound {worst_ratio_over_bound:.4}"))
}

fn theorem_corpus(checks: Vec<CheckName>) -> ustat_decoupling::verifier::CorpusReport {
    let corpus = CorpusSpec {
        random_laws: 0,
        mc_instances: 0,
        ..CorpusSpec::default()
    };
    run_corpus(&corpus, &RunSettings { checks, ..RunSettings::default() })
}

fn c9_theorem1() -> Verdict {
    let kf = Kernel::product(2, 2, 1).map_err(err)?;
    let rad = Distribution::rademacher();
    let r = search_constant(&kf, &rad, 2, Direction::Upper, NORM, &SearchSettings::default()).map_err(err)?;
    ensure((r.c_min - 2.0).abs() <= 1e-3, || format!("xy upper c_min = {}", r.c_min))?;
    let report = theorem_corpus(vec![CheckName::Theorem1Upper, CheckName::Theorem1Lower]);
    let mut searched = 0;
    for res in &report.results {
        let inst = report.instances.iter().find(|i| res.instance_id.starts_with(&i.id)).unwrap();
        ensure(inst.k <= 3 && inst.n <= 5, || format!("{} out of range", inst.id))?;
        let symmetric = inst.kernel.is_symmetric(inst.k);
        match (res.check, res.status, &res.detail) {
            (_, Status::Pass, Detail::Constant(c)) => {
                ensure(c.feasible && c.c_min < BRACKET_TOP, || format!("{}: c_min {}", inst.id, c.c_min))?;
                ensure(res.check == CheckName::Theorem1Upper || symmetric, || format!("{} lower on asymmetric kernel", inst.id))?;
                searched += 1;
            }
            (CheckName::Theorem1Lower, Status::Rejected | Status::Recorded, _) if !symmetric => {}
            _ => return Err(format!("{} {}: {:?} {:?}", res.check, res.instance_id, res.status, res.note)),
        }
    }
    Ok(format!("xy instance c_min = {}, {searched} feasible searches below 2^20", r.c_min))
}

fn c10_lemma3() -> Verdict {
    let report = theorem_corpus(vec![CheckName::Lemma3]);
    let mut checked = 0;
    for inst in report.instances.iter().filter(|i| i.kernel.is_symmetric(i.k)) {
        for l in 1..=inst.k {
            let res = report
                .results
                .iter()
                .find(|r| r.instance_id == inst.id && r.l == Some(l))
                .ok_or_else(|| format!("{} l={l} missing", inst.id))?;
            let ok = matches!(&res.detail, Detail::Constant(c) if c.feasible && c.c_min < BRACKET_TOP);
            ensure(res.status == Status::Pass && ok, || format!("{} l={l}: {:?}", inst.id, res.status))?;
            checked += 1;
        }
    }
    ensure(checked > 0, || "no symmetric instances".into())?;
    Ok(format!("{checked} (instance, l) pairs pass"))
}

fn c11_monte_carlo() -> Verdict {
    let classes = [
        KernelClass::Product,
        KernelClass::RandomSymmetric,
        KernelClass::RandomAsymmetric,
        KernelClass::Affine { shift: 1.0 },
        KernelClass::ProductAndSum,
    ];
    let sizes = [(2, 2), (3, 2), (4, 2), (3, 3), (4, 3)];
    let dists = [Distribution::rademacher(), Distribution::uniform(3).unwrap()];
    let mut covered = 0;
    let mut total = 0;
    let mut instances = 0;
    for i in 0..100usize {
        let class = &classes[i % classes.len()];
        let (n, k) = sizes[(i / classes.len()) % sizes.len()];
        let dist = &dists[(i / (classes.len() * sizes.len())) % dists.len()];
        let kf = class.build::<f64>(k, n, dist.dim(), i as u64).map_err(err)?;
        let spec = StatisticSpec::new(kf, n, Mode::Coupled, NORM).map_err(err)?;
        let law = exact_law(&spec, dist, budget()).map_err(err)?;
        let grid = grid_from_laws(&[&law]);
        let est = mc_tail(&spec, dist, &grid, 100_000, 9000 + i as u64).map_err(err)?;
        for e in &est {
            total += 1;
            covered += usize::from(e.covers(law.tail(e.t)));
        }
        instances += 1;
    }
    let rate = covered as f64 / total as f64;
    ensure(rate >= 0.95, || format!("coverage {covered}/{total} = {rate:.4}"))?;
    Ok(format!("{instances} instances, 10^5 trials, coverage {covered}/{total} = {rate:.4}"))
}

fn numerical_sections(path: &std::path::Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(err)?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    v.as_object_mut().ok_or("report is not an object")?.remove("meta");
    Ok(v)
}

fn c12_cli() -> Verdict {
    let dir = std::env::temp_dir().join(format!("udecouple-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    let out = dir.join("report.json");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let status = Command::new(env!("CARGO_BIN_EXE_udecouple"))
            .args(["verify", "--seed", "0", "--out"])
            .arg(&out)
            .stderr(std::process::Stdio::null())
            .status()
            .map_err(err)?;
        ensure(status.code() == Some(0), || format!("default campaign exited with {status}"))?;
        runs.push(numerical_sections(&out)?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    let a = serde_json::to_string(&runs[0]).map_err(err)?;
    let b = serde_json::to_string(&runs[1]).map_err(err)?;
    ensure(a == b, || "numerical sections differ between runs".into())?;
    Ok(format!("default campaign exits 0 twice, {} identical bytes", a.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("exact expansion identity", 60, c1_expansion),
        ("conditional-expectation identities", 60, c2_conditional),
        ("inclusion-exclusion coefficients and symmetrized expansion", 30, c3_mazur_orlicz),
        ("distributional equality of both couplings", 30, c4_coupling_law),
        ("symmetrization tail bound", 30, c5_lemma1),
        ("anticoncentration in 1-D", 10, c6_prop1),
        ("chaos anticoncentration", 60, c7_lemma2),
        ("moment comparison", 30, c8_moments),
        ("decoupling constant search", 120, c9_theorem1),
        ("mixed-sum constant", 60, c10_lemma3),
        ("Monte Carlo interval coverage", 120, c11_monte_carlo),
        ("CLI determinism", 120, c12_cli),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let verdict = match verdict {
            Ok(msg) if elapsed > Duration::from_secs(*limit) => Err(format!("{msg}; runtime over {limit} s")),
            v => v,
        };
        let (tag, msg) = match &verdict {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        failed += usize::from(verdict.is_err());
        println!("criterion {:>2} {tag} {name} ({:.2} s): {msg}", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of 12 criteria pass", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
