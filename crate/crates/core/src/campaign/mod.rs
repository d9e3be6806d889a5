//! Campaign driver behind the `udecouple` binary: config parsing, running the
//! corpus, and writing the JSON report and the CSV table.

mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{from_json_with_path, parse_config, Budgets, OutputSpec, RunConfig};

use crate::error::{Error, Result};
use crate::kernel::KernelClass;
use crate::prob::{exact_law, Mode, NormLaw, StatisticSpec};
use crate::value_space::{EnumerationBudget, Norm};
use crate::verifier::{run_corpus, CheckResult, CorpusSummary, Detail, DistributionSpec, Status};

/// Bumped whenever the report layout changes.
pub const FORMAT_VERSION: u32 = 1;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "UDECOUPLE_THREADS";

pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const RESOURCE: i32 = 3;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub format_version: u32,
    pub total_ms: f64,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Everything a run produced. Only `meta` varies between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub results: Vec<CheckResult>,
    pub summary: CorpusSummary,
    pub meta: Meta,
}

impl RunReport {
    /// 0 when every verdict passed, 1 on any failure, 3 when a budget cut
    /// a check short and nothing failed.
    pub fn exit_code(&self) -> i32 {
        if !self.summary.all_pass {
            exit::CHECK_FAILED
        } else if self.summary.budget_exceeded {
            exit::RESOURCE
        } else {
            exit::OK
        }
    }

    /// The report as JSON with `meta` removed.
    pub fn numerical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::Io(e.to_string()))?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("meta");
        }
        serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    /// One row per check per threshold.
    pub fn table_rows(&self) -> Vec<TableRow> {
        self.results.iter().flat_map(table_rows).collect()
    }

    pub fn write_table<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.table_rows() {
            out.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Flat export row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub check: String,
    pub instance_id: String,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub t: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub constant: Option<f64>,
    pub holds: Option<bool>,
}

fn table_rows(r: &CheckResult) -> Vec<TableRow> {
    let row = |t, lhs, rhs, constant, holds| TableRow {
        check: r.check.to_string(),
        instance_id: r.instance_id.clone(),
        n: r.n,
        k: r.k,
        l: r.l,
        t,
        lhs,
        rhs,
        constant,
        holds,
    };
    let verdict = match r.status {
        Status::Pass => Some(true),
        Status::Fail => Some(false),
        _ => None,
    };
    match &r.detail {
        Detail::Identity(o) => vec![row(None, Some(o.max_residual), Some(o.tolerance), None, Some(o.holds))],
        Detail::Inequality(rep) => rep
            .rows
            .iter()
            .map(|x| row(x.t, Some(x.lhs), Some(x.rhs), None, Some(x.holds)))
            .collect(),
        Detail::Anticoncentration { kappa, report } => report
            .rows
            .iter()
            .map(|x| row(x.t, Some(x.lhs), Some(x.rhs), Some(kappa.value), Some(x.holds)))
            .collect(),
        Detail::Constant(c) => c
            .t_grid
            .iter()
            .zip(&c.slack)
            .map(|(&t, &s)| row(Some(t), None, Some(s), Some(c.c_min), Some(s >= -crate::verifier::PROB_TOLERANCE)))
            .collect(),
        Detail::MonteCarlo { exact, estimates } => exact
            .iter()
            .zip(estimates)
            .map(|(&p, e)| row(Some(e.t), Some(e.p_hat), Some(p), None, Some(e.covers(p))))
            .collect(),
        Detail::None => vec![row(None, None, None, None, verdict)],
    }
}

/// Runs the configured campaign.
pub fn run(config: &RunConfig) -> RunReport {
    let start = Instant::now();
    let report = run_corpus(&config.corpus, &config.settings());
    RunReport {
        config: config.clone(),
        results: report.results,
        summary: report.summary,
        meta: Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            format_version: FORMAT_VERSION,
            total_ms: start.elapsed().as_secs_f64() * 1e3,
            timings_ms: report.timings_ms,
        },
    }
}

/// Sizes the global thread pool from [`THREADS_ENV`] when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Io(e.to_string()))
}

/// Reads a tagged value either as JSON or as a bare tag name.
fn tagged<T: serde::de::DeserializeOwned>(what: &str, tag: &str, text: &str) -> Result<T> {
    let json = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        serde_json::json!({ tag: text }).to_string()
    };
    from_json_with_path(&json).map_err(|e| match e {
        Error::Config { path, message } if path == "." => Error::config(what, message),
        Error::Config { path, message } => Error::config(format!("{what}.{path}"), message),
        other => other,
    })
}

/// One statistic whose exact law the `oracle` subcommand prints.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRequest {
    pub kernel: KernelClass,
    pub distribution: DistributionSpec,
    pub n: usize,
    pub k: usize,
    pub mode: Mode,
    pub norm: Norm,
    pub seed: u64,
    pub budget: EnumerationBudget,
}

impl OracleRequest {
    /// `kernel`, `distribution` and `mode` take JSON or a bare name;
    /// `decoupled` is accepted as a mode.
    #[allow(clippy::too_many_arguments)]
    pub fn parse(
        kernel: &str,
        distribution: &str,
        n: usize,
        k: usize,
        mode: &str,
        norm: &str,
        seed: u64,
        budget: u64,
    ) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::config("k", format!("pair (n = {n}, k = {k}) needs 1 <= k <= n")));
        }
        let mode = if mode == "decoupled" {
            Mode::decoupled(k)
        } else {
            tagged("mode", "mode", mode)?
        };
        let norm: Norm = from_json_with_path(&serde_json::json!(norm).to_string())
            .map_err(|e| Error::config("norm", e.to_string()))?;
        Ok(Self {
            kernel: tagged("kernel", "class", kernel)?,
            distribution: tagged("distribution", "kind", distribution)?,
            n,
            k,
            mode,
            norm,
            seed,
            budget: EnumerationBudget(budget),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub statistic: String,
    pub law: NormLaw,
    pub mean: f64,
}

/// Exact law of one statistic.
pub fn oracle(req: &OracleRequest) -> Result<OracleReport> {
    let dist = req.distribution.build()?;
    let kf = req.kernel.build::<f64>(req.k, req.n, dist.dim(), req.seed)?;
    let spec = StatisticSpec::new(kf, req.n, req.mode.clone(), req.norm)?;
    let law = exact_law(&spec, &dist, req.budget)?;
    Ok(OracleReport {
        statistic: spec.describe(),
        mean: law.support().iter().map(|(v, p)| v * p).sum(),
        law,
    })
}

/// Exit code for an error raised outside the checks themselves.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => exit::CONFIG,
        Error::BudgetExceeded { .. } | Error::Io(_) => exit::RESOURCE,
        _ => exit::CONFIG,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::{CheckName, CorpusSpec};

    #[test]
    fn oracle_xy_coupled() {
        let req = OracleRequest::parse("product", "rademacher", 2, 2, "coupled", "euclidean", 0, 1 << 24).unwrap();
        let r = oracle(&req).unwrap();
        // x1 x2 + x2 x1 over ordered pairs is 2 x1 x2
        assert_eq!(r.law.support(), &[(2.0, 1.0)]);
        let d = oracle(&OracleRequest { mode: Mode::decoupled(2), ..req }).unwrap();
        assert_eq!(d.law.support(), &[(0.0, 0.5), (2.0, 0.5)]);
    }

    #[test]
    fn oracle_parse_errors_are_config_errors() {
        let e = OracleRequest::parse("prodct", "rademacher", 2, 2, "coupled", "euclidean", 0, 1).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path.starts_with("kernel")), "{e}");
        assert_eq!(error_exit_code(&e), exit::CONFIG);
        let e = OracleRequest::parse("product", "rademacher", 2, 3, "coupled", "euclidean", 0, 1).unwrap_err();
        assert!(e.to_string().contains("n = 2, k = 3"));
        let m = OracleRequest::parse("product", r#"{"kind":"uniform","m":3}"#, 3, 2, r#"{"mode":"mixed","l":2}"#, "maximum", 0, 1)
            .unwrap();
        assert_eq!(m.mode, Mode::Mixed { l: 2 });
        assert_eq!(m.norm, Norm::Maximum);
    }

    #[test]
    fn table_has_one_row_per_threshold() {
        let config = RunConfig {
            corpus: CorpusSpec {
                random_laws: 2,
                ..CorpusSpec::empty()
            },
            checks: vec![CheckName::Lemma1],
            ..RunConfig::default()
        };
        let report = run(&config);
        let rows = report.table_rows();
        let expected: usize = report
            .results
            .iter()
            .map(|r| match &r.detail {
                Detail::Inequality(rep) => rep.rows.len(),
                _ => 0,
            })
            .sum();
        assert_eq!(rows.len(), expected);
        let mut buf = Vec::new();
        report.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("check,instance_id,n,k,l,t,lhs,rhs,constant,holds\n"));
        assert_eq!(report.exit_code(), exit::OK);
        let back: RunReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        assert_eq!(back.numerical_json().unwrap(), report.numerical_json().unwrap());
    }
}
