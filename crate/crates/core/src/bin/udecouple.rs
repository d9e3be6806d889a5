use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ustat_decoupling::campaign::{self, exit, OracleRequest, RunConfig, RunReport};
use ustat_decoupling::verifier::CheckName;
use ustat_decoupling::{Error, Result};

/// Exact and Monte Carlo checks of tail decoupling inequalities for U-statistics.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full campaign (or the checks picked with --checks).
    Verify(RunArgs),
    /// Run only the exact identity checks.
    Identities(RunArgs),
    /// Run only the constant searches.
    Constants(RunArgs),
    /// Print the exact law of one statistic as JSON.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; overrides the config. `-` writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV table path; overrides the config.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Comma-separated check names.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Enumeration budget per exact computation.
    #[arg(long)]
    budget: Option<u64>,
    /// Monte Carlo trials per instance.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    /// Kernel class name or JSON, e.g. `product` or `{"class":"affine","shift":1}`.
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// `coupled`, `decoupled`, `symmetrized`, `not-all-equal` or JSON such as `{"mode":"mixed","l":2}`.
    #[arg(long, default_value = "coupled")]
    mode: String,
    /// Distribution name or JSON, e.g. `rademacher` or `{"kind":"uniform","m":3}`.
    #[arg(long, default_value = "rademacher")]
    dist: String,
    #[arg(long, default_value = "euclidean")]
    norm: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1 << 24)]
    budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(args: &RunArgs, subset: Option<&[CheckName]>) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
            campaign::parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(b) = args.budget {
        config.budgets.enumeration = b;
    }
    if let Some(t) = args.trials {
        config.budgets.mc_trials = t;
    }
    if let Some(names) = &args.checks {
        config.checks = names
            .iter()
            .map(|s| s.trim().parse().map_err(|_| Error::config("--checks", format!("unknown check `{s}`"))))
            .collect::<Result<_>>()?;
    }
    if let Some(subset) = subset {
        config.checks.retain(|c| subset.contains(c));
    }
    if let Some(out) = &args.out {
        config.output.report = Some(out.clone());
    }
    if let Some(table) = &args.table {
        config.output.table = Some(table.clone());
    }
    config.validate()?;
    Ok(config)
}

fn writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p.as_os_str() != "-" => Box::new(BufWriter::new(File::create(p)?)),
        _ => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_summary(report: &RunReport) {
    for c in &report.summary.checks {
        let name = c.check.map(|c| c.to_string()).unwrap_or_default();
        eprintln!(
            "{name:<22} pass {:>4}  fail {:>3}  error {:>3}  budget {:>3}  rejected {:>3}  skipped {:>3}  recorded {:>4}",
            c.pass, c.fail, c.error, c.budget, c.rejected, c.skipped, c.recorded
        );
    }
    for f in &report.summary.failures {
        eprintln!("FAILED {f}");
    }
}

fn run_campaign(args: &RunArgs, subset: Option<&[CheckName]>) -> Result<i32> {
    let config = load_config(args, subset)?;
    let report = campaign::run(&config);
    report.write_json(writer(config.output.report.as_ref())?)?;
    if let Some(table) = &config.output.table {
        report.write_table(File::create(table)?)?;
    }
    print_summary(&report);
    Ok(report.exit_code())
}

fn run_oracle(args: &OracleArgs) -> Result<i32> {
    let req = OracleRequest::parse(&args.kernel, &args.dist, args.n, args.k, &args.mode, &args.norm, args.seed, args.budget)?;
    let report = campaign::oracle(&req)?;
    let mut w = writer(args.out.as_ref())?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = campaign::configure_threads().and_then(|()| match &cli.command {
        Command::Verify(a) => run_campaign(a, None),
        Command::Identities(a) => run_campaign(a, Some(&CheckName::IDENTITIES)),
        Command::Constants(a) => run_campaign(a, Some(&CheckName::CONSTANTS)),
        Command::Oracle(a) => run_oracle(a),
    });
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(campaign::error_exit_code(&e) as u8)
        }
    }
}
