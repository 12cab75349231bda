use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use log::info;

use condenser_core::balayage::BalayageCache;
use condenser_core::config::{RunConfig, SweepParam};
use condenser_core::error::Error;
use condenser_core::pipeline;
use condenser_core::verify::{run_invariant_suite, SuiteOptions, SuiteSize};

const THREADS_VAR: &str = "CONDENSER_LAB_THREADS";

#[derive(Parser)]
#[command(name = "condenser-lab", version, about = "Condenser energy problems on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json, lambda.csv and minus.csv.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of a parameter, as CSV.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Potentials along a segment of a solved report, as CSV.
    Slice {
        report: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        from: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        to: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Property and invariant checks on generated instances; prints the ledger as JSON.
    Suite {
        #[arg(long)]
        seed: u64,
        /// Comma-separated subset of small, medium.
        #[arg(long, value_delimiter = ',', default_value = "small")]
        sizes: Vec<String>,
    },
}

/// Failure classes, mapped onto exit codes.
enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
    Assertions(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Assertions(_) => 3,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

/// Errors raised after the config was accepted are solver failures, unless
/// the pipeline itself rejects a combination of settings.
fn run_err(e: Error) -> Failure {
    match e {
        Error::Config(_) => Failure::Config(e.into()),
        e => Failure::Solver(e.into()),
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).with_context(|| format!("cannot use config {}", path.display())).map_err(config_err)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(config_err)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn set_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| config_err(anyhow!("{THREADS_VAR}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(config_err)
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let prepared = pipeline::prepare(&cfg).map_err(config_err)?;
    let cache = match &cfg.output.cache_dir {
        Some(dir) => BalayageCache::with_dir(dir),
        None => BalayageCache::in_memory(),
    };
    let report = pipeline::execute(&prepared, &cache).map_err(run_err)?;
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    pipeline::write_artifacts(&report, &dir).map_err(|e| Failure::Solver(e.into()))?;
    info!("report written to {}", dir.join("report.json").display());
    eprintln!(
        "objective {:.6e}  w {:.6e}  gap {}  deficit {:.3e}  ({:.2}s)",
        report.objective,
        report.frostman_w,
        report.duality_gap.map_or("-".to_string(), |g| format!("{g:.3e}")),
        report.mass_deficit,
        report.timings.get("total").copied().unwrap_or(0.0)
    );
    let failed = report.failed_assertions();
    if failed.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = failed.iter().map(|a| format!("{}: {} (expected {})", a.name, a.value, a.expected)).collect();
    Err(Failure::Assertions(lines.join("\n")))
}

fn sweep(config: &Path, param: &str, values: &[String], out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let param: SweepParam = param.parse().map_err(config_err)?;
    let values: Vec<f64> = values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| config_err(anyhow!("sweep value `{v}` is not a number"))))
        .collect::<Result<_, _>>()?;
    let rows = pipeline::sweep(&cfg, param, &values).map_err(run_err)?;
    pipeline::write_sweep(&rows, sink(out.as_deref())?).map_err(|e| Failure::Solver(e.into()))
}

fn slice(report: &Path, from: &[f64], to: &[f64], out: Option<PathBuf>) -> Result<(), Failure> {
    let report = pipeline::read_report(report).map_err(config_err)?;
    let rows = pipeline::slice(&report.solution, from, to).map_err(config_err)?;
    pipeline::write_slice(&rows, sink(out.as_deref())?).map_err(|e| Failure::Solver(e.into()))
}

fn suite(seed: u64, sizes: &[String]) -> Result<(), Failure> {
    let sizes: Vec<SuiteSize> = sizes
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| match s.as_str() {
            "small" => Ok(SuiteSize::Small),
            "medium" => Ok(SuiteSize::Medium),
            other => Err(config_err(anyhow!("unknown suite size `{other}` (small, medium)"))),
        })
        .collect::<Result<_, _>>()?;
    let ledger = run_invariant_suite(seed, &sizes, &SuiteOptions::default());
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &ledger).map_err(|e| Failure::Solver(e.into()))?;
    writeln!(stdout).map_err(|e| Failure::Solver(e.into()))?;
    let failed: Vec<String> = ledger.iter().filter(|e| !e.passed).map(|e| format!("{} ({:?}): {}", e.name, e.size, e.detail)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertions(failed.join("\n")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are config errors; exit code 2 is reserved for solver failures.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = set_threads().and_then(|()| match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Sweep { config, param, values, out } => sweep(&config, &param, &values, out),
        Command::Slice { report, from, to, out } => slice(&report, &from, &to, out),
        Command::Suite { seed, sizes } => suite(seed, &sizes),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Solver(e) => eprintln!("solver failure: {e:#}"),
                Failure::Assertions(s) => eprintln!("assertions failed:\n{s}"),
            }
            ExitCode::from(f.code())
        }
    }
}
