use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vonneumann_hierarchy::scenario::{load_scenario, prepare, write_outcome, Manifest, Scenario, TaskResult};
use vonneumann_hierarchy::verify::{run_suite, Report, SuiteContext, DEFAULT_SEED, SUITES};
use vonneumann_hierarchy::Error;

const EXIT_CONTRACT: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_CAPACITY: u8 = 3;

#[derive(Parser)]
#[command(name = "vnh", version, about = "Quantum many-particle hierarchies: scenario runner and property suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks of a scenario file and write one result file per task.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; overrides the scenario's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the computation.
        #[arg(long)]
        threads: Option<usize>,
        /// Replaces every preset seed and the verify seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one property suite and print its report as JSON.
    Verify {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suite: String,
        /// Multiplies every scalable tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Print the JSON schemas of scenarios and result files.
    Schema {
        #[arg(long)]
        print: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Capacity { .. } => EXIT_CAPACITY,
        Error::Schema(_) => EXIT_SCHEMA,
        _ => EXIT_CONTRACT,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(text: &str) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e),
        _ => Ok(()),
    }
}

fn print_failures(r: &Report) {
    for c in r.failures() {
        let residual = c.residual.map_or("n/a".to_string(), |v| format!("{v:e}"));
        let detail = c.detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default();
        eprintln!("FAIL {}/{}: residual {residual} vs {:?} {:e}{detail}", r.suite, c.name, c.relation, c.tolerance);
    }
}

fn run(scenario: &Path, out: Option<&Path>, threads: Option<usize>, seed: Option<u64>) -> Result<bool, Error> {
    let prepared = prepare(load_scenario(scenario)?, seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Schema("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Numerical(e.to_string()))?;
    let outcome = pool.install(|| prepared.run())?;
    let dir = prepared.output_dir(out);
    write_outcome(&outcome, &dir, prepared.scenario.output.format)?;
    for r in outcome.reports() {
        print_failures(r);
    }
    let status = if outcome.pass() { "pass" } else { "FAIL" };
    emit(&format!("{status}: {} files in {}", outcome.manifest.files.len(), dir.display()))?;
    Ok(outcome.pass())
}

fn schemas() -> serde_json::Value {
    serde_json::json!({
        "scenario": schemars::schema_for!(Scenario),
        "task_result": schemars::schema_for!(TaskResult),
        "verify_report": schemars::schema_for!(Report),
        "manifest": schemars::schema_for!(Manifest),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out, threads, seed } => match run(&scenario, out.as_deref(), threads, seed) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_CONTRACT),
            Err(e) => fail(e),
        },
        Command::Verify { suite, tol_scale, seed } => {
            if !tol_scale.is_finite() || tol_scale <= 0.0 {
                return fail(Error::Schema(format!("--tol-scale must be positive, got {tol_scale}")));
            }
            let ctx = SuiteContext { tol_scale, seed, ..Default::default() };
            match run_suite(&suite, &ctx) {
                Ok(report) => {
                    if let Err(e) = serde_json::to_string_pretty(&report).map_err(Error::from).and_then(|t| Ok(emit(&t)?)) {
                        return fail(e);
                    }
                    print_failures(&report);
                    if report.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_CONTRACT)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Schema { print } => {
            if !print {
                return fail(Error::Schema("nothing to do; pass --print".into()));
            }
            match serde_json::to_string_pretty(&schemas()).map_err(Error::from).and_then(|t| Ok(emit(&t)?)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}
