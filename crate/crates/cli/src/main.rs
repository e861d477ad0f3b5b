use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eddy_cli::{run, thread_count, RunConfig, RunError, THREADS_ENV};

#[derive(Parser)]
#[command(
    name = "eddy-feti",
    version,
    about = "Eddy-current A-phi solver with a torn conductor/insulator formulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write the check report.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Report path; stdout when neither this nor the config names one.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for VTK field files.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Worker threads (overrides the EDDY_FETI_THREADS environment variable).
    #[arg(long)]
    threads: Option<usize>,
}

fn solve(args: &SolveArgs) -> Result<u8, RunError> {
    let env = std::env::var(THREADS_ENV).ok();
    if let Some(n) = thread_count(args.threads, env.as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    }
    let config = RunConfig::from_path(&args.config)?;
    let report = run(&config, args.export.as_deref())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match args.report.as_ref().or(config.outputs.report.as_ref()) {
        Some(path) => std::fs::write(path, json + "\n").map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?,
        None => println!("{json}"),
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {} = {:e} (tol {:e})", c.name, c.value, c.tol);
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Solve(args) => solve(args).unwrap_or_else(|e| {
            eprintln!("error: {e}");
            e.exit_code()
        }),
    };
    ExitCode::from(code)
}
