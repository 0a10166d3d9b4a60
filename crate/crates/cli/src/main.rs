use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oncolab_cli::{catalogue, run_all, run_scenario, Config, RunError};

#[derive(Parser)]
#[command(name = "oncolab", version, about = "Run oncolytic virotherapy scenarios from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, or all of them with --all.
    Run(RunArgs),
    /// List the scenarios in a config file.
    List { config: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(required_unless_present = "all", conflicts_with = "all")]
    scenario: Option<String>,
    #[arg(long)]
    all: bool,
    /// Root directory for per-scenario outputs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for concurrent scenarios and sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for scripts; every computation is deterministic and uses no
    /// random numbers.
    #[arg(long)]
    seedless: bool,
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn run(args: RunArgs) -> ExitCode {
    let cfg = match Config::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e.into()),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let results = match &args.scenario {
        Some(name) => vec![(name.clone(), run_scenario(&cfg, name, &args.out))],
        None => run_all(&cfg, &args.out),
    };
    let mut worst: Option<RunError> = None;
    for (name, result) in results {
        match result {
            Ok(m) => println!("{name}: {} files in {}", m.outputs.len() + 1, args.out.join(&name).display()),
            Err(e) => {
                eprintln!("error: {e}");
                if worst.as_ref().map_or(true, |w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    match worst {
        Some(e) => ExitCode::from(e.exit_code() as u8),
        None => ExitCode::SUCCESS,
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::List { config } => match Config::load(&config) {
            Ok(cfg) => {
                print!("{}", catalogue(&cfg));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e.into()),
        },
    }
}
