use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accelfront_cli::{members, run_scenario, run_sweep, Command, Loaded, SweepError};
use clap::{Parser, Subcommand};

/// Exit codes: 0 pass, 1 diagnostic failure, 2 usage or validation error.
#[derive(Parser)]
#[command(
    name = "accelfront",
    version,
    about = "Front propagation laboratory for heavy-tailed nonlocal dispersal"
)]
struct Cli {
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and parallel diagnostics.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the random fields of the sampled checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve the scenario and run every diagnostic it lists.
    Simulate { scenario: PathBuf },
    /// Predicted fronts against the closed forms.
    Frontlaw { scenario: PathBuf },
    /// Kesten bounds for the `[kesten]` density.
    Kesten { scenario: PathBuf },
    /// Sub-solution residuals.
    Subsol { scenario: PathBuf },
    /// Evolve and check the measured front against the predicted one.
    Sandwich { scenario: PathBuf },
    /// Run scenarios and generator files in parallel.
    Sweep { scenarios: Vec<PathBuf> },
    /// Sampled checks of the reaction and kernel hypotheses.
    CheckAssumptions { scenario: PathBuf },
}

const FAILURE: u8 = 1;
const USAGE: u8 = 2;

fn single(path: &Path, cmd: Command, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let loaded = match Loaded::read(path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(USAGE);
        }
    };
    if let Err(e) = cmd.check(&loaded.scenario) {
        eprintln!("{}: {e}", path.display());
        return ExitCode::from(USAGE);
    }
    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&loaded.scenario.name));
    match run_scenario(&loaded, cmd, &dir, seed) {
        Ok(o) => {
            for (k, v) in &o.verdicts {
                println!("{k}: {v}");
            }
            for (k, e) in &o.errors {
                eprintln!("{k}: error: {e}");
            }
            println!("{}: {} ({})", o.name, o.status.name(), dir.display());
            if o.status.is_failure() {
                ExitCode::from(FAILURE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            ExitCode::from(FAILURE)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot start the thread pool: {e}");
            return ExitCode::from(FAILURE);
        }
    }
    let (out, seed) = (cli.out, cli.seed);
    match cli.command {
        Cmd::Simulate { scenario } => single(&scenario, Command::Simulate, out, seed),
        Cmd::Frontlaw { scenario } => single(&scenario, Command::Frontlaw, out, seed),
        Cmd::Kesten { scenario } => single(&scenario, Command::Kesten, out, seed),
        Cmd::Subsol { scenario } => single(&scenario, Command::Subsol, out, seed),
        Cmd::Sandwich { scenario } => single(&scenario, Command::Sandwich, out, seed),
        Cmd::CheckAssumptions { scenario } => single(&scenario, Command::CheckAssumptions, out, seed),
        Cmd::Sweep { scenarios } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("out").join("sweep"));
            let report = members(&scenarios).and_then(|m| run_sweep(m, &dir, seed));
            match report {
                Ok(r) => {
                    for row in &r.rows {
                        println!("{}: {} {}", row.member, row.status, row.detail);
                    }
                    println!("sweep: {} ({})", if r.pass { "pass" } else { "fail" }, dir.display());
                    if r.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(FAILURE)
                    }
                }
                Err(e @ (SweepError::Empty | SweepError::Config { .. })) => {
                    eprintln!("{e}");
                    ExitCode::from(USAGE)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(FAILURE)
                }
            }
        }
    }
}
