use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use exgrad::harness::{self, config};
use exgrad::par::{with_jobs, Execution};
use exgrad::Error;

/// Extragradient-family experiments and theory checks.
#[derive(Parser)]
#[command(name = "exgrad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file and write one CSV per experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for seed-level parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a verification suite, or `all`.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// List known identifiers.
    List { what: ListKind },
    /// Print δ and σ*² for each experiment's problem and sampling scheme.
    ErConstants {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ListKind {
    Problems,
    Algorithms,
    Policies,
    Schemes,
    Suites,
}

const EXIT_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_CHECK),
    }
}

/// Writes one stdout line; a closed pipe (e.g. `| head`) is not an error.
macro_rules! out {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    };
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, jobs } => {
            let cfg = match harness::load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let res = with_jobs(jobs, || harness::run_config(&cfg, Execution::best()));
            let res = match res {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            if let Err(e) = harness::write_results(&out, &res) {
                return fail(&e);
            }
            for (name, rows) in &res {
                log::info!("{name}: {} rows", rows.len());
                out!("{}", out.join(format!("{name}.csv")).display());
            }
            ExitCode::SUCCESS
        }
        Command::Verify { suite } => {
            let checks = match harness::verify_theory(&suite) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            out!("suite,check,result,detail");
            for c in &checks {
                let detail = c.detail.replace('"', "'");
                out!("{},{},{},\"{detail}\"", c.suite, c.name, if c.passed { "pass" } else { "FAIL" });
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            eprintln!("{} checks, {failed} failed", checks.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK)
            }
        }
        Command::List { what } => {
            let names: Vec<&str> = match what {
                ListKind::Problems => config::PROBLEMS.to_vec(),
                ListKind::Algorithms => config::ALGORITHMS.to_vec(),
                ListKind::Policies => config::POLICIES.to_vec(),
                ListKind::Schemes => config::SCHEMES.to_vec(),
                ListKind::Suites => harness::SUITES.iter().map(|s| s.name).collect(),
            };
            for n in names {
                out!("{n}");
            }
            ExitCode::SUCCESS
        }
        Command::ErConstants { config } => {
            let cfg = match harness::load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            out!("experiment,delta,sigma_star_sq");
            for (name, c) in &cfg {
                if let Err(e) = c.validate(name) {
                    return fail(&e);
                }
                if c.is_network() {
                    eprintln!("{name}: skipped, client networks have no single-operator ER constants");
                    continue;
                }
                match harness::er_constants_for(name, c) {
                    Ok(er) => {
                        let s = er.sigma_star_sq.map_or("unknown".to_string(), |v| format!("{v:e}"));
                        out!("{name},{:e},{s}", er.delta);
                    }
                    Err(e) => return fail(&e),
                }
            }
            ExitCode::SUCCESS
        }
    }
}
