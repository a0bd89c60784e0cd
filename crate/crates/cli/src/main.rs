//! `steadypop` command-line frontend.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::{Done, Loaded, SimulateArgs, VerifyArgs};
use report::{Failure, RunReport};

#[derive(Parser)]
#[command(
    name = "steadypop",
    version,
    about = "Spectral bounds and steady states of age-structured population models"
)]
struct Cli {
    /// Suppress log lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file, or `catalog:<name>` for a bundled scenario.
    #[arg(long)]
    scenario: String,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral bound s(B_u) and net reproduction R(u) for a fixed environment.
    SpectralBound {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Environment density: an expression in `a`, or `uniform`.
        #[arg(long)]
        u: Option<String>,
    },
    /// Strictly positive steady state by damped fixed-point iteration.
    SteadyState {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Directory for steady_state.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time stepping with unit CFL.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        horizon: f64,
        /// Keep every k-th density as a snapshot.
        #[arg(long)]
        stride: Option<usize>,
        /// Start from this multiple of the computed steady state.
        #[arg(long, value_name = "FACTOR")]
        from_steady: Option<f64>,
        /// Directory for series.csv and snapshots.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized invariant suites; random scenarios unless --scenario is given.
    Verify {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the discrete generators of the scenario to --out.
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-solve over values of one numeric scenario field.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Dotted path such as `beta.params.amplitude` or `n`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        /// Directory for sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios, or print one.
    Catalog { name: Option<String> },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SpectralBound { .. } => "spectral-bound",
            Command::SteadyState { .. } => "steady-state",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
            Command::Sweep { .. } => "sweep",
            Command::Catalog { .. } => "catalog",
        }
    }

    fn scenario_source(&self) -> Option<&str> {
        match self {
            Command::SpectralBound { scenario, .. }
            | Command::SteadyState { scenario, .. }
            | Command::Simulate { scenario, .. }
            | Command::Sweep { scenario, .. } => Some(&scenario.scenario),
            Command::Verify { scenario, .. } => scenario.as_deref(),
            Command::Catalog { .. } => None,
        }
    }
}

fn configure_threads(quiet: bool) {
    let Ok(raw) = std::env::var("STEADYPOP_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                eprintln!("steadypop: cannot size the worker pool: {e}");
            }
        }
        _ if !quiet => eprintln!("steadypop: ignoring STEADYPOP_THREADS={raw:?}"),
        _ => {}
    }
}

fn run(command: &Command, loaded: Option<&Loaded>) -> Result<Done, Failure> {
    let need =
        || loaded.ok_or_else(|| Failure::input("InvalidArguments", "--scenario is required"));
    match command {
        Command::SpectralBound { u, .. } => commands::spectral_bound(need()?, u.as_deref()),
        Command::SteadyState { out, .. } => commands::steady_state(need()?, out.as_deref()),
        Command::Simulate {
            horizon,
            stride,
            from_steady,
            out,
            ..
        } => commands::simulate(
            need()?,
            SimulateArgs {
                horizon: *horizon,
                stride: *stride,
                from_steady: *from_steady,
                out: out.as_deref(),
            },
        ),
        Command::Verify {
            draws,
            seed,
            dump,
            out,
            ..
        } => commands::verify(
            loaded,
            VerifyArgs {
                draws: *draws,
                seed: *seed,
                dump: *dump,
                out: out.as_deref(),
            },
        ),
        Command::Sweep {
            param, values, out, ..
        } => commands::sweep(need()?, param, values, out.as_deref()),
        Command::Catalog { .. } => Ok(commands::catalog_list()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.quiet);

    if let Command::Catalog { name: Some(name) } = &cli.command {
        return match steadypop::scenario::catalog::source(name) {
            Some(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error[InvalidScenario]: unknown catalog scenario `{name}`");
                ExitCode::from(report::EXIT_INPUT as u8)
            }
        };
    }

    let started = Instant::now();
    let loaded = cli
        .command
        .scenario_source()
        .map(commands::load)
        .transpose();
    let (result, scenario) = match loaded {
        Ok(l) => (run(&cli.command, l.as_ref()), l.map(|l| l.info)),
        Err(f) => (Err(f), None),
    };
    let (report, failure) = match result {
        Ok(done) => {
            let error = done.failure.as_ref().map(Failure::info);
            let report = RunReport {
                command: cli.command.name(),
                scenario,
                outputs: done.outputs,
                warnings: done.warnings,
                error,
            };
            (report, done.failure)
        }
        Err(failure) => {
            let report = RunReport {
                command: cli.command.name(),
                scenario,
                outputs: Value::Null,
                warnings: Vec::new(),
                error: Some(failure.info()),
            };
            (report, Some(failure))
        }
    };

    match serde_json::to_string_pretty(&report) {
        Ok(text) => println!("{text}"),
        Err(e) => eprintln!("steadypop: cannot serialize report: {e}"),
    }
    if let Some(f) = &failure {
        let info = f.info();
        eprintln!("error[{}]: {}", info.code, info.message);
    }
    if !cli.quiet {
        eprintln!(
            "steadypop {}: {:.1} ms",
            cli.command.name(),
            started.elapsed().as_secs_f64() * 1e3
        );
    }
    match failure {
        Some(f) => ExitCode::from(f.exit_code() as u8),
        None => ExitCode::SUCCESS,
    }
}
