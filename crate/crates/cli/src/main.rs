use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "slotdp",
    version,
    about = "Delivery time slot pricing by exact dynamic programming"
)]
struct Cli {
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Also write the run manifest to this file.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Print the built-in example scenario.
    Example {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the booking horizon; write values and policy CSVs.
    Solve {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Value table CSV.
        #[arg(long)]
        out: PathBuf,
        /// Policy CSV; defaults to `<out stem>_policy.csv` next to `--out`.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Write the closed-form fixed point and its Bellman residual.
    FixedPoint {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve, then write the per-step discrete concavity measure.
    Concavity {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: PathBuf,
        /// Add this amount to V_t(state) before measuring. Needs --t and --state.
        #[arg(long, hide = true, allow_negative_numbers = true, requires_all = ["t", "state"])]
        corrupt_delta: Option<f64>,
        #[arg(long, hide = true)]
        t: Option<usize>,
        #[arg(long, hide = true, value_parser = commands::parse_state)]
        state: Option<commands::Orders>,
    },
    /// Print the arrival-probability bound and whether the scenario meets it.
    LambdaBound {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
    /// Print the optimal stage prices at one (t, state).
    Prices {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        t: usize,
        /// Comma-separated order counts, e.g. `1,0`.
        #[arg(long, value_parser = commands::parse_state)]
        state: commands::Orders,
    },
    /// Simulate the optimal policy and compare with the value function.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-replication profits CSV.
        #[arg(long)]
        profits_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    let start = Instant::now();
    let mut out = std::io::stdout().lock();
    let (name, run) = match cli.command {
        Command::Example { out: path } => ("example", commands::example(&mut out, path)?),
        Command::Solve {
            scenario,
            out: values,
            policy_out,
        } => (
            "solve",
            commands::solve(&mut out, &scenario.scenario, &values, policy_out)?,
        ),
        Command::FixedPoint {
            scenario,
            out: path,
        } => (
            "fixed-point",
            commands::fixed_point(&mut out, &scenario.scenario, &path)?,
        ),
        Command::Concavity {
            scenario,
            out: path,
            corrupt_delta,
            t,
            state,
        } => {
            let corruption = corrupt_delta.map(|d| {
                (
                    t.unwrap_or_default(),
                    state.map(|o| o.0).unwrap_or_default(),
                    d,
                )
            });
            (
                "concavity",
                commands::concavity(&mut out, &scenario.scenario, &path, corruption)?,
            )
        }
        Command::LambdaBound { scenario } => (
            "lambda-bound",
            commands::lambda_bound(&mut out, &scenario.scenario)?,
        ),
        Command::Prices { scenario, t, state } => (
            "prices",
            commands::prices(&mut out, &scenario.scenario, t, &state.0)?,
        ),
        Command::Simulate {
            scenario,
            reps,
            seed,
            profits_out,
        } => (
            "simulate",
            commands::simulate(&mut out, &scenario.scenario, reps, seed, profits_out)?,
        ),
    };
    let manifest = RunManifest::new(name, run, start.elapsed());
    manifest.emit(cli.manifest.as_deref())
}
