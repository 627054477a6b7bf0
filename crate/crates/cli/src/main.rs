//! `cvarcert` — risk certificates and event-triggered control experiments
//! for discrete-time linear stochastic systems.

use clap::{Args, Parser, Subcommand};
use cvarcert_cli::commands::{cmd_certify, cmd_simulate, cmd_sweep, parse_grid, SweepParameter};
use cvarcert_cli::config::{paper_example, Experiment, ExperimentConfig, TriggerConfig};
use cvarcert_cli::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cvarcert",
    version,
    about = "Worst-case CVaR certificates and event-triggered control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute certificates and maximal trigger thresholds; writes report.json
    Certify(CommonArgs),
    /// Run seeded trajectories and a Monte Carlo ensemble; writes
    /// trajectory_<seed>.csv and summary.json
    Simulate(SimulateArgs),
    /// Sweep r, epsilon, or sigma over a grid; writes sweep.csv
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML)
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment preset
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo runs
    #[arg(long)]
    runs: Option<usize>,
    /// Override the ball radius r
    #[arg(long)]
    radius: Option<f64>,
    /// Override the trigger: cor1|cor2|cor3|cor4|sigma=VALUE
    #[arg(long)]
    trigger: Option<String>,
    /// Override the sampler: gaussian|student_t|uniform|two_point
    #[arg(long)]
    sampler: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also run the every-step feedback baseline
    #[arg(long)]
    baseline_periodic: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which quantity to sweep: r|epsilon|sigma
    #[arg(long)]
    param: String,
    /// Grid values: v1,v2,... or start:end:count
    #[arg(long)]
    grid: String,
}

fn parse_trigger_flag(text: &str) -> Result<TriggerConfig, CliError> {
    match text {
        "cor1" | "cor2" | "cor3" | "cor4" => Ok(TriggerConfig {
            corollary: Some(text[3..].parse().unwrap()),
            sigma: None,
            kind: None,
        }),
        _ => {
            let value = text.strip_prefix("sigma=").ok_or_else(|| {
                CliError::InvalidConfig(format!(
                    "unknown trigger {text:?}; expected cor1..cor4 or sigma=VALUE"
                ))
            })?;
            let sigma: f64 = value.parse().map_err(|_| {
                CliError::InvalidConfig(format!("bad trigger threshold {value:?}"))
            })?;
            Ok(TriggerConfig {
                corollary: None,
                sigma: Some(sigma),
                kind: None,
            })
        }
    }
}

fn load_experiment(args: &CommonArgs, baseline_periodic: bool) -> Result<Experiment, CliError> {
    let mut config: ExperimentConfig = match (&args.config, &args.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) if name == "paper-example" => paper_example(),
        (None, Some(name)) => {
            return Err(CliError::InvalidConfig(format!(
                "unknown preset {name:?}; available: paper-example"
            )))
        }
        (None, None) => {
            return Err(CliError::InvalidConfig(
                "give --config PATH or --preset paper-example".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(radius) = args.radius {
        config.radius = radius;
    }
    if let Some(trigger) = &args.trigger {
        config.trigger = parse_trigger_flag(trigger)?;
    }
    if let Some(sampler) = &args.sampler {
        config.sampler.kind = sampler.clone();
    }
    config.baseline_periodic |= baseline_periodic;
    config.build()
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Certify(args) => {
            let exp = load_experiment(&args, false)?;
            cmd_certify(&exp, &args.out)?;
        }
        Command::Simulate(args) => {
            let exp = load_experiment(&args.common, args.baseline_periodic)?;
            cmd_simulate(&exp, &args.common.out)?;
        }
        Command::Sweep(args) => {
            let exp = load_experiment(&args.common, false)?;
            let parameter: SweepParameter = args.param.parse()?;
            let grid = parse_grid(&args.grid)?;
            cmd_sweep(&exp, parameter, &grid, &args.common.out)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(error) = run() {
        println!("{}", error.to_json());
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
