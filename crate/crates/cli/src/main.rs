use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pve_lab::verify::Suite;
use pve_lab::{capacity, model_space, trajectories, verify, Config, LabResult};

#[derive(Parser)]
#[command(name = "pve-lab", version, about = "Tabular value-equivalence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (flat key = value with [sections]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides `seed` in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $PVE_LAB_OUT/<command>-<config hash>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an output directory written with a different config.
    #[arg(long)]
    force: bool,
    /// Worker threads for independent training runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train order-k VE and PVE model populations and project them with PCA.
    ModelSpace(Common),
    /// Train rank-limited PVE models on deterministic and stochastic policy families.
    CapacitySweep(Common),
    /// Run the fixture checks and randomized bound suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// props, bounds or all.
        #[arg(long)]
        suite: Option<String>,
        /// Random tuples per bound suite.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Sample trajectories of the optimal policy in the environment or a model file.
    Trajectories(Common),
}

fn load(common: &Common) -> LabResult<(Config, u64)> {
    let config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    config.check_keys("", &["seed"])?;
    let seed = match common.seed {
        Some(s) => s,
        None => config.value("", "seed", 0u64)?,
    };
    Ok((config, seed))
}

fn run(cli: Cli) -> LabResult<bool> {
    match cli.command {
        Command::ModelSpace(c) => {
            let (config, seed) = load(&c)?;
            let dir = model_space::cmd_model_space(&config, seed, c.out.as_deref(), c.force, c.workers)?;
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Command::CapacitySweep(c) => {
            let (config, seed) = load(&c)?;
            let dir = capacity::cmd_capacity(&config, seed, c.out.as_deref(), c.force, c.workers)?;
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Command::Verify { common, suite, count } => {
            let (config, seed) = load(&common)?;
            let suite = suite.as_deref().map(Suite::parse).transpose()?;
            let (dir, result) = verify::cmd_verify(&config, seed, suite, count, common.out.as_deref(), common.force)?;
            print!("{}", result.report);
            println!("wrote {}", dir.display());
            Ok(result.passed())
        }
        Command::Trajectories(c) => {
            let (config, seed) = load(&c)?;
            let (dir, result) = trajectories::cmd_trajectories(&config, seed, c.out.as_deref(), c.force)?;
            println!(
                "{} transitions, {} non-adjacent; wrote {}",
                result.transitions,
                result.non_adjacent,
                dir.display()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
