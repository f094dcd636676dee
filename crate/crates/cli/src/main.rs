//! `cbc`: run control barrier corridor scenarios and write their logs.

mod commands;
mod emit;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use crate::commands::Status;
use crate::emit::Emitter;
use crate::scenario::{parse_value, set_dotted, Scenario};

#[derive(Debug, Parser)]
#[command(name = "cbc", version, about = "Control barrier corridor experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct RunArgs {
    /// Scenario TOML file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// `key=v1,v2,...` over a dotted scenario key; repeat for a product grid.
    #[arg(long)]
    sweep: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corridor polygons over a parameter grid at a fixed state.
    Corridor(RunArgs),
    /// Path following with per-step farthest-point goals.
    Follow(RunArgs),
    /// Frontier exploration of a world file.
    Explore(RunArgs),
    /// Output regulation of the double integrator with trust-region references.
    Lor(RunArgs),
}

pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

type Runner = fn(&Scenario, &mut Emitter) -> Result<Status, Failure>;

type Assignments = Vec<(String, toml::Value)>;

/// Every assignment combination of the sweeps, with its directory name.
fn sweep_grid(sweeps: &[String]) -> Result<Vec<(String, Assignments)>, Failure> {
    let mut grid = vec![(String::new(), Vec::new())];
    for sw in sweeps {
        let (key, values) = sw
            .split_once('=')
            .ok_or_else(|| Failure::Validation(anyhow!("sweep {sw:?} is not key=v1,v2,...")))?;
        let values: Vec<&str> = values.split(',').filter(|v| !v.is_empty()).collect();
        if key.is_empty() || values.is_empty() {
            return Err(Failure::Validation(anyhow!("sweep {sw:?} is not key=v1,v2,...")));
        }
        let mut next = Vec::new();
        for (name, assign) in &grid {
            for v in &values {
                let mut assign = assign.clone();
                assign.push((key.to_string(), parse_value(v)));
                let part = format!("{key}={v}");
                let name = if name.is_empty() {
                    part
                } else {
                    format!("{name}_{part}")
                };
                next.push((name, assign));
            }
        }
        grid = next;
    }
    Ok(grid)
}

fn run(args: &RunArgs, runner: Runner) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))
        .map_err(Failure::Validation)?;
    let table: toml::Table = text
        .parse()
        .with_context(|| format!("parsing {}", args.scenario.display()))
        .map_err(Failure::Validation)?;
    let base_dir = args.scenario.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    let grid = sweep_grid(&args.sweep)?;
    let mut violations = Vec::new();
    for (name, assign) in grid {
        let mut t = table.clone();
        for (k, v) in assign {
            set_dotted(&mut t, &k, v).map_err(Failure::Validation)?;
        }
        let scenario = Scenario::from_table(t, &base_dir).map_err(Failure::Validation)?;
        let dir = if name.is_empty() {
            args.out.clone()
        } else {
            args.out.join(&name)
        };
        let mut out = Emitter::new(&dir).map_err(Failure::Runtime)?;
        let status = runner(&scenario, &mut out)?;
        let n = out.self_check().map_err(Failure::Runtime)?;
        eprintln!("{}: {n} files written and re-parsed", out.root().display());
        if let Status::Violation(v) = status {
            violations.push(format!("{}: {v}", out.root().display()));
        }
    }
    Ok(violations)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&RunArgs, Runner) = match &cli.command {
        Command::Corridor(a) => (a, commands::corridor),
        Command::Follow(a) => (a, commands::follow),
        Command::Explore(a) => (a, commands::explore_cmd),
        Command::Lor(a) => (a, commands::lor),
    };
    match run(args, runner) {
        Ok(v) if v.is_empty() => ExitCode::SUCCESS,
        Ok(v) => {
            for line in v {
                eprintln!("violation: {line}");
            }
            ExitCode::from(3)
        }
        Err(f) => {
            match &f {
                Failure::Validation(e) => eprintln!("invalid input: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
