use std::path::PathBuf;
use std::process::ExitCode;

use bandit_router_core::harness::{
    cmd_compare, cmd_run, cmd_scenario_export, cmd_scenario_validate, parse_seed_offset, RunOptions,
    SEED_OFFSET_ENV,
};
use bandit_router_core::metrics::{render_table, TableFormat};
use bandit_router_core::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bandit-router", version)]
#[command(about = "Run and compare bandit routing policies on simulated retrieval backends")]
struct Cli {
    /// Worker threads for seed-parallel runs (default: one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory, overriding the config's output_dir
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config over all its seeds
    Run {
        config: PathBuf,

        /// Write the final model here (suffixed with _seedN when there are several seeds)
        #[arg(long)]
        save_model: Option<PathBuf>,

        /// Start every seed from this model snapshot
        #[arg(long)]
        load_model: Option<PathBuf>,
    },
    /// Run several configs on identical streams and merge their reports
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Export or validate scenarios
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Print a built-in scenario as JSON (or write it to --output)
    Export { name: String },
    /// Check a built-in scenario or scenario file and list every violation
    Validate { target: String },
}

fn run(cli: Cli) -> Result<(), Error> {
    let seed_offset = parse_seed_offset(std::env::var(SEED_OFFSET_ENV).ok().as_deref())?;
    let mut opts = RunOptions {
        jobs: cli.jobs,
        output: cli.output.clone(),
        seed_offset,
        ..RunOptions::default()
    };
    match cli.command {
        Command::Run {
            config,
            save_model,
            load_model,
        } => {
            opts.save_model = save_model;
            opts.load_model = load_model;
            let summary = cmd_run(&config, &opts)?;
            print!("{}", render_table(&summary.report, TableFormat::Markdown)?);
            println!("wrote {} traces to {}", summary.runs.len(), summary.output_dir.display());
        }
        Command::Compare { configs } => {
            let summary = cmd_compare(&configs, &opts)?;
            print!("{}", render_table(&summary.report, TableFormat::Markdown)?);
            println!("wrote report to {}", summary.output_dir.display());
        }
        Command::Scenario { action } => match action {
            ScenarioAction::Export { name } => {
                let json = cmd_scenario_export(&name)?;
                match &cli.output {
                    Some(path) => std::fs::write(path, json + "\n").map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?,
                    None => println!("{json}"),
                }
            }
            ScenarioAction::Validate { target } => {
                let violations = cmd_scenario_validate(&target)?;
                if violations.is_empty() {
                    println!("{target}: ok");
                } else {
                    for v in &violations {
                        println!("{target}: {v}");
                    }
                    return Err(Error::Config(format!("{} violation(s) in {target}", violations.len())));
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
