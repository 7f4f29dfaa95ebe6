mod commands;
mod config;
mod document;
mod error;
mod plot;
mod registry;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::Context;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "hybrid-orbit",
    version,
    about = "Simulate and analyze hybrid systems near periodic orbits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the model and write a CSV trace and a JSON event log.
    Simulate(RunArgs),
    /// Periodic-orbit analysis on the configured section.
    Analyze {
        #[command(subcommand)]
        verb: AnalyzeVerb,
    },
    /// Controller synthesis.
    Control {
        #[command(subcommand)]
        verb: ControlVerb,
    },
    /// Model registry.
    Models {
        #[command(subcommand)]
        verb: ModelsVerb,
    },
}

#[derive(Subcommand)]
enum AnalyzeVerb {
    /// Fixed point, multipliers and rank profile of the return map.
    Poincare(RunArgs),
    /// Exact or approximate reduction verdict.
    Reduce(RunArgs),
    /// Asymptotic phase along the orbit and isochron samples.
    Phase(RunArgs),
}

#[derive(Subcommand)]
enum ControlVerb {
    /// Deadbeat law through the configured input parameters.
    Deadbeat(RunArgs),
    /// Polyped body versus the standalone template.
    Embed(RunArgs),
}

#[derive(Subcommand)]
enum ModelsVerb {
    /// Print every registered model with its parameters.
    List,
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
    /// Overrides the configuration's sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn run_with(args: &RunArgs, command: &str, f: fn(&mut Context) -> CliResult<()>) -> CliResult<()> {
    let mut ctx = Context::new(args)?;
    f(&mut ctx)?;
    let summary = json!({
        "schema_version": report::SCHEMA_VERSION,
        "status": "ok",
        "command": command,
        "outputs": ctx.out.written,
    });
    println!("{summary}");
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => run_with(&a, "simulate", commands::simulate),
        Command::Analyze {
            verb: AnalyzeVerb::Poincare(a),
        } => run_with(&a, "analyze poincare", commands::analyze_poincare),
        Command::Analyze {
            verb: AnalyzeVerb::Reduce(a),
        } => run_with(&a, "analyze reduce", commands::analyze_reduce),
        Command::Analyze {
            verb: AnalyzeVerb::Phase(a),
        } => run_with(&a, "analyze phase", commands::analyze_phase),
        Command::Control {
            verb: ControlVerb::Deadbeat(a),
        } => run_with(&a, "control deadbeat", commands::control_deadbeat),
        Command::Control {
            verb: ControlVerb::Embed(a),
        } => run_with(&a, "control embed", commands::control_embed),
        Command::Models {
            verb: ModelsVerb::List,
        } => {
            let text = serde_json::to_string_pretty(&registry::describe())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => return fail(CliError::Usage(e.to_string().trim().to_string())),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
