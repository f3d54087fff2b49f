//! Command-line front end: configuration, the shared pipeline and the
//! `train`, `tag`, `eval` and `sweep` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use clap::{Args, Parser, Subcommand};

pub use config::RunArgs;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "embtag",
    version,
    about = "Unsupervised POS induction with embedding emissions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model; writes model.json, trace.tsv, timing.tsv and config.resolved.
    Train(RunArgs),
    /// Decode a corpus with a saved model.
    Tag(RunArgs),
    /// Score predictions against gold tags.
    Eval(RunArgs),
    /// Train and score every embedding configuration for every seed.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated seeds; overrides `seeds` in the config file.
    #[arg(long)]
    pub seeds: Option<String>,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Tag(a) => commands::tag(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(&a.run, a.seeds.as_deref()),
    }
}
