mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{RunContext, UsageError};

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = RunContext {
        data_dir: cli.data_dir,
        manifest: cli.manifest,
    };
    match &cli.command {
        Command::Filter(a) => commands::filter(&ctx, a),
        Command::Curate(a) => commands::curate_cmd(&ctx, a),
        Command::Train(a) => commands::train_cmd(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Alpha(a) => commands::alpha(&ctx, a),
        Command::Serve(a) => commands::serve(&ctx, a),
        Command::Parse(a) => commands::parse(&ctx, a),
        Command::Strip(a) => commands::strip(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Stats(a) => commands::stats_cmd(&ctx, a),
        Command::Split(a) => commands::split(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
