//! Binary entry point: parse, dispatch, map errors to exit codes.

mod args;
mod commands;
mod config;
mod error;
mod manifest;
mod providers;

use clap::Parser;
use std::process::ExitCode;

async fn dispatch(cli: args::Cli) -> Result<u8, error::CliError> {
    match cli.command {
        args::Command::Evaluate(a) => commands::batch(commands::BatchKind::Evaluate, a).await,
        args::Command::Refine(a) => commands::batch(commands::BatchKind::Refine, a).await,
        args::Command::SynthBad(a) => commands::synth_bad(a).await,
        args::Command::Report(a) => commands::report_cmd(a),
        args::Command::ReplayVerify(a) => commands::replay_verify(a).await,
    }
}

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime construction cannot fail with default settings");
    match runtime.block_on(dispatch(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
