mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Pretrain(c) => commands::pretrain_cmd(c),
        Command::Train(c) => commands::train_cmd(c),
        Command::Experiment(c) => commands::experiment_cmd(c),
        Command::Sweep(c) => commands::sweep_cmd(c),
        Command::Export(c) => commands::export_cmd(c),
        Command::Validate(c) => commands::validate_cmd(c),
        Command::Synthesize(c) => commands::synthesize_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
