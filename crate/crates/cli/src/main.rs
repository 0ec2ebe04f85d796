mod args;
mod commands;
mod error;
mod pipeline;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                std::process::exit(0);
            }
            ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                eprintln!("error: usage: missing subcommand; run amfuse --help");
                std::process::exit(2);
            }
            _ => {
                // Clap's message spans several lines; keep the first
                // meaningful one so errors stay machine-parsable.
                let text = e.to_string();
                let first = text
                    .lines()
                    .map(str::trim)
                    .find(|l| !l.is_empty())
                    .unwrap_or("invalid arguments");
                let first = first.strip_prefix("error: ").unwrap_or(first);
                eprintln!("error: usage: {first}");
                std::process::exit(2);
            }
        },
    };

    let result = match &cli.command {
        Command::GenSynth(a) => commands::gen_synth(a, cli.seed, cli.verbose),
        Command::TrainMap(a) => commands::train_map(a, cli.seed, cli.verbose),
        Command::Map(a) => commands::map_cmd(a, cli.verbose),
        Command::Fuse(a) => commands::fuse_cmd(a, cli.verbose),
        Command::Eval(a) => commands::eval_cmd(a, cli.verbose),
        Command::RunMatrix(a) => pipeline::cmd_run_matrix(a, cli.seed, cli.verbose),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
