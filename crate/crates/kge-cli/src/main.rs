//! `kge` — reproducible experiments over the embedding engine.
//!
//! Subcommands: generate, train, eval, export, finetune. One run writes one
//! output directory with exactly one manifest; reruns with the same seeds
//! under --deterministic reproduce report artifacts byte for byte.

mod args;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use args::CliArgs;

const USAGE: &str = "\
usage: kge <command> [flags]

commands:
  generate  --config FILE --out DIR [--seed N] [--deterministic]
  train     --config FILE --graph DIR --out DIR [--seed N] [--deterministic]
  eval      --config FILE --graph DIR --eval-edges FILE --checkpoint FILE...
            --out DIR [--compare] [--seed N] [--deterministic]
  export    --checkpoint FILE --graph DIR --out DIR [--anchor-space]
  finetune  --config FILE --graph DIR --checkpoint FILE
            --mode {frozen,direct,attention} --out DIR [--seed N] [--deterministic]

environment:
  KGE_LOG = quiet | info | debug   (log verbosity; default info)
";

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = argv.first() else {
        eprint!("{USAGE}");
        return ExitCode::from(2);
    };
    let parsed = match CliArgs::parse(&argv[1..]) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match command.as_str() {
        "generate" => commands::generate::run(&parsed),
        "train" => commands::train::run(&parsed),
        "eval" => commands::eval::run(&parsed),
        "export" => commands::export::run(&parsed),
        "finetune" => commands::finetune::run(&parsed),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            return ExitCode::SUCCESS;
        }
        other => {
            eprintln!("error: unknown command `{other}`\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
