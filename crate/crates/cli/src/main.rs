//! `mesc`: generate synthetic data, solve or learn affinities, cluster and
//! evaluate, all through files.

mod commands;
mod config;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches};

use commands::CliError;
use config::{Command, RawConfig, RunConfig, KEYS};

/// Hyphenated spellings accepted for underscored keys.
const HYPHENATED: &[(&str, &str)] = &[
    ("learning_rate", "learning-rate"),
    ("final_learning_rate", "final-learning-rate"),
    ("zero_diagonal", "zero-diagonal"),
    ("pretrain_steps", "pretrain-steps"),
    ("finetune_steps", "finetune-steps"),
    ("subspace_dim", "subspace-dim"),
    ("ambient_dim", "ambient-dim"),
    ("image_side", "image-side"),
];

fn cli() -> clap::Command {
    let mut root = clap::Command::new("mesc")
        .about("Subspace clustering with a maximum-entropy self-expressive affinity")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (_, name, about) in Command::ALL {
        let mut sub = clap::Command::new(name).about(about).arg(
            Arg::new("config")
                .long("config")
                .visible_alias("spec")
                .value_name("PATH")
                .value_parser(value_parser!(PathBuf))
                .help("file of `key = value` lines; flags take precedence"),
        );
        for &(key, help) in KEYS {
            let mut arg = Arg::new(key).long(key).value_name("VALUE").help(help);
            if let Some(&(_, alias)) = HYPHENATED.iter().find(|(k, _)| *k == key) {
                arg = arg.alias(alias);
            }
            sub = sub.arg(arg);
        }
        root = root.subcommand(sub);
    }
    root
}

fn resolve(command: Command, matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut raw = match matches.get_one::<PathBuf>("config") {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for &(key, _) in KEYS {
        if let Some(value) = matches.get_one::<String>(key) {
            raw.set_flag(key, value)?;
        }
    }
    Ok(RunConfig::resolve(command, &raw)?)
}

fn run(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let command = Command::from_name(name).expect("registered subcommand");
    let outcome = resolve(command, sub).and_then(|cfg| commands::run(&cfg));
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mesc {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn main() -> ExitCode {
    run(std::env::args_os())
}
