mod args;
mod commands;
mod failure;
mod report;
mod source;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use failure::{Failure, EXIT_USAGE};

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("LOGSOB_THREADS") else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| Failure::usage(format!("LOGSOB_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::internal(e.to_string()))
}

fn run(cli: Cli, argv: &[String]) -> Result<i32, Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Verify(a) => commands::verify(a, argv),
        Command::AbpAudit(a) => commands::abp_audit(a, argv),
        Command::Optimize(a) => commands::optimize(a, argv),
        Command::Identities(a) => commands::identities(a, argv),
        Command::Generate(a) => commands::generate_cmd(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_USAGE
                    } else {
                        0
                    }
                }
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let code = match run(cli, &argv) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    std::process::exit(code);
}
