use std::process::ExitCode;

use clap::Parser;
use waveguide_qkd::cli::{error_kind, run, Cli};
use waveguide_qkd::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            let code = if matches!(e.root(), Error::ConfigParse { .. }) { 2 } else { 1 };
            ExitCode::from(code)
        }
    }
}
