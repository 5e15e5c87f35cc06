use std::process::ExitCode;

use clap::Parser;
use flowlag::cli::{self, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let parsed = Cli::parse();
    let code = cli::init_threads()
        .and_then(|()| cli::run(parsed))
        .unwrap_or_else(|e| {
            eprintln!("error: {e}");
            e.exit_code()
        });
    ExitCode::from(code as u8)
}
