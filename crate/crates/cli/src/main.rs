use std::process::ExitCode;

use clap::Parser;
use hexembed_cli::{execute, init_threads, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with 2 on usage errors and 0 for --help
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| execute(&cli, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hexembed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
