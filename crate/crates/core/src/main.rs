use std::process::ExitCode;

use clap::Parser;
use volswap_core::cli::{self, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let parsed = Cli::parse();
    let fail = |e: cli::CliError| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    };
    match cli::threads_from_env() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: could not size thread pool: {e}");
            }
        }
        Ok(None) => {}
        Err(e) => return fail(e),
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match cli::run(&parsed, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
