//! Command-line front end: file formats, configuration and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

use clap::Parser;

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match config::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        config::Command::Simulate(a) => commands::configure_threads(&a.common).and_then(|_| commands::simulate(a)),
        config::Command::Fit(a) => commands::configure_threads(&a.common).and_then(|_| commands::fit(a)),
        config::Command::Select(a) => commands::configure_threads(&a.common).and_then(|_| commands::select_cmd(a)),
        config::Command::Evaluate(a) => commands::configure_threads(&a.common).and_then(|_| commands::evaluate(a)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
