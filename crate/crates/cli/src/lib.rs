//! File formats, report rendering and the `setmdp` command line on top of
//! `setmdp-core`.

pub mod commands;
pub mod error;
pub mod format;
pub mod output;

use clap::Parser;

pub use commands::{Cli, Command};
pub use error::{exit, CliError, CliResult};

/// Runs the command line on `args` (including the program name) and returns
/// the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
