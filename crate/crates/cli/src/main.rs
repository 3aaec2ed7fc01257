use std::process::ExitCode;

fn main() -> ExitCode {
    tdesim_cli::run(std::env::args_os().collect())
}
