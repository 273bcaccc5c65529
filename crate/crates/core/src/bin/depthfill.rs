use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(depthfill::cli::run(std::env::args_os()))
}
