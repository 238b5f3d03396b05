use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(homon::cli::run(std::env::args_os()))
}
