use std::process::ExitCode;

fn main() -> ExitCode {
    ccgnn::cli::run(std::env::args_os())
}
