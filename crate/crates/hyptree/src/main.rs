use std::process::ExitCode;

fn main() -> ExitCode {
    hyptree::cli::run(std::env::args_os())
}
