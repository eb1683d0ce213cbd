use std::process::ExitCode;

fn main() -> ExitCode {
    driftqa_cli::run(std::env::args_os())
}
