use std::process::ExitCode;

fn main() -> ExitCode {
    pegsearch::cli::main_with_args(std::env::args_os())
}
