use std::process::ExitCode;

fn main() -> ExitCode {
    quillen::cli::main_with_args(std::env::args_os())
}
