use std::process::ExitCode;

fn main() -> ExitCode {
    psa_cli::main_with(std::env::args_os())
}
