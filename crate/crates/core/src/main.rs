use std::process::ExitCode;

fn main() -> ExitCode {
    blowup::cli::main_with(std::env::args_os())
}
