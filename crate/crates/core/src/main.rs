use std::process::ExitCode;

fn main() -> ExitCode {
    ecomech::cli::main()
}
