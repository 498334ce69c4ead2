use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(maskseg::cli::dispatch(std::env::args()) as u8)
}
