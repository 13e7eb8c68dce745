use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(aspace_bench::cli::run(std::env::args_os()))
}
