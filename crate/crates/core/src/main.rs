use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(deconv_cdf::cli::run_from_args(std::env::args_os()))
}
